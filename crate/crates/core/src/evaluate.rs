//! High-level evaluation on the held-out split: generation metrics for the
//! denoiser, code metrics for the predictor, ranking AUC for the expert,
//! and the interpolation sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::MotionDenoiser;
use crate::error::{Error, Result};
use crate::lip_expert::{sample_sync_pair, FaceBasis, LipExpert};
use crate::metrics;
use crate::params::ParameterStore;
use crate::sampling::{generate_sequence, SampleMode};
use crate::schedule::DiffusionSchedule;
use crate::style_predictor::StylePredictor;
use crate::synth::Dataset;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Held-out clips to evaluate (capped by availability).
    pub clip_cap: usize,
    /// Frames generated per clip.
    pub frame_cap: usize,
    pub omega: f64,
    pub ddim_steps: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            clip_cap: 24,
            frame_cap: 48,
            omega: 1.0,
            ddim_steps: 10,
            seed: 4242,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenoiserEval {
    pub sa: f64,
    pub sync: f64,
    pub md: f64,
    pub clips: usize,
}

/// Generate motion for held-out clips (style from the clip's own reference
/// window) and score it with the oracles.
pub fn evaluate_denoiser(
    dataset: &Dataset,
    den: &MotionDenoiser,
    store: &ParameterStore<f32>,
    sched: &DiffusionSchedule,
    opt: &EvalOptions,
) -> Result<DenoiserEval> {
    let test_idx = dataset.test_indices();
    if test_idx.is_empty() {
        return Err(Error::invalid("evaluate_denoiser", "empty held-out split"));
    }
    let take = opt.clip_cap.min(test_idx.len());
    let mut motions = Vec::with_capacity(take);
    let mut gts = Vec::with_capacity(take);
    let mut audios = Vec::with_capacity(take);
    let mut labels = Vec::with_capacity(take);
    for (k, &idx) in test_idx.iter().take(take).enumerate() {
        let clip = &dataset.clips[idx];
        let frames = opt.frame_cap.min(clip.len());
        let audio32 = clip.audio.cast::<f32>();
        let ref_len = 64.min(clip.motion.rows());
        let reference = {
            let c = clip.motion.cols();
            Tensor::matrix(ref_len, c, clip.motion.data()[..ref_len * c].to_vec()).cast::<f32>()
        };
        let code = den.style_code_tensor(store, &reference)?;
        let audio_head = {
            let c = audio32.cols();
            Tensor::matrix(frames, c, audio32.data()[..frames * c].to_vec())
        };
        let gen = generate_sequence(
            den,
            store,
            sched,
            &audio_head,
            &code,
            opt.omega,
            SampleMode::Ddim(opt.ddim_steps),
            crate::synth::derive_seed(opt.seed, &[k as u64]),
        )?;
        let gen64 = gen.cast::<f64>();
        let gt = {
            let c = clip.motion.cols();
            Tensor::matrix(frames, c, clip.motion.data()[..frames * c].to_vec())
        };
        let audio_head64 = audio_head.cast::<f64>();
        motions.push(gen64);
        gts.push(gt);
        audios.push(audio_head64);
        labels.push(clip.style);
    }
    Ok(DenoiserEval {
        sa: metrics::metric_sa(&dataset.world, &motions, &labels)?,
        sync: metrics::metric_sync(&dataset.world, &audios, &motions)?,
        md: metrics::metric_md(&motions, &gts)?,
        clips: take,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct PredictorEval {
    pub scd: f64,
    pub sa: f64,
    pub md: f64,
    pub clips: usize,
}

/// Sample style codes for held-out audio (identity from a different clip of
/// the same speaker) and score them: SCD against the reference-derived
/// codes, SA by nearest train-split style centroid, MD through generation.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_predictor(
    dataset: &Dataset,
    den: &MotionDenoiser,
    den_store: &ParameterStore<f32>,
    predictor: &StylePredictor,
    pred_store: &ParameterStore<f32>,
    sched: &DiffusionSchedule,
    opt: &EvalOptions,
    audio_cap: usize,
    generate_md: bool,
) -> Result<PredictorEval> {
    let test_idx = dataset.test_indices();
    if test_idx.is_empty() {
        return Err(Error::invalid("evaluate_predictor", "empty held-out split"));
    }

    // Style centroids from the training split's reference codes.
    let train_idx = dataset.train_indices();
    let mut train_codes = Vec::with_capacity(train_idx.len());
    let mut train_labels = Vec::with_capacity(train_idx.len());
    for &idx in &train_idx {
        let code = den.style_code_tensor(den_store, &dataset.clips[idx].motion.cast::<f32>())?;
        train_codes.push(code.cast::<f64>());
        train_labels.push(dataset.records[idx].style);
    }
    let centroids = metrics::class_centroids(&train_codes, &train_labels, dataset.world.cfg.styles);

    let take = opt.clip_cap.min(test_idx.len());
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::derive_seed(opt.seed, &[0x51]));
    let mut predicted = Vec::with_capacity(take);
    let mut reference = Vec::with_capacity(take);
    let mut hits = 0usize;
    let mut gen_motions = Vec::new();
    let mut gt_motions = Vec::new();
    for (k, &idx) in test_idx.iter().take(take).enumerate() {
        let clip = &dataset.clips[idx];
        let rec = &dataset.records[idx];
        let audio32 = clip.audio.cast::<f32>();
        let frames = audio_cap.min(audio32.rows());
        let audio_head = {
            let c = audio32.cols();
            Tensor::matrix(frames, c, audio32.data()[..frames * c].to_vec())
        };
        // cross-identity portrait: a different clip of the same speaker
        let sibs = dataset.sibling_clips(idx);
        let id_source = if sibs.is_empty() {
            idx
        } else {
            sibs[rng.gen_range(0..sibs.len())]
        };
        let identity = Tensor::row(
            dataset.records[id_source]
                .identity
                .iter()
                .map(|&v| v as f32)
                .collect(),
        );
        let mut sample_rng =
            ChaCha8Rng::seed_from_u64(crate::synth::derive_seed(opt.seed, &[0x52, k as u64]));
        let code = predictor.sample_style(pred_store, &audio_head, &identity, sched, &mut sample_rng)?;
        let ref_code = den.style_code_tensor(den_store, &clip.motion.cast::<f32>())?;
        if metrics::nearest_centroid(&code.cast::<f64>(), &centroids) == rec.style {
            hits += 1;
        }
        if generate_md {
            let gen_frames = opt.frame_cap.min(clip.len());
            let gen_audio = {
                let c = audio32.cols();
                Tensor::matrix(gen_frames, c, audio32.data()[..gen_frames * c].to_vec())
            };
            let gen = generate_sequence(
                den,
                den_store,
                sched,
                &gen_audio,
                &code,
                opt.omega,
                SampleMode::Ddim(opt.ddim_steps),
                crate::synth::derive_seed(opt.seed, &[0x53, k as u64]),
            )?;
            gen_motions.push(gen.cast::<f64>());
            let c = clip.motion.cols();
            gt_motions.push(Tensor::matrix(
                gen_frames,
                c,
                clip.motion.data()[..gen_frames * c].to_vec(),
            ));
        }
        predicted.push(code.cast::<f64>());
        reference.push(ref_code.cast::<f64>());
    }
    let md = if generate_md {
        metrics::metric_md(&gen_motions, &gt_motions)?
    } else {
        f64::NAN
    };
    Ok(PredictorEval {
        scd: metrics::metric_scd(&predicted, &reference)?,
        sa: hits as f64 / take as f64,
        md,
        clips: take,
    })
}

/// Held-out sync/offsync ranking AUC of a trained expert.
pub fn expert_auc(
    dataset: &Dataset,
    expert: &LipExpert,
    store: &ParameterStore<f32>,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let basis = FaceBasis::<f32>::from_store(store)?;
    let test_idx = dataset.test_indices();
    let n = expert.cfg.clip_len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    while pos.len() < pairs || neg.len() < pairs {
        let idx = test_idx[rng.gen_range(0..test_idx.len())];
        let clip = &dataset.clips[idx];
        let pair = sample_sync_pair(clip.len(), n, &mut rng)?;
        if (pair.synchronous && pos.len() >= pairs) || (!pair.synchronous && neg.len() >= pairs) {
            continue;
        }
        let audio32 = clip.audio.cast::<f32>();
        let motion32 = clip.motion.cast::<f32>();
        let fa = audio32.cols();
        let audio = Tensor::matrix(
            n,
            fa,
            audio32.data()[pair.audio_start * fa..(pair.audio_start + n) * fa].to_vec(),
        );
        let c = motion32.cols();
        let motion = Tensor::matrix(
            n,
            c,
            motion32.data()[pair.motion_start * c..(pair.motion_start + n) * c].to_vec(),
        );
        let ref_len = 64.min(motion32.rows());
        let reference = Tensor::matrix(ref_len, c, motion32.data()[..ref_len * c].to_vec());
        let p = expert.score_clip(store, &basis, &audio, &motion, &reference)?;
        if pair.synchronous {
            pos.push(p);
        } else {
            neg.push(p);
        }
    }
    Ok(metrics::ranking_auc(&pos, &neg))
}

/// Residuals toward two archetypes across an interpolation sweep.
/// Returns one `(residual_toward_a, residual_toward_b)` pair per alpha.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_sweep(
    dataset: &Dataset,
    den: &MotionDenoiser,
    store: &ParameterStore<f32>,
    sched: &DiffusionSchedule,
    style_a: usize,
    style_b: usize,
    alphas: &[f64],
    frames: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    // reference clips for the two styles, audio from a held-out clip
    let pick = |style: usize| -> Result<usize> {
        (0..dataset.len())
            .find(|&i| dataset.records[i].style == style)
            .ok_or_else(|| Error::invalid("interpolation_sweep", format!("no clip of style {style}")))
    };
    let ia = pick(style_a)?;
    let ib = pick(style_b)?;
    let code_of = |idx: usize| -> Result<Tensor<f32>> {
        let m = dataset.clips[idx].motion.cast::<f32>();
        let ref_len = 64.min(m.rows());
        let c = m.cols();
        den.style_code_tensor(store, &Tensor::matrix(ref_len, c, m.data()[..ref_len * c].to_vec()))
    };
    let code_a = code_of(ia)?;
    let code_b = code_of(ib)?;
    let audio_idx = dataset.test_indices().first().copied().unwrap_or(ia);
    let audio32 = dataset.clips[audio_idx].audio.cast::<f32>();
    let frames = frames.min(audio32.rows());
    let c = audio32.cols();
    let audio = Tensor::matrix(frames, c, audio32.data()[..frames * c].to_vec());

    let mut out = Vec::with_capacity(alphas.len());
    for (k, &alpha) in alphas.iter().enumerate() {
        let code = crate::sampling::interpolate_styles(&code_a, &code_b, alpha)?;
        let motion = generate_sequence(
            den,
            store,
            sched,
            &audio,
            &code,
            1.0,
            SampleMode::Ddim(10),
            crate::synth::derive_seed(seed, &[0x17, k as u64]),
        )?;
        let m64 = motion.cast::<f64>();
        let ra = dataset.world.style_residual(&m64, dataset.world.archetype(style_a));
        let rb = dataset.world.style_residual(&m64, dataset.world.archetype(style_b));
        out.push((ra, rb));
    }
    Ok(out)
}
