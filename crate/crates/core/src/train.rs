//! Staged training: (1) lip expert pretraining, (2) denoiser training with
//! classifier-free dropout and the frozen expert, (3) style predictor
//! training against the frozen style encoder.
//!
//! Every stage samples its batches from a seeded stream on the main thread
//! and computes per-sample gradients in parallel; gradients are reduced in
//! sample order, so runs are bit-reproducible for a fixed seed and thread
//! count has no effect on results.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::denoiser::MotionDenoiser;
use crate::error::{Error, Result};
use crate::lip_expert::{sample_sync_pair, FaceBasis, LipExpert, PROB_EPS};
use crate::nn::{apply_bn_updates, Bind};
use crate::optim::{accumulate_grads, clip_global_norm, scale_grads, Adam};
use crate::params::ParameterStore;
use crate::schedule::DiffusionSchedule;
use crate::style_predictor::StylePredictor;
use crate::synth::{window_rows, Dataset};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Style-reference starts are quantized to this grid so frozen-expert style
/// features can be cached across draws.
const REF_START_GRID: usize = 32;

/// Per-step loss curve rows: (step, term, value).
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<(usize, String, f64)>,
}

impl TrainLog {
    pub fn push(&mut self, step: usize, term: &str, value: f64) {
        self.rows.push((step, term.to_string(), value));
    }

    pub fn values(&self, term: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|(_, t, _)| t == term)
            .map(|(s, _, v)| (*s, *v))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(s, t, v)| vec![s.to_string(), t.clone(), format!("{v}")])
            .collect();
        crate::io::write_csv(path, &["step", "term", "value"], &rows)
    }
}

/// Classifier-free dropout counter, exposed for rate checks.
#[derive(Clone, Copy, Debug, Default)]
pub struct DropoutStats {
    pub dropped: usize,
    pub total: usize,
}

impl DropoutStats {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.dropped as f64 / self.total as f64
        }
    }
}

fn clip_to_f32(dataset: &Dataset) -> Vec<(Tensor<f32>, Tensor<f32>)> {
    dataset
        .clips
        .iter()
        .map(|c| (c.audio.cast::<f32>(), c.motion.cast::<f32>()))
        .collect()
}

fn motion_rows_f32(motion: &Tensor<f32>, start: usize, len: usize) -> Tensor<f32> {
    let c = motion.cols();
    Tensor::matrix(
        len,
        c,
        motion.data()[start * c..(start + len) * c].to_vec(),
    )
}

fn ref_start_grid(len: usize, ref_len: usize) -> Vec<usize> {
    if len <= ref_len {
        return vec![0];
    }
    (0..=(len - ref_len)).step_by(REF_START_GRID).collect()
}

// ---------------------------------------------------------------------------
// Stage 1: lip expert
// ---------------------------------------------------------------------------

pub fn train_expert(dataset: &Dataset, cfg: &Config) -> Result<(ParameterStore<f32>, TrainLog)> {
    let tc = &cfg.train_expert;
    let n = cfg.expert.clip_len;
    let basis = FaceBasis::<f32>::synthetic(
        cfg.world.motion_dim,
        cfg.world.mouth_dims,
        crate::synth::derive_seed(cfg.world.seed, &[0xBA515]),
    );
    let expert = LipExpert::new(cfg.expert.clone());
    let mut store = expert.fresh_store(tc.seed, &basis);
    let mut adam = Adam::new(tc.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::derive_seed(tc.seed, &[0xEE]));
    let mut log = TrainLog::default();

    let clips = clip_to_f32(dataset);
    let train_idx = dataset.train_indices();

    for step in 0..tc.steps {
        let mut tape = Tape::<f32>::new();
        let mut feats_parts = Vec::with_capacity(tc.batch);
        let mut audio_rows: Vec<f32> = Vec::new();
        let mut mouth_rows: Vec<f32> = Vec::new();
        let mut labels = Vec::with_capacity(tc.batch);
        for _ in 0..tc.batch {
            let idx = train_idx[rng.gen_range(0..train_idx.len())];
            let (audio, motion) = &clips[idx];
            let len = audio.rows();
            let pair = sample_sync_pair(len, n, &mut rng)?;
            let grid = ref_start_grid(len, tc.ref_len);
            let ref_start = grid[rng.gen_range(0..grid.len())];
            let reference = motion_rows_f32(motion, ref_start, tc.ref_len.min(len));
            let f = expert.style_features(&mut tape, &store, Bind::Train, &reference)?;
            feats_parts.push(f);
            let fa = audio.cols();
            audio_rows.extend_from_slice(
                &audio.data()[pair.audio_start * fa..(pair.audio_start + n) * fa],
            );
            let motion_clip = motion_rows_f32(motion, pair.motion_start, n);
            let mouth = basis.mouth_vertices(&motion_clip)?;
            mouth_rows.extend_from_slice(mouth.data());
            labels.push(if pair.synchronous { 1.0 } else { 0.0 });
        }
        let feats = tape.concat_rows(&feats_parts)?;
        let audio_v = tape.constant(Tensor::matrix(tc.batch * n, cfg.world.audio_dim, audio_rows));
        let mouth_dim = cfg.expert.mouth_dim;
        let mouth_v = tape.constant(Tensor::matrix(tc.batch * n, mouth_dim, mouth_rows));
        let e_a = expert.embed_audio(&mut tape, &store, Bind::Train, audio_v, tc.batch, feats, true)?;
        let e_m = expert.embed_mouth(&mut tape, &store, Bind::Train, mouth_v, tc.batch, feats, true)?;
        let p = expert.sync_probability(&mut tape, e_m, e_a)?;
        let loss = expert.bce_loss(&mut tape, p, &labels)?;
        let loss_val = tape.value(loss).item() as f64;
        if !loss_val.is_finite() {
            return Err(Error::Diverged {
                step,
                term: "expert",
            });
        }
        let sink = tape.backward(loss)?;
        let mut grads = tape.param_grads(&store, &sink);
        clip_global_norm(&mut grads, tc.grad_clip);
        adam.step(&mut store, &grads)?;
        let stats = tape.take_bn_stats();
        apply_bn_updates(&mut store, &stats)?;
        if step % tc.log_every == 0 || step + 1 == tc.steps {
            log.push(step, "expert", loss_val);
        }
    }
    Ok((store, log))
}

// ---------------------------------------------------------------------------
// Stage 2: denoiser
// ---------------------------------------------------------------------------

struct DenoiseSpec {
    clip_idx: usize,
    sync_start: usize,
    t: usize,
    ref_start: usize,
    drop_style: bool,
    noises: Vec<Tensor<f32>>,
}

/// Frozen-expert context for the sync loss.
struct ExpertCtx<'a> {
    expert: &'a LipExpert,
    store: &'a ParameterStore<f32>,
    basis: FaceBasis<f32>,
    /// Style features keyed by (clip, ref_start); the null reference is
    /// keyed by (usize::MAX, 0).
    feats: HashMap<(usize, usize), Tensor<f32>>,
}

pub struct DenoiserArtifacts {
    pub store: ParameterStore<f32>,
    pub log: TrainLog,
    pub dropout: DropoutStats,
}

pub fn train_denoiser(
    dataset: &Dataset,
    expert: Option<(&LipExpert, &ParameterStore<f32>)>,
    cfg: &Config,
) -> Result<DenoiserArtifacts> {
    let tc = &cfg.train_denoiser;
    let den = MotionDenoiser::new(cfg.denoiser.clone());
    let sched = DiffusionSchedule::default_linear(cfg.denoiser.timesteps)?;
    let mut store = den.fresh_store::<f32>(tc.seed);
    let mut adam = Adam::new(tc.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::derive_seed(tc.seed, &[0xDD]));
    let mut log = TrainLog::default();
    let mut dropout = DropoutStats::default();

    let n = cfg.expert.clip_len;
    let clips = clip_to_f32(dataset);
    let train_idx = dataset.train_indices();
    let use_expert = tc.use_expert && expert.is_some();

    // Precompute frozen style features for every cached reference window.
    let expert_ctx: Option<ExpertCtx> = match (use_expert, expert) {
        (true, Some((exp, exp_store))) => {
            let basis = FaceBasis::<f32>::from_store(exp_store)?;
            let mut feats = HashMap::new();
            for &idx in &train_idx {
                let (_, motion) = &clips[idx];
                for &start in &ref_start_grid(motion.rows(), tc.ref_len) {
                    let reference = motion_rows_f32(motion, start, tc.ref_len.min(motion.rows()));
                    let mut tape = Tape::<f32>::inference();
                    let f = exp.style_features(&mut tape, exp_store, Bind::Frozen, &reference)?;
                    feats.insert((idx, start), tape.value(f).clone());
                }
            }
            let null_ref = Tensor::<f32>::zeros(tc.ref_len, cfg.world.motion_dim);
            let mut tape = Tape::<f32>::inference();
            let f = exp.style_features(&mut tape, exp_store, Bind::Frozen, &null_ref)?;
            feats.insert((usize::MAX, 0), tape.value(f).clone());
            Some(ExpertCtx {
                expert: exp,
                store: exp_store,
                basis,
                feats,
            })
        }
        _ => None,
    };

    // Fixed validation batch for the optimization-health smoke check.
    let mut val_rng = ChaCha8Rng::seed_from_u64(crate::synth::derive_seed(tc.seed, &[0x7A1]));
    let val_specs: Vec<DenoiseSpec> = (0..tc.val_size)
        .map(|_| make_spec(&train_idx, &clips, n, &sched, tc.ref_len, 0.0, &mut val_rng))
        .collect();

    for step in 0..tc.steps {
        let mut specs = Vec::with_capacity(tc.batch);
        for _ in 0..tc.batch {
            let spec = make_spec(
                &train_idx,
                &clips,
                n,
                &sched,
                tc.ref_len,
                tc.cfg_dropout,
                &mut rng,
            );
            dropout.total += 1;
            if spec.drop_style {
                dropout.dropped += 1;
            }
            specs.push(spec);
        }
        let results: Vec<Result<(f64, f64, std::collections::BTreeMap<String, Tensor<f32>>)>> =
            specs
                .par_iter()
                .map(|spec| denoise_sample_grads(spec, &den, &store, &sched, cfg, expert_ctx.as_ref(), &clips))
                .collect();
        let mut grads = std::collections::BTreeMap::new();
        let mut denoise_sum = 0.0;
        let mut sync_sum = 0.0;
        for r in results {
            let (dl, sl, g) = r?;
            denoise_sum += dl;
            sync_sum += sl;
            accumulate_grads(&mut grads, g);
        }
        let b = tc.batch as f64;
        scale_grads(&mut grads, 1.0 / b);
        clip_global_norm(&mut grads, tc.grad_clip);
        adam.step(&mut store, &grads)?;

        let denoise_mean = denoise_sum / b;
        let sync_mean = sync_sum / b;
        if !denoise_mean.is_finite() || (use_expert && !sync_mean.is_finite()) {
            return Err(Error::Diverged {
                step,
                term: "denoiser",
            });
        }
        if step % tc.log_every == 0 || step + 1 == tc.steps {
            log.push(step, "denoise", denoise_mean);
            if use_expert {
                log.push(step, "sync", sync_mean);
            }
            log.push(
                step,
                "total",
                tc.lambda_denoise * denoise_mean
                    + if use_expert { tc.lambda_sync * sync_mean } else { 0.0 },
            );
        }
        if step % tc.val_every == 0 || step + 1 == tc.steps {
            let val = validation_denoise_loss(&val_specs, &den, &store, &sched, &clips)?;
            log.push(step, "val_denoise", val);
        }
    }

    Ok(DenoiserArtifacts {
        store,
        log,
        dropout,
    })
}

fn make_spec(
    train_idx: &[usize],
    clips: &[(Tensor<f32>, Tensor<f32>)],
    n: usize,
    sched: &DiffusionSchedule,
    ref_len: usize,
    cfg_dropout: f64,
    rng: &mut ChaCha8Rng,
) -> DenoiseSpec {
    let clip_idx = train_idx[rng.gen_range(0..train_idx.len())];
    let len = clips[clip_idx].0.rows();
    let sync_start = rng.gen_range(0..=len - n);
    let t = rng.gen_range(1..=sched.num_steps());
    let grid = ref_start_grid(len, ref_len);
    let ref_start = grid[rng.gen_range(0..grid.len())];
    let drop_style = rng.gen_bool(cfg_dropout);
    let motion_dim = clips[clip_idx].1.cols();
    let noises = (0..n).map(|_| Tensor::<f32>::randn(1, motion_dim, rng)).collect();
    DenoiseSpec {
        clip_idx,
        sync_start,
        t,
        ref_start,
        drop_style,
        noises,
    }
}

fn denoise_sample_grads(
    spec: &DenoiseSpec,
    den: &MotionDenoiser,
    store: &ParameterStore<f32>,
    sched: &DiffusionSchedule,
    cfg: &Config,
    expert_ctx: Option<&ExpertCtx>,
    clips: &[(Tensor<f32>, Tensor<f32>)],
) -> Result<(f64, f64, std::collections::BTreeMap<String, Tensor<f32>>)> {
    let tc = &cfg.train_denoiser;
    let n = cfg.expert.clip_len;
    let (audio, motion) = &clips[spec.clip_idx];
    let ref_len = tc.ref_len.min(motion.rows());

    let mut tape = Tape::<f32>::new();
    let reference = if spec.drop_style {
        Tensor::<f32>::zeros(ref_len, cfg.world.motion_dim)
    } else {
        motion_rows_f32(motion, spec.ref_start, ref_len)
    };
    let style_code = den.style_encode(&mut tape, store, Bind::Train, &reference)?;

    let mut x0hats = Vec::with_capacity(n);
    for k in 0..n {
        let frame = spec.sync_start + k;
        let window = window_rows(audio, frame, cfg.world.window);
        let m0 = motion_rows_f32(motion, frame, 1);
        let m_t = sched.forward_diffuse(&m0, spec.t, &spec.noises[k])?;
        let tokens = den.audio_encode(&mut tape, store, Bind::Train, &window)?;
        let m_t_v = tape.constant(m_t);
        let mut x0 = den.denoise_with_tokens(&mut tape, store, Bind::Train, m_t_v, spec.t, tokens, style_code)?;
        // optional multi-step generation inside the sync surrogate
        if tc.sync_gen_steps > 1 {
            let mut x_v = m_t_v;
            let mut ts: Vec<usize> = Vec::new();
            let k_steps = tc.sync_gen_steps;
            for i in 0..k_steps {
                let tt = (spec.t as f64
                    - i as f64 * (spec.t as f64 - 1.0) / (k_steps as f64 - 1.0).max(1.0))
                .round() as usize;
                if ts.last() != Some(&tt) {
                    ts.push(tt);
                }
            }
            for (i, &tt) in ts.iter().enumerate() {
                let tokens_i = den.audio_encode(&mut tape, store, Bind::Train, &window)?;
                x0 = den.denoise_with_tokens(&mut tape, store, Bind::Train, x_v, tt, tokens_i, style_code)?;
                let t_prev = if i + 1 < ts.len() { ts[i + 1] } else { 0 };
                if t_prev == 0 {
                    break;
                }
                let ab_t = sched.alpha_bar(tt);
                let ab_p = sched.alpha_bar(t_prev);
                let k_eps = (1.0 - ab_p).sqrt() / (1.0 - ab_t).sqrt();
                let k_x0 = ab_p.sqrt() - k_eps * ab_t.sqrt();
                let xa = tape.affine(x0, k_x0, 0.0);
                let xb = tape.affine(x_v, k_eps, 0.0);
                x_v = tape.add(xa, xb)?;
            }
        }
        x0hats.push(x0);
    }

    let center = n / 2;
    let frame = spec.sync_start + center;
    let m0_center = tape.constant(motion_rows_f32(motion, frame, 1));
    let diff = tape.sub(x0hats[center], m0_center)?;
    let sq = tape.mul(diff, diff)?;
    let l_denoise = tape.sum_all(sq);
    let denoise_val = tape.value(l_denoise).item() as f64;
    let mut total = tape.affine(l_denoise, tc.lambda_denoise, 0.0);

    let mut sync_val = 0.0;
    if let Some(ctx) = expert_ctx {
        let motion_hat = tape.concat_rows(&x0hats)?;
        let mouth = ctx.basis.mouth_vertices_var(&mut tape, motion_hat)?;
        let key = if spec.drop_style {
            (usize::MAX, 0)
        } else {
            (spec.clip_idx, spec.ref_start)
        };
        let feats_t = ctx.feats.get(&key).expect("cached style features").clone();
        let feats = tape.constant(feats_t);
        let fa = audio.cols();
        let audio_clip = Tensor::matrix(
            n,
            fa,
            audio.data()[spec.sync_start * fa..(spec.sync_start + n) * fa].to_vec(),
        );
        let audio_v = tape.constant(audio_clip);
        let e_a = ctx
            .expert
            .embed_audio(&mut tape, ctx.store, Bind::Frozen, audio_v, 1, feats, false)?;
        let e_m = ctx
            .expert
            .embed_mouth(&mut tape, ctx.store, Bind::Frozen, mouth, 1, feats, false)?;
        let p = ctx.expert.sync_probability(&mut tape, e_m, e_a)?;
        let p = tape.max_scalar(p, PROB_EPS);
        let lnp = tape.ln(p);
        let l_sync = tape.affine(lnp, -1.0, 0.0);
        sync_val = tape.value(l_sync).item() as f64;
        let weighted = tape.affine(l_sync, tc.lambda_sync, 0.0);
        total = tape.add(total, weighted)?;
    }

    let sink = tape.backward(total)?;
    let grads = tape.param_grads(store, &sink);
    Ok((denoise_val, sync_val, grads))
}

fn validation_denoise_loss(
    specs: &[DenoiseSpec],
    den: &MotionDenoiser,
    store: &ParameterStore<f32>,
    sched: &DiffusionSchedule,
    clips: &[(Tensor<f32>, Tensor<f32>)],
) -> Result<f64> {
    let results: Vec<Result<f64>> = specs
        .par_iter()
        .map(|spec| {
            let (audio, motion) = &clips[spec.clip_idx];
            let mut tape = Tape::<f32>::inference();
            let ref_len = 64.min(motion.rows());
            let reference = motion_rows_f32(motion, spec.ref_start, ref_len);
            let code = den.style_encode(&mut tape, store, Bind::Frozen, &reference)?;
            let center = spec.noises.len() / 2;
            let frame = spec.sync_start + center;
            let window = window_rows(audio, frame, den.cfg.window);
            let m0 = motion_rows_f32(motion, frame, 1);
            let m_t = sched.forward_diffuse(&m0, spec.t, &spec.noises[center])?;
            let m_t_v = tape.constant(m_t);
            let x0 = den.denoise_predict(&mut tape, store, Bind::Frozen, m_t_v, spec.t, &window, code)?;
            let pred = tape.value(x0);
            let loss: f64 = pred
                .data()
                .iter()
                .zip(m0.data().iter())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum();
            Ok(loss)
        })
        .collect();
    let mut total = 0.0;
    for r in results {
        total += r?;
    }
    Ok(total / specs.len() as f64)
}

// ---------------------------------------------------------------------------
// Stage 3: style predictor
// ---------------------------------------------------------------------------

struct PredictorSpec {
    clip_idx: usize,
    audio_start: usize,
    audio_len: usize,
    identity: Tensor<f32>,
    t: usize,
    noise: Tensor<f32>,
}

pub fn train_predictor(
    dataset: &Dataset,
    denoiser_store: &ParameterStore<f32>,
    cfg: &Config,
) -> Result<(ParameterStore<f32>, TrainLog)> {
    let tc = &cfg.train_predictor;
    let den = MotionDenoiser::new(cfg.denoiser.clone());
    let predictor = StylePredictor::new(cfg.predictor.clone());
    let sched = DiffusionSchedule::default_linear(cfg.predictor.timesteps)?;
    let mut store = predictor.fresh_store::<f32>(tc.seed);
    let mut adam = Adam::new(tc.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(crate::synth::derive_seed(tc.seed, &[0x99]));
    let mut log = TrainLog::default();

    let clips = clip_to_f32(dataset);
    let train_idx = dataset.train_indices();

    // Frozen style-encoder targets: one code per training clip.
    let mut targets: HashMap<usize, Tensor<f32>> = HashMap::new();
    for &idx in &train_idx {
        let code = den.style_code_tensor(denoiser_store, &clips[idx].1)?;
        targets.insert(idx, code);
    }

    for step in 0..tc.steps {
        let mut specs = Vec::with_capacity(tc.batch);
        for _ in 0..tc.batch {
            let clip_idx = train_idx[rng.gen_range(0..train_idx.len())];
            let len = clips[clip_idx].0.rows();
            let audio_len = tc.audio_len.min(len);
            let audio_start = rng.gen_range(0..=len - audio_len);
            let id_source = if tc.cross_id {
                let sibs: Vec<usize> = dataset
                    .sibling_clips(clip_idx)
                    .into_iter()
                    .filter(|i| dataset.records[*i].speaker < dataset.world.cfg.train_speakers)
                    .collect();
                if sibs.is_empty() {
                    eprintln!(
                        "warning: speaker {} has a single clip; falling back to same-clip identity",
                        dataset.records[clip_idx].speaker
                    );
                    clip_idx
                } else {
                    sibs[rng.gen_range(0..sibs.len())]
                }
            } else {
                clip_idx
            };
            let identity = if tc.use_speaker {
                Tensor::row(
                    dataset.records[id_source]
                        .identity
                        .iter()
                        .map(|&v| v as f32)
                        .collect(),
                )
            } else {
                Tensor::zeros(1, cfg.world.identity_dim)
            };
            let (t, noise) = if cfg.predictor.regression {
                (0usize, Tensor::<f32>::zeros(1, cfg.predictor.code_dim))
            } else {
                (
                    rng.gen_range(1..=sched.num_steps()),
                    Tensor::<f32>::randn(1, cfg.predictor.code_dim, &mut rng),
                )
            };
            specs.push(PredictorSpec {
                clip_idx,
                audio_start,
                audio_len,
                identity,
                t,
                noise,
            });
        }

        let results: Vec<Result<(f64, std::collections::BTreeMap<String, Tensor<f32>>)>> = specs
            .par_iter()
            .map(|spec| {
                let (audio, _) = &clips[spec.clip_idx];
                let fa = audio.cols();
                let audio_slice = Tensor::matrix(
                    spec.audio_len,
                    fa,
                    audio.data()[spec.audio_start * fa..(spec.audio_start + spec.audio_len) * fa]
                        .to_vec(),
                );
                let target = targets.get(&spec.clip_idx).expect("target code");
                let mut tape = Tape::<f32>::new();
                let s_t = if cfg.predictor.regression {
                    tape.constant(Tensor::zeros(1, cfg.predictor.code_dim))
                } else {
                    let noised = sched.forward_diffuse(target, spec.t, &spec.noise)?;
                    tape.constant(noised)
                };
                let pred = predictor.predict_s0(
                    &mut tape,
                    &store,
                    Bind::Train,
                    &audio_slice,
                    spec.t,
                    &spec.identity,
                    s_t,
                )?;
                let tgt = tape.constant(target.clone());
                let diff = tape.sub(pred, tgt)?;
                let sq = tape.mul(diff, diff)?;
                let loss = tape.sum_all(sq);
                let loss_val = tape.value(loss).item() as f64;
                let sink = tape.backward(loss)?;
                Ok((loss_val, tape.param_grads(&store, &sink)))
            })
            .collect();

        let mut grads = std::collections::BTreeMap::new();
        let mut loss_sum = 0.0;
        for r in results {
            let (l, g) = r?;
            loss_sum += l;
            accumulate_grads(&mut grads, g);
        }
        let b = tc.batch as f64;
        scale_grads(&mut grads, 1.0 / b);
        clip_global_norm(&mut grads, tc.grad_clip);
        adam.step(&mut store, &grads)?;
        let mean = loss_sum / b;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                step,
                term: "predictor",
            });
        }
        if step % tc.log_every == 0 || step + 1 == tc.steps {
            log.push(step, "pred", mean);
        }
    }
    Ok((store, log))
}
