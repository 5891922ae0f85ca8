//! Inference-time motion synthesis: sliding-window reverse diffusion under
//! classifier-free guidance, plus style-code interpolation.
//!
//! Each output frame runs its own full reverse chain on the audio window
//! centered at that frame. Frame `l` draws all of its noise from a stream
//! seeded with `seed ^ l`, so single frames can be regenerated bit-exactly
//! and frames can be computed in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::denoiser::MotionDenoiser;
use crate::error::{Error, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::schedule::DiffusionSchedule;
use crate::synth::window_rows;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Ddpm,
    Ddim(usize),
}

/// Per-step norm trace row: (frame, t, ||x_t||).
pub type TraceRow = (usize, usize, f64);

fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..=4.0).contains(&omega) {
        return Err(Error::invalid(
            "generate_sequence",
            format!("omega {omega} outside [0, 4]"),
        ));
    }
    if omega > 2.0 {
        eprintln!("warning: omega {omega} > 2 degrades lip-sync accuracy");
    }
    Ok(())
}

/// Generate one frame's motion via the full reverse chain.
#[allow(clippy::too_many_arguments)]
fn generate_frame_inner<S: Scalar>(
    den: &MotionDenoiser,
    store: &ParameterStore<S>,
    sched: &DiffusionSchedule,
    audio: &Tensor<S>,
    frame: usize,
    style_code: &Tensor<S>,
    null_code: Option<&Tensor<S>>,
    omega: f64,
    mode: SampleMode,
    seed: u64,
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<Tensor<S>> {
    let window = window_rows(audio, frame, den.cfg.window);
    let tokens = den.encode_window_tensor(store, &window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ frame as u64);
    let mut x = Tensor::<S>::randn(1, den.cfg.motion_dim, &mut rng);
    let mut local_trace = Vec::new();
    match mode {
        SampleMode::Ddpm => {
            for t in (1..=sched.num_steps()).rev() {
                let x0 = den.predict_x0_tensor(store, &tokens, &x, t, style_code, null_code, omega)?;
                let noise = Tensor::<S>::randn(1, den.cfg.motion_dim, &mut rng);
                x = sched.posterior_step(&x, &x0, t, &noise)?;
                if trace.is_some() {
                    local_trace.push((frame, t, x.frobenius_norm()));
                }
            }
        }
        SampleMode::Ddim(k) => {
            if k == 0 {
                return Err(Error::invalid("generate_sequence", "ddim step count 0"));
            }
            let ts = sched.ddim_timesteps(k);
            for (i, &t) in ts.iter().enumerate() {
                let t_prev = if i + 1 < ts.len() { ts[i + 1] } else { 0 };
                let x0 = den.predict_x0_tensor(store, &tokens, &x, t, style_code, null_code, omega)?;
                x = sched.ddim_step(&x, &x0, t, t_prev)?;
                if trace.is_some() {
                    local_trace.push((frame, t, x.frobenius_norm()));
                }
            }
        }
    }
    if let Some(tr) = trace {
        tr.extend(local_trace);
    }
    Ok(x)
}

/// Regenerate a single frame of a sequence (bit-identical to the same frame
/// of the full run with the same seed).
#[allow(clippy::too_many_arguments)]
pub fn generate_frame<S: Scalar>(
    den: &MotionDenoiser,
    store: &ParameterStore<S>,
    sched: &DiffusionSchedule,
    audio: &Tensor<S>,
    frame: usize,
    style_code: &Tensor<S>,
    omega: f64,
    mode: SampleMode,
    seed: u64,
) -> Result<Tensor<S>> {
    check_omega(omega)?;
    let null_code = if omega == 1.0 {
        None
    } else {
        Some(den.null_style_code_tensor(store)?)
    };
    generate_frame_inner(
        den,
        store,
        sched,
        audio,
        frame,
        style_code,
        null_code.as_ref(),
        omega,
        mode,
        seed,
        None,
    )
}

/// Synthesize a motion sequence for `audio` (`L x audio_dim`), one frame per
/// audio frame. Frames are generated in parallel; the result is independent
/// of the thread schedule.
#[allow(clippy::too_many_arguments)]
pub fn generate_sequence<S: Scalar>(
    den: &MotionDenoiser,
    store: &ParameterStore<S>,
    sched: &DiffusionSchedule,
    audio: &Tensor<S>,
    style_code: &Tensor<S>,
    omega: f64,
    mode: SampleMode,
    seed: u64,
) -> Result<Tensor<S>> {
    Ok(generate_sequence_traced(den, store, sched, audio, style_code, omega, mode, seed, false)?.0)
}

/// As `generate_sequence`, optionally collecting per-step norm traces.
#[allow(clippy::too_many_arguments)]
pub fn generate_sequence_traced<S: Scalar>(
    den: &MotionDenoiser,
    store: &ParameterStore<S>,
    sched: &DiffusionSchedule,
    audio: &Tensor<S>,
    style_code: &Tensor<S>,
    omega: f64,
    mode: SampleMode,
    seed: u64,
    want_trace: bool,
) -> Result<(Tensor<S>, Vec<TraceRow>)> {
    check_omega(omega)?;
    let frames = audio.rows();
    if frames == 0 {
        return Err(Error::invalid("generate_sequence", "empty audio"));
    }
    if audio.cols() != den.cfg.audio_dim {
        return Err(Error::shape(
            "generate_sequence",
            format!("audio dim {} != {}", audio.cols(), den.cfg.audio_dim),
        ));
    }
    if style_code.len() != den.cfg.code_dim() {
        return Err(Error::shape(
            "generate_sequence",
            format!("style code dim {} != {}", style_code.len(), den.cfg.code_dim()),
        ));
    }
    let null_code = if omega == 1.0 {
        None
    } else {
        Some(den.null_style_code_tensor(store)?)
    };
    let results: Vec<Result<(Tensor<S>, Vec<TraceRow>)>> = (0..frames)
        .into_par_iter()
        .map(|l| {
            let mut tr = Vec::new();
            let row = generate_frame_inner(
                den,
                store,
                sched,
                audio,
                l,
                style_code,
                null_code.as_ref(),
                omega,
                mode,
                seed,
                if want_trace { Some(&mut tr) } else { None },
            )?;
            Ok((row, tr))
        })
        .collect();
    let mut data = Vec::with_capacity(frames * den.cfg.motion_dim);
    let mut trace = Vec::new();
    for r in results {
        let (row, tr) = r?;
        data.extend_from_slice(row.data());
        trace.extend(tr);
    }
    Ok((Tensor::matrix(frames, den.cfg.motion_dim, data), trace))
}

/// Linear interpolation between two style codes; `alpha` in [0, 1].
pub fn interpolate_styles<S: Scalar>(
    a: &Tensor<S>,
    b: &Tensor<S>,
    alpha: f64,
) -> Result<Tensor<S>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(
            "interpolate_styles",
            format!("alpha {alpha} outside [0, 1]"),
        ));
    }
    if !a.same_shape(b) {
        return Err(Error::shape(
            "interpolate_styles",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let ka = S::from_f(1.0 - alpha);
    let kb = S::from_f(alpha);
    Ok(a.zip_map(b, |x, y| ka * x + kb * y))
}
