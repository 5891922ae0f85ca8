//! Core library for audio-driven facial motion generation.
//!
//! The pipeline has three networks: a diffusion denoiser that maps a noisy
//! motion frame, a diffusion step, an audio window and a style code to a
//! clean 3DMM expression frame; a contrastive lip expert that scores
//! audio/lip-motion synchrony conditioned on a style reference; and a
//! diffusion style predictor that infers a style code from an utterance and
//! a speaker identity vector. Everything trains and evaluates on a
//! procedurally generated world with closed-form oracles.
//!
//! All numeric kernels are generic over the scalar type ([`scalar::Scalar`],
//! implemented for `f32`/`f64`). Training runs in [`Real`] (f32); gradient
//! checks instantiate the identical code in f64.

pub mod config;
pub mod denoiser;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod io;
pub mod lip_expert;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod params;
pub mod sampling;
pub mod scalar;
pub mod schedule;
pub mod style_predictor;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

/// Default runtime scalar type.
pub type Real = f32;

/// Concrete tensor aliases for the two supported scalar types.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;

/// Runtime parameter store.
pub type Params = params::ParameterStore<Real>;

/// Number of worker threads, from `STYLEDIFF_THREADS` (defaults to the
/// machine's parallelism).
pub fn worker_threads() -> usize {
    std::env::var("STYLEDIFF_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Install the global rayon pool sized by [`worker_threads`]. Safe to call
/// more than once; later calls are no-ops.
pub fn init_thread_pool() {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build_global();
}
