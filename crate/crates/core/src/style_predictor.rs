//! Diffusion style predictor: infers a clean style code from full-utterance
//! audio plus a speaker identity vector.
//!
//! The model is a transformer encoder over a token sequence of, in order:
//! per-frame audio embeddings, a timestep token, a speaker token, the
//! noised style code token, and a trainable learned-query token. The
//! encoder output at the learned-query position feeds a linear head that
//! predicts the unnoised code.

use crate::config::PredictorConfig;
use crate::error::{Error, Result};
use crate::nn::{self, Bind, EncoderLayer, Linear, Mlp};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::schedule::DiffusionSchedule;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Trailing special tokens: timestep, speaker, noised style, learned query.
pub const SPECIAL_TOKENS: usize = 4;

pub struct StylePredictor {
    pub cfg: PredictorConfig,
    audio_in: Linear,
    time_in: Linear,
    speaker_mlp: Mlp,
    style_in: Linear,
    enc: Vec<EncoderLayer>,
    head: Linear,
}

impl StylePredictor {
    pub fn new(cfg: PredictorConfig) -> Self {
        let h = cfg.hidden;
        StylePredictor {
            audio_in: Linear::new("predictor.audio_in", cfg.audio_dim, h),
            time_in: Linear::new("predictor.time_in", h, h),
            speaker_mlp: Mlp::new("predictor.speaker_mlp", cfg.identity_dim, h, h),
            style_in: Linear::new("predictor.style_in", cfg.code_dim, h),
            enc: (0..cfg.layers)
                .map(|i| EncoderLayer::new(format!("predictor.enc.{i}"), h, cfg.heads, h * cfg.mlp_ratio))
                .collect(),
            head: Linear::new("predictor.head", h, cfg.code_dim),
            cfg,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut rand_chacha::ChaCha8Rng) {
        self.audio_in.init(store, rng);
        self.time_in.init(store, rng);
        self.speaker_mlp.init(store, rng);
        self.style_in.init(store, rng);
        store.insert(
            "predictor.query",
            nn::fan_in_uniform::<S>(1, self.cfg.hidden, self.cfg.hidden, rng),
        );
        for l in &self.enc {
            l.init(store, rng);
        }
        self.head.init(store, rng);
    }

    pub fn fresh_store<S: Scalar>(&self, seed: u64) -> ParameterStore<S> {
        use rand::SeedableRng;
        let mut store = ParameterStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        self.init(&mut store, &mut rng);
        store
    }

    pub fn token_count(&self, audio_frames: usize) -> usize {
        audio_frames + SPECIAL_TOKENS
    }

    /// Build the token sequence and predict the clean code
    /// (`1 x code_dim`). `noised_code` is a tape node so the training graph
    /// can keep gradients flowing through composed losses.
    pub fn predict_s0<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        audio: &Tensor<S>,
        t: usize,
        identity: &Tensor<S>,
        noised_code: Var,
    ) -> Result<Var> {
        let frames = audio.rows();
        if frames == 0 {
            return Err(Error::invalid("predict_s0", "empty audio"));
        }
        if audio.cols() != self.cfg.audio_dim {
            return Err(Error::shape(
                "predict_s0",
                format!("audio dim {} != {}", audio.cols(), self.cfg.audio_dim),
            ));
        }
        if identity.len() != self.cfg.identity_dim {
            return Err(Error::shape(
                "predict_s0",
                format!("identity dim {} != {}", identity.len(), self.cfg.identity_dim),
            ));
        }
        let h = self.cfg.hidden;

        let audio_v = tape.constant(audio.clone());
        let audio_tokens = self.audio_in.forward(tape, store, bind, audio_v)?;

        let temb = tape.constant(nn::sinusoidal_row::<S>(t, h));
        let time_token = self.time_in.forward(tape, store, bind, temb)?;

        let id_v = tape.constant(Tensor::row(identity.data().to_vec()));
        let speaker_token = self.speaker_mlp.forward(tape, store, bind, id_v)?;

        let style_token = self.style_in.forward(tape, store, bind, noised_code)?;

        let query = match bind {
            Bind::Train => tape.param(store, "predictor.query")?,
            Bind::Frozen => tape.frozen(store, "predictor.query")?,
        };

        let mut x = tape.concat_rows(&[audio_tokens, time_token, speaker_token, style_token, query])?;
        let pos = tape.constant(nn::positional_matrix::<S>(frames + SPECIAL_TOKENS, h));
        x = tape.add(x, pos)?;
        for l in &self.enc {
            x = l.forward(tape, store, bind, x)?;
        }
        let out = tape.select_row(x, frames + SPECIAL_TOKENS - 1)?;
        self.head.forward(tape, store, bind, out)
    }

    /// Tensor-level prediction on a throwaway inference tape.
    pub fn predict_s0_tensor<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio: &Tensor<S>,
        t: usize,
        identity: &Tensor<S>,
        noised_code: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let mut tape = Tape::inference();
        let code = tape.constant(noised_code.clone());
        let out = self.predict_s0(&mut tape, store, Bind::Frozen, audio, t, identity, code)?;
        Ok(tape.value(out).clone())
    }

    /// Sample a style code by full-length ancestral diffusion (or a single
    /// forward pass in regression mode).
    pub fn sample_style<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio: &Tensor<S>,
        identity: &Tensor<S>,
        sched: &DiffusionSchedule,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Tensor<S>> {
        if self.cfg.regression {
            let zero = Tensor::zeros(1, self.cfg.code_dim);
            return self.predict_s0_tensor(store, audio, 0, identity, &zero);
        }
        if sched.num_steps() != self.cfg.timesteps {
            return Err(Error::invalid(
                "sample_style",
                format!(
                    "schedule has {} steps, predictor expects {}",
                    sched.num_steps(),
                    self.cfg.timesteps
                ),
            ));
        }
        let mut x = Tensor::<S>::randn(1, self.cfg.code_dim, rng);
        for t in (1..=sched.num_steps()).rev() {
            let s0 = self.predict_s0_tensor(store, audio, t, identity, &x)?;
            let noise = Tensor::<S>::randn(1, self.cfg.code_dim, rng);
            x = sched.posterior_step(&x, &s0, t, &noise)?;
        }
        Ok(x)
    }
}
