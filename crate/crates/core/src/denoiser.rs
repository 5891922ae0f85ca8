//! Conditional denoising network: predicts the clean motion frame from a
//! noisy frame, the diffusion step, an audio window and a style code.
//!
//! Wiring: the audio window runs through a transformer encoder; the noisy
//! motion frame is broadcast onto each audio token, jointly projected back
//! to the model width, and the encoded timestep is added - that stack is
//! the decoder's key/value. The style code (self-attention-pooled output of
//! the style encoder) is repeated once per window position, summed with
//! positional encodings, and serves as the decoder query. The middle output
//! token feeds a linear head that predicts the motion frame.

use crate::config::DenoiserConfig;
use crate::error::{Error, Result};
use crate::nn::{self, AttentionPool, Bind, DecoderLayer, EncoderLayer, Linear};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Hard upper bound on style reference length.
pub const MAX_REF_LEN: usize = 4096;
/// References outside this range are accepted with a warning; it is the
/// range the style encoder sees in training.
pub const REF_LEN_RANGE: (usize, usize) = (64, 256);

pub struct MotionDenoiser {
    pub cfg: DenoiserConfig,
    audio_in: Linear,
    audio_enc: Vec<EncoderLayer>,
    joint: Linear,
    time_proj: Linear,
    style_in: Linear,
    style_enc: Vec<EncoderLayer>,
    style_pool: AttentionPool,
    dec: Vec<DecoderLayer>,
    head: Linear,
}

impl MotionDenoiser {
    pub fn new(cfg: DenoiserConfig) -> Self {
        let h = cfg.hidden;
        let inner = h * cfg.mlp_ratio;
        MotionDenoiser {
            audio_in: Linear::new("denoiser.audio_in", cfg.audio_dim, h),
            audio_enc: (0..cfg.enc_layers)
                .map(|i| EncoderLayer::new(format!("denoiser.audio_enc.{i}"), h, cfg.heads, inner))
                .collect(),
            joint: Linear::new("denoiser.joint", h + cfg.motion_dim, h),
            time_proj: Linear::new("denoiser.time_proj", h, h),
            style_in: Linear::new("denoiser.style_in", cfg.motion_dim, h),
            style_enc: (0..cfg.style_layers)
                .map(|i| EncoderLayer::new(format!("denoiser.style_enc.{i}"), h, cfg.heads, inner))
                .collect(),
            style_pool: AttentionPool::new("denoiser.style_pool", h),
            dec: (0..cfg.dec_layers)
                .map(|i| DecoderLayer::new(format!("denoiser.dec.{i}"), h, cfg.heads, inner))
                .collect(),
            head: Linear::new("denoiser.head", h, cfg.motion_dim),
            cfg,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut rand_chacha::ChaCha8Rng) {
        self.audio_in.init(store, rng);
        for l in &self.audio_enc {
            l.init(store, rng);
        }
        self.joint.init(store, rng);
        self.time_proj.init(store, rng);
        self.style_in.init(store, rng);
        for l in &self.style_enc {
            l.init(store, rng);
        }
        self.style_pool.init(store, rng);
        for l in &self.dec {
            l.init(store, rng);
        }
        // zero head: an untrained network predicts its bias
        self.head.init_zero(store, rng);
    }

    pub fn fresh_store<S: Scalar>(&self, seed: u64) -> ParameterStore<S> {
        use rand::SeedableRng;
        let mut store = ParameterStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        self.init(&mut store, &mut rng);
        store
    }

    /// Encode an audio window into per-frame tokens (`(2w+1) x hidden`).
    pub fn audio_encode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        window: &Tensor<S>,
    ) -> Result<Var> {
        let wl = self.cfg.window_len();
        if window.rows() != wl || window.cols() != self.cfg.audio_dim {
            return Err(Error::shape(
                "audio_encode",
                format!(
                    "window {}x{}, expected {}x{}",
                    window.rows(),
                    window.cols(),
                    wl,
                    self.cfg.audio_dim
                ),
            ));
        }
        let x = tape.constant(window.clone());
        self.audio_encode_var(tape, store, bind, x)
    }

    pub fn audio_encode_var<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        window: Var,
    ) -> Result<Var> {
        let wl = self.cfg.window_len();
        let mut x = self.audio_in.forward(tape, store, bind, window)?;
        let pos = tape.constant(nn::positional_matrix::<S>(wl, self.cfg.hidden));
        x = tape.add(x, pos)?;
        for l in &self.audio_enc {
            x = l.forward(tape, store, bind, x)?;
        }
        Ok(x)
    }

    /// Encode a style reference (`N x motion_dim`) into a style code
    /// (`1 x hidden`).
    pub fn style_encode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        reference: &Tensor<S>,
    ) -> Result<Var> {
        let n = reference.rows();
        if n == 0 || n > MAX_REF_LEN {
            return Err(Error::invalid(
                "style_encode",
                format!("reference length {n} outside [1, {MAX_REF_LEN}]"),
            ));
        }
        if reference.cols() != self.cfg.motion_dim {
            return Err(Error::shape(
                "style_encode",
                format!("reference dim {} != {}", reference.cols(), self.cfg.motion_dim),
            ));
        }
        if n < REF_LEN_RANGE.0 || n > REF_LEN_RANGE.1 {
            eprintln!(
                "warning: style reference length {n} outside training range [{}, {}]",
                REF_LEN_RANGE.0, REF_LEN_RANGE.1
            );
        }
        let mut x = tape.constant(reference.clone());
        x = self.style_in.forward(tape, store, bind, x)?;
        let pos = tape.constant(nn::positional_matrix::<S>(n, self.cfg.hidden));
        x = tape.add(x, pos)?;
        for l in &self.style_enc {
            x = l.forward(tape, store, bind, x)?;
        }
        self.style_pool.forward(tape, store, bind, x)
    }

    /// The reserved null reference: an all-zeros motion sequence.
    pub fn null_reference<S: Scalar>(&self) -> Tensor<S> {
        Tensor::zeros(self.cfg.null_ref_len, self.cfg.motion_dim)
    }

    /// Style code of the null reference.
    pub fn null_style_code<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
    ) -> Result<Var> {
        self.style_encode(tape, store, bind, &self.null_reference())
    }

    /// Key/value stack for one denoising query: audio tokens with the noisy
    /// motion broadcast onto each, jointly projected, plus the timestep
    /// embedding.
    fn build_kv<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        audio_tokens: Var,
        noisy_motion: Var,
        t: usize,
    ) -> Result<Var> {
        let wl = self.cfg.window_len();
        if t == 0 || t > self.cfg.timesteps {
            return Err(Error::StepOutOfRange {
                t,
                max: self.cfg.timesteps,
            });
        }
        let m_rep = tape.repeat_rows(noisy_motion, wl)?;
        let joint_in = tape.concat_cols(&[audio_tokens, m_rep])?;
        let kv = self.joint.forward(tape, store, bind, joint_in)?;
        let temb = tape.constant(nn::sinusoidal_row::<S>(t, self.cfg.hidden));
        let temb = self.time_proj.forward(tape, store, bind, temb)?;
        tape.add_row(kv, temb)
    }

    /// Decoder pass for one style code over a prepared key/value stack.
    fn decode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        kv: Var,
        style_code: Var,
    ) -> Result<Var> {
        let wl = self.cfg.window_len();
        let mut q = tape.repeat_rows(style_code, wl)?;
        let pos = tape.constant(nn::positional_matrix::<S>(wl, self.cfg.hidden));
        q = tape.add(q, pos)?;
        for l in &self.dec {
            q = l.forward(tape, store, bind, q, kv)?;
        }
        let mid = tape.select_row(q, self.cfg.window)?;
        self.head.forward(tape, store, bind, mid)
    }

    /// Predict the clean frame from pre-encoded audio tokens.
    pub fn denoise_with_tokens<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        noisy_motion: Var,
        t: usize,
        audio_tokens: Var,
        style_code: Var,
    ) -> Result<Var> {
        let kv = self.build_kv(tape, store, bind, audio_tokens, noisy_motion, t)?;
        self.decode(tape, store, bind, kv, style_code)
    }

    /// Full signal prediction `E(m_t, t, window, code)`.
    pub fn denoise_predict<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        noisy_motion: Var,
        t: usize,
        window: &Tensor<S>,
        style_code: Var,
    ) -> Result<Var> {
        let tokens = self.audio_encode(tape, store, bind, window)?;
        self.denoise_with_tokens(tape, store, bind, noisy_motion, t, tokens, style_code)
    }

    /// Guided prediction `omega * cond + (1 - omega) * uncond`. The two
    /// branches share the key/value stack; `omega` of exactly 1 or 0 returns
    /// the corresponding branch bitwise.
    #[allow(clippy::too_many_arguments)]
    pub fn cfg_predict<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        noisy_motion: Var,
        t: usize,
        audio_tokens: Var,
        style_code: Var,
        null_code: Var,
        omega: f64,
    ) -> Result<Var> {
        let kv = self.build_kv(tape, store, bind, audio_tokens, noisy_motion, t)?;
        if omega == 1.0 {
            return self.decode(tape, store, bind, kv, style_code);
        }
        if omega == 0.0 {
            return self.decode(tape, store, bind, kv, null_code);
        }
        let cond = self.decode(tape, store, bind, kv, style_code)?;
        let uncond = self.decode(tape, store, bind, kv, null_code)?;
        let c = tape.affine(cond, omega, 0.0);
        let u = tape.affine(uncond, 1.0 - omega, 0.0);
        tape.add(c, u)
    }

    // ---- tensor-level inference helpers ---------------------------------

    /// Style code of a reference, on a throwaway inference tape.
    pub fn style_code_tensor<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        reference: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let mut tape = Tape::inference();
        let code = self.style_encode(&mut tape, store, Bind::Frozen, reference)?;
        Ok(tape.value(code).clone())
    }

    pub fn null_style_code_tensor<S: Scalar>(&self, store: &ParameterStore<S>) -> Result<Tensor<S>> {
        self.style_code_tensor(store, &self.null_reference())
    }

    /// Audio tokens of a window, on a throwaway inference tape.
    pub fn encode_window_tensor<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        window: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let mut tape = Tape::inference();
        let tokens = self.audio_encode(&mut tape, store, Bind::Frozen, window)?;
        Ok(tape.value(tokens).clone())
    }

    /// One guided x0 prediction from pre-encoded audio tokens.
    #[allow(clippy::too_many_arguments)]
    pub fn predict_x0_tensor<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        audio_tokens: &Tensor<S>,
        noisy_motion: &Tensor<S>,
        t: usize,
        style_code: &Tensor<S>,
        null_code: Option<&Tensor<S>>,
        omega: f64,
    ) -> Result<Tensor<S>> {
        let mut tape = Tape::inference();
        let tokens = tape.constant(audio_tokens.clone());
        let m_t = tape.constant(noisy_motion.clone());
        let code = tape.constant(style_code.clone());
        let null = match null_code {
            Some(c) => tape.constant(c.clone()),
            None => {
                if omega != 1.0 {
                    return Err(Error::invalid(
                        "predict_x0",
                        "guided prediction with omega != 1 needs a null code",
                    ));
                }
                code
            }
        };
        let out = self.cfg_predict(&mut tape, store, Bind::Frozen, m_t, t, tokens, code, null, omega)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> (MotionDenoiser, ParameterStore<f64>) {
        let den = MotionDenoiser::new(DenoiserConfig::desk());
        let store = den.fresh_store::<f64>(1);
        (den, store)
    }

    #[test]
    fn audio_tokens_shape_and_determinism() {
        let (den, store) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let window = Tensor::<f64>::randn(11, den.cfg.audio_dim, &mut rng);
        let a = den.encode_window_tensor(&store, &window).unwrap();
        let b = den.encode_window_tensor(&store, &window).unwrap();
        assert_eq!(a.rows(), 11);
        assert_eq!(a.cols(), den.cfg.hidden);
        assert_eq!(a.data(), b.data());
        // wrong window length rejected
        let bad = Tensor::<f64>::randn(9, den.cfg.audio_dim, &mut rng);
        assert!(den.encode_window_tensor(&store, &bad).is_err());
    }

    #[test]
    fn paper_scale_shapes() {
        let den = MotionDenoiser::new(DenoiserConfig::paper());
        let store = den.fresh_store::<f32>(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let window = Tensor::<f32>::randn(11, 1024, &mut rng);
        let tokens = den.encode_window_tensor(&store, &window).unwrap();
        assert_eq!((tokens.rows(), tokens.cols()), (11, 256));
        // style references of 64 and 256 frames both give 256-dim codes
        for n in [64usize, 256] {
            let r = Tensor::<f32>::randn(n, 64, &mut rng);
            let code = den.style_code_tensor(&store, &r).unwrap();
            assert_eq!((code.rows(), code.cols()), (1, 256));
        }
        // per-head dim is 32 at 8 heads
        assert_eq!(den.cfg.hidden / den.cfg.heads, 32);
    }

    #[test]
    fn style_encode_determinism_and_bounds() {
        let (den, store) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = Tensor::<f64>::randn(64, 64, &mut rng);
        let a = den.style_code_tensor(&store, &r).unwrap();
        let b = den.style_code_tensor(&store, &r).unwrap();
        assert_eq!(a.data(), b.data());
        let empty = Tensor::<f64>::zeros(0, 64).reshaped(vec![0, 64]);
        assert!(den.style_code_tensor(&store, &empty).is_err());
        let too_long = Tensor::<f64>::zeros(MAX_REF_LEN + 1, 64);
        assert!(den.style_code_tensor(&store, &too_long).is_err());
    }

    #[test]
    fn zero_init_head_predicts_constant() {
        let (den, store) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // fresh store: head weights are zero, bias zero -> output all zeros
        let window = Tensor::<f64>::randn(11, den.cfg.audio_dim, &mut rng);
        let code = den
            .style_code_tensor(&store, &Tensor::<f64>::randn(64, 64, &mut rng))
            .unwrap();
        let tokens = den.encode_window_tensor(&store, &window).unwrap();
        let m_t = Tensor::<f64>::randn(1, 64, &mut rng);
        let out = den
            .predict_x0_tensor(&store, &tokens, &m_t, 10, &code, None, 1.0)
            .unwrap();
        assert_eq!(out.cols(), 64);
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_out_of_range_rejected() {
        let (den, store) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let window = Tensor::<f64>::randn(11, den.cfg.audio_dim, &mut rng);
        let tokens = den.encode_window_tensor(&store, &window).unwrap();
        let code = Tensor::<f64>::zeros(1, den.cfg.hidden);
        let m_t = Tensor::<f64>::randn(1, 64, &mut rng);
        assert!(den.predict_x0_tensor(&store, &tokens, &m_t, 0, &code, None, 1.0).is_err());
        assert!(den
            .predict_x0_tensor(&store, &tokens, &m_t, den.cfg.timesteps + 1, &code, None, 1.0)
            .is_err());
    }

    #[test]
    fn cfg_identities_are_bitwise() {
        let (den, store) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // make the head non-trivial so branches differ
        let mut store = store;
        store
            .set(
                "denoiser.head.w",
                Tensor::<f64>::randn(den.cfg.hidden, 64, &mut rng),
            )
            .unwrap();
        let window = Tensor::<f64>::randn(11, den.cfg.audio_dim, &mut rng);
        let reference = Tensor::<f64>::randn(64, 64, &mut rng);
        let code = den.style_code_tensor(&store, &reference).unwrap();
        let null = den.null_style_code_tensor(&store).unwrap();
        let tokens = den.encode_window_tensor(&store, &window).unwrap();
        let m_t = Tensor::<f64>::randn(1, 64, &mut rng);
        let t = 9;

        let cond = den.predict_x0_tensor(&store, &tokens, &m_t, t, &code, None, 1.0).unwrap();
        let uncond = den
            .predict_x0_tensor(&store, &tokens, &m_t, t, &null, None, 1.0)
            .unwrap();
        let cfg1 = den
            .predict_x0_tensor(&store, &tokens, &m_t, t, &code, Some(&null), 1.0)
            .unwrap();
        let cfg0 = den
            .predict_x0_tensor(&store, &tokens, &m_t, t, &code, Some(&null), 0.0)
            .unwrap();
        assert_eq!(cfg1.data(), cond.data());
        assert_eq!(cfg0.data(), uncond.data());
        assert_ne!(cond.data(), uncond.data());

        // intermediate omega interpolates
        let mix = den
            .predict_x0_tensor(&store, &tokens, &m_t, t, &code, Some(&null), 0.5)
            .unwrap();
        for i in 0..64 {
            let expect = 0.5 * cond.data()[i] + 0.5 * uncond.data()[i];
            assert!((mix.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn null_code_is_stable_for_fixed_parameters() {
        let (den, store) = desk();
        let a = den.null_style_code_tensor(&store).unwrap();
        let b = den.null_style_code_tensor(&store).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
