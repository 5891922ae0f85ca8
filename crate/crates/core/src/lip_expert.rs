//! Style-aware contrastive lip expert.
//!
//! The expert scores the probability that an audio clip and a lip-motion
//! clip of the same length are synchronous, conditioned on a style
//! reference. Lip motion is represented by mouth-area mesh vertices (mean
//! shape plus expression bases times the motion vector). Audio and mouth
//! embedders end in a ReLU so both embeddings are coordinate-wise
//! nonnegative, which pins the cosine similarity into [0, 1].
//!
//! The expert has its own style encoder with the same layout as the
//! denoiser's; the pooled style features are concatenated onto each
//! embedder's pooled features before the final MLP. Zeroing those features
//! (`unconditional = true`) yields the unconditional expert used in
//! ablations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExpertConfig;
use crate::error::{Error, Result};
use crate::nn::{self, AttentionPool, Bind, ConvBlock, EncoderLayer, Linear, Mlp};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Cosine denominator floor.
pub const COSINE_EPS: f64 = 1e-8;
/// Probability clamp inside the binary cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

// ---------------------------------------------------------------------------
// Face basis
// ---------------------------------------------------------------------------

/// Linear face model: mesh = mean shape + expression bases x motion.
#[derive(Clone, Debug)]
pub struct FaceBasis<S> {
    /// `V x 3` vertex positions of the neutral face.
    pub mean_shape: Tensor<S>,
    /// `(3V) x motion_dim` expression bases.
    pub expr_bases: Tensor<S>,
    /// Vertex ids forming the mouth region.
    pub mouth_index: Vec<usize>,
}

impl<S: Scalar> FaceBasis<S> {
    pub fn vertex_count(&self) -> usize {
        self.mean_shape.rows()
    }

    pub fn motion_dim(&self) -> usize {
        self.expr_bases.cols()
    }

    /// Flattened coordinate indices of the mouth vertices.
    pub fn mouth_coord_indices(&self) -> Vec<usize> {
        self.mouth_index
            .iter()
            .flat_map(|&v| [3 * v, 3 * v + 1, 3 * v + 2])
            .collect()
    }

    /// Flattened mouth coordinates per motion row (`L x 3|mouth|`).
    pub fn mouth_vertices(&self, motion: &Tensor<S>) -> Result<Tensor<S>> {
        self.validate()?;
        if motion.cols() != self.motion_dim() {
            return Err(Error::shape(
                "mouth_vertices",
                format!("motion dim {} != {}", motion.cols(), self.motion_dim()),
            ));
        }
        let mesh = motion.matmul(&self.expr_bases.transpose())?;
        let mean_flat: Vec<S> = self.mean_shape.data().to_vec();
        let idx = self.mouth_coord_indices();
        let l = motion.rows();
        let mut out = Vec::with_capacity(l * idx.len());
        for i in 0..l {
            for &j in &idx {
                out.push(mesh.data()[i * mesh.cols() + j] + mean_flat[j]);
            }
        }
        Ok(Tensor::matrix(l, idx.len(), out))
    }

    /// Same computation on a tape, for gradients through the motion input.
    pub fn mouth_vertices_var(&self, tape: &mut Tape<S>, motion: Var) -> Result<Var> {
        let bases_t = tape.constant(self.expr_bases.transpose());
        let mean = tape.constant(Tensor::row(self.mean_shape.data().to_vec()));
        let mesh = tape.matmul(motion, bases_t)?;
        let mesh = tape.add_row(mesh, mean)?;
        tape.gather_cols(mesh, &self.mouth_coord_indices())
    }

    fn validate(&self) -> Result<()> {
        let v = self.vertex_count();
        if self.mouth_index.is_empty() {
            return Err(Error::invalid("face_basis", "empty mouth index"));
        }
        if let Some(&bad) = self.mouth_index.iter().find(|&&i| i >= v) {
            return Err(Error::invalid(
                "face_basis",
                format!("mouth vertex {bad} out of range 0..{v}"),
            ));
        }
        if self.expr_bases.rows() != 3 * v {
            return Err(Error::shape(
                "face_basis",
                format!("bases rows {} != 3V {}", self.expr_bases.rows(), 3 * v),
            ));
        }
        Ok(())
    }

    /// Synthetic basis: 16 vertices, mouth = vertices 0..4, and the mouth
    /// coordinates load only on the first `mouth_dims` motion dims, so the
    /// lip/style factorization is exactly testable.
    pub fn synthetic(motion_dim: usize, mouth_dims: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let v = 16;
        let mouth_count = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean_shape = Tensor::<S>::randn(v, 3, &mut rng).scale(S::from_f(0.1));
        let mut bases = Tensor::<S>::randn(3 * v, motion_dim, &mut rng)
            .scale(S::from_f(0.5))
            .data()
            .to_vec();
        for vertex in 0..mouth_count {
            for coord in 0..3 {
                let row = 3 * vertex + coord;
                for dim in mouth_dims..motion_dim {
                    bases[row * motion_dim + dim] = S::zero();
                }
            }
        }
        FaceBasis {
            mean_shape,
            expr_bases: Tensor::matrix(3 * v, motion_dim, bases),
            mouth_index: (0..mouth_count).collect(),
        }
    }

    /// Store the basis as a named-tensor section (buffers, never trained).
    pub fn insert_into(&self, store: &mut ParameterStore<S>) {
        store.insert_buffer("basis.mean_shape", self.mean_shape.clone());
        store.insert_buffer("basis.expr_bases", self.expr_bases.clone());
        let idx: Vec<S> = self.mouth_index.iter().map(|&i| S::from_f(i as f64)).collect();
        store.insert_buffer("basis.mouth_index", Tensor::row(idx));
    }

    pub fn from_store(store: &ParameterStore<S>) -> Result<Self> {
        let mean_shape = store.get("basis.mean_shape")?.clone();
        let expr_bases = store.get("basis.expr_bases")?.clone();
        let mouth_index = store
            .get("basis.mouth_index")?
            .data()
            .iter()
            .map(|v| v.to_f() as usize)
            .collect();
        let basis = FaceBasis {
            mean_shape,
            expr_bases,
            mouth_index,
        };
        basis.validate()?;
        Ok(basis)
    }
}

// ---------------------------------------------------------------------------
// Sync pair sampling
// ---------------------------------------------------------------------------

/// Offsets of one training pair inside a clip.
#[derive(Clone, Copy, Debug)]
pub struct SyncPair {
    pub motion_start: usize,
    pub audio_start: usize,
    pub synchronous: bool,
}

/// Sample a positive (aligned) or negative (audio shifted by at least `n`
/// frames when possible) pair. The label is drawn 50/50.
pub fn sample_sync_pair(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<SyncPair> {
    if len < 2 * n {
        return Err(Error::invalid(
            "sample_sync_pair",
            format!("sequence length {len} shorter than 2n = {}", 2 * n),
        ));
    }
    let max_start = len - n;
    let motion_start = rng.gen_range(0..=max_start);
    let synchronous = rng.gen_bool(0.5);
    if synchronous {
        return Ok(SyncPair {
            motion_start,
            audio_start: motion_start,
            synchronous,
        });
    }
    let far: Vec<usize> = (0..=max_start)
        .filter(|&q| q.abs_diff(motion_start) >= n)
        .collect();
    let audio_start = if far.is_empty() {
        // degenerate geometry; fall back to any mismatched offset
        let near: Vec<usize> = (0..=max_start).filter(|&q| q != motion_start).collect();
        near[rng.gen_range(0..near.len())]
    } else {
        far[rng.gen_range(0..far.len())]
    };
    Ok(SyncPair {
        motion_start,
        audio_start,
        synchronous,
    })
}

// ---------------------------------------------------------------------------
// The expert
// ---------------------------------------------------------------------------

pub struct LipExpert {
    pub cfg: ExpertConfig,
    style_in: Linear,
    style_enc: Vec<EncoderLayer>,
    style_pool: AttentionPool,
    audio_convs: Vec<ConvBlock>,
    audio_head: Mlp,
    mouth_in: Mlp,
    mouth_convs: Vec<ConvBlock>,
    mouth_head: Mlp,
}

impl LipExpert {
    pub fn new(cfg: ExpertConfig) -> Self {
        let sh = cfg.style_hidden;
        let [c1, c2, c3] = cfg.conv_channels;
        let audio_convs = vec![
            ConvBlock::new("expert.audio_conv.0", cfg.audio_dim, c1, 3, 2),
            ConvBlock::new("expert.audio_conv.1", c1, c2, 3, 2),
            ConvBlock::new("expert.audio_conv.2", c2, c3, 3, 2),
        ];
        let mouth_convs = vec![
            ConvBlock::new("expert.mouth_conv.0", c3, c3, 3, 1).residual(),
            ConvBlock::new("expert.mouth_conv.1", c3, c3, 3, 1).residual(),
        ];
        LipExpert {
            style_in: Linear::new("expert.style_in", cfg.motion_dim, sh),
            style_enc: (0..cfg.style_layers)
                .map(|i| EncoderLayer::new(format!("expert.style_enc.{i}"), sh, cfg.style_heads, 4 * sh))
                .collect(),
            style_pool: AttentionPool::new("expert.style_pool", sh),
            audio_convs,
            audio_head: Mlp::new("expert.audio_head", c3 + sh, cfg.mlp_hidden, cfg.embed_dim),
            mouth_in: Mlp::new("expert.mouth_in", cfg.mouth_dim, c3, c3),
            mouth_convs,
            mouth_head: Mlp::new("expert.mouth_head", c3 + sh, cfg.mlp_hidden, cfg.embed_dim),
            cfg,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.style_in.init(store, rng);
        for l in &self.style_enc {
            l.init(store, rng);
        }
        self.style_pool.init(store, rng);
        for c in &self.audio_convs {
            c.init(store, rng);
        }
        self.audio_head.init(store, rng);
        self.mouth_in.init(store, rng);
        for c in &self.mouth_convs {
            c.init(store, rng);
        }
        self.mouth_head.init(store, rng);
    }

    pub fn fresh_store<S: Scalar>(&self, seed: u64, basis: &FaceBasis<S>) -> ParameterStore<S> {
        use rand::SeedableRng;
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init(&mut store, &mut rng);
        basis.insert_into(&mut store);
        store
    }

    /// Pooled style features of a reference clip (`1 x style_hidden`).
    /// The unconditional variant returns zeros through the same call.
    pub fn style_features<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        reference: &Tensor<S>,
    ) -> Result<Var> {
        if self.cfg.unconditional {
            return Ok(tape.constant(Tensor::zeros(1, self.cfg.style_hidden)));
        }
        if reference.cols() != self.cfg.motion_dim {
            return Err(Error::shape(
                "expert style_features",
                format!("reference dim {} != {}", reference.cols(), self.cfg.motion_dim),
            ));
        }
        let mut x = tape.constant(reference.clone());
        x = self.style_in.forward(tape, store, bind, x)?;
        let pos = tape.constant(nn::positional_matrix::<S>(reference.rows(), self.cfg.style_hidden));
        x = tape.add(x, pos)?;
        for l in &self.style_enc {
            x = l.forward(tape, store, bind, x)?;
        }
        self.style_pool.forward(tape, store, bind, x)
    }

    /// Embed a batch of audio clips (`(B*n) x audio_dim` stacked rows) into
    /// nonnegative embeddings (`B x embed_dim`).
    #[allow(clippy::too_many_arguments)]
    pub fn embed_audio<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        audio: Var,
        batch: usize,
        style_feats: Var,
        training: bool,
    ) -> Result<Var> {
        let n = self.cfg.clip_len;
        if tape.value(audio).rows() != batch * n {
            return Err(Error::shape(
                "embed_audio",
                format!("{} rows != batch {batch} * n {n}", tape.value(audio).rows()),
            ));
        }
        let mut x = audio;
        let mut len = n;
        for c in &self.audio_convs {
            let (y, l) = c.forward(tape, store, bind, x, batch, len, training)?;
            x = y;
            len = l;
        }
        let pooled = tape.group_mean_rows(x, len)?; // B x c3
        let joined = tape.concat_cols(&[pooled, style_feats])?;
        let e = self.audio_head.forward(tape, store, bind, joined)?;
        Ok(tape.relu(e))
    }

    /// Embed a batch of mouth-vertex clips (`(B*n) x mouth_dim`) into
    /// nonnegative embeddings (`B x embed_dim`).
    #[allow(clippy::too_many_arguments)]
    pub fn embed_mouth<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        mouth: Var,
        batch: usize,
        style_feats: Var,
        training: bool,
    ) -> Result<Var> {
        let n = self.cfg.clip_len;
        if tape.value(mouth).rows() != batch * n {
            return Err(Error::shape(
                "embed_mouth",
                format!("{} rows != batch {batch} * n {n}", tape.value(mouth).rows()),
            ));
        }
        let mut x = self.mouth_in.forward(tape, store, bind, mouth)?;
        x = tape.relu(x);
        let mut len = n;
        for c in &self.mouth_convs {
            let (y, l) = c.forward(tape, store, bind, x, batch, len, training)?;
            x = y;
            len = l;
        }
        let pooled = tape.group_mean_rows(x, len)?;
        let joined = tape.concat_cols(&[pooled, style_feats])?;
        let e = self.mouth_head.forward(tape, store, bind, joined)?;
        Ok(tape.relu(e))
    }

    /// Row-wise sync probability: cosine similarity of nonnegative
    /// embeddings with an epsilon-guarded denominator. Output `B x 1`,
    /// every entry in [0, 1].
    pub fn sync_probability<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        e_mouth: Var,
        e_audio: Var,
    ) -> Result<Var> {
        let d = tape.value(e_mouth).cols();
        let ones = tape.constant(Tensor::full(d, 1, S::one()));
        let prod = tape.mul(e_mouth, e_audio)?;
        let dots = tape.matmul(prod, ones)?; // B x 1
        let m2 = tape.mul(e_mouth, e_mouth)?;
        let a2 = tape.mul(e_audio, e_audio)?;
        let msq = tape.matmul(m2, ones)?;
        let asq = tape.matmul(a2, ones)?;
        let mn = tape.sqrt(msq);
        let an = tape.sqrt(asq);
        let den = tape.mul(mn, an)?;
        let den = tape.max_scalar(den, COSINE_EPS);
        let p = tape.div(dots, den)?;
        Ok(tape.clamp(p, 0.0, 1.0))
    }

    /// Mean binary cross-entropy of probabilities against labels
    /// (`labels[i]` is 1 for synchronous pairs).
    pub fn bce_loss<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        probs: Var,
        labels: &[f64],
    ) -> Result<Var> {
        let b = tape.value(probs).rows();
        if labels.len() != b {
            return Err(Error::shape(
                "bce_loss",
                format!("{} labels for {b} probabilities", labels.len()),
            ));
        }
        let y = tape.constant(Tensor::matrix(
            b,
            1,
            labels.iter().map(|&v| S::from_f(v)).collect(),
        ));
        let p = tape.clamp(probs, PROB_EPS, 1.0 - PROB_EPS);
        let ln_p = tape.ln(p);
        let q = tape.affine(p, -1.0, 1.0);
        let ln_q = tape.ln(q);
        let one_minus_y = tape.affine(y, -1.0, 1.0);
        let pos = tape.mul(y, ln_p)?;
        let neg = tape.mul(one_minus_y, ln_q)?;
        let sum = tape.add(pos, neg)?;
        let mean = tape.mean_all(sum);
        Ok(tape.affine(mean, -1.0, 0.0))
    }

    /// Convenience: score one clip pair with frozen weights (eval-mode
    /// batch norm), returning the probability.
    #[allow(clippy::too_many_arguments)]
    pub fn score_clip<S: Scalar>(
        &self,
        store: &ParameterStore<S>,
        basis: &FaceBasis<S>,
        audio: &Tensor<S>,
        motion: &Tensor<S>,
        reference: &Tensor<S>,
    ) -> Result<f64> {
        let n = self.cfg.clip_len;
        if audio.rows() != n || motion.rows() != n {
            return Err(Error::shape(
                "score_clip",
                format!("clip lengths {} / {} != n {n}", audio.rows(), motion.rows()),
            ));
        }
        let mut tape = Tape::inference();
        let feats = self.style_features(&mut tape, store, Bind::Frozen, reference)?;
        let audio_v = tape.constant(audio.clone());
        let mouth = basis.mouth_vertices(motion)?;
        let mouth_v = tape.constant(mouth);
        let e_a = self.embed_audio(&mut tape, store, Bind::Frozen, audio_v, 1, feats, false)?;
        let e_m = self.embed_mouth(&mut tape, store, Bind::Frozen, mouth_v, 1, feats, false)?;
        let p = self.sync_probability(&mut tape, e_m, e_a)?;
        Ok(tape.value(p).item().to_f())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn desk() -> (LipExpert, ParameterStore<f64>, FaceBasis<f64>) {
        let cfg = ExpertConfig::desk();
        let basis = FaceBasis::<f64>::synthetic(cfg.motion_dim, 8, 99);
        let expert = LipExpert::new(cfg);
        let store = expert.fresh_store(5, &basis);
        (expert, store, basis)
    }

    #[test]
    fn mouth_of_zero_motion_is_mean_shape() {
        let (_, _, basis) = desk();
        let zero = Tensor::<f64>::zeros(1, 64);
        let mouth = basis.mouth_vertices(&zero).unwrap();
        let idx = basis.mouth_coord_indices();
        for (k, &j) in idx.iter().enumerate() {
            assert_eq!(mouth.data()[k], basis.mean_shape.data()[j]);
        }
    }

    #[test]
    fn mouth_is_affine_in_motion() {
        let (_, _, basis) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m1 = Tensor::<f64>::randn(1, 64, &mut rng);
        let m2 = Tensor::<f64>::randn(1, 64, &mut rng);
        let zero = Tensor::<f64>::zeros(1, 64);
        let f = |m: &Tensor<f64>| basis.mouth_vertices(m).unwrap();
        let sum = m1.zip_map(&m2, |a, b| a + b);
        let lhs = f(&sum);
        let f0 = f(&zero);
        for i in 0..lhs.len() {
            let rhs = (f(&m1).data()[i] - f0.data()[i]) + (f(&m2).data()[i] - f0.data()[i]) + f0.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn mouth_ignores_style_dims() {
        let (_, _, basis) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Tensor::<f64>::randn(1, 64, &mut rng);
        let mut bumped = m.data().to_vec();
        bumped[40] += 10.0;
        let bumped = Tensor::matrix(1, 64, bumped);
        let a = basis.mouth_vertices(&m).unwrap();
        let b = basis.mouth_vertices(&bumped).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn mouth_index_out_of_range_rejected() {
        let (_, _, mut basis) = desk();
        basis.mouth_index.push(999);
        assert!(basis.mouth_vertices(&Tensor::<f64>::zeros(1, 64)).is_err());
    }

    #[test]
    fn embeddings_are_nonnegative_and_prob_in_unit_interval() {
        let (expert, store, basis) = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let audio = Tensor::<f64>::randn(5, 32, &mut rng).scale(3.0);
            let motion = Tensor::<f64>::randn(5, 64, &mut rng).scale(3.0);
            let reference = Tensor::<f64>::randn(64, 64, &mut rng);
            let mut tape = Tape::inference();
            let feats = expert
                .style_features(&mut tape, &store, Bind::Frozen, &reference)
                .unwrap();
            let av = tape.constant(audio.clone());
            let mv = tape.constant(basis.mouth_vertices(&motion).unwrap());
            let ea = expert
                .embed_audio(&mut tape, &store, Bind::Frozen, av, 1, feats, false)
                .unwrap();
            let em = expert
                .embed_mouth(&mut tape, &store, Bind::Frozen, mv, 1, feats, false)
                .unwrap();
            assert!(tape.value(ea).data().iter().all(|v| *v >= 0.0));
            assert!(tape.value(em).data().iter().all(|v| *v >= 0.0));
            let p = expert.sync_probability(&mut tape, em, ea).unwrap();
            let pv = tape.value(p).item();
            assert!((0.0..=1.0).contains(&pv), "p = {pv}");
        }
    }

    #[test]
    fn cosine_identities() {
        let (expert, _, _) = desk();
        let mut tape = Tape::<f64>::inference();
        // identical nonzero embeddings -> 1
        let e = tape.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 0.5]));
        let p = expert.sync_probability(&mut tape, e, e).unwrap();
        assert!((tape.value(p).item() - 1.0).abs() < 1e-12);
        // disjoint supports -> 0
        let a = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]));
        let b = tape.constant(Tensor::matrix(1, 2, vec![0.0, 1.0]));
        let p = expert.sync_probability(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(p).item(), 0.0);
        // zero vectors -> 0 via the epsilon guard
        let z = tape.constant(Tensor::zeros(1, 2));
        let p = expert.sync_probability(&mut tape, z, z).unwrap();
        assert_eq!(tape.value(p).item(), 0.0);
    }

    #[test]
    fn bce_reference_points() {
        let (expert, _, _) = desk();
        let mut tape = Tape::<f64>::inference();
        let p = tape.constant(Tensor::matrix(1, 1, vec![0.5]));
        let l = expert.bce_loss(&mut tape, p, &[1.0]).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-9);
        let l = expert.bce_loss(&mut tape, p, &[0.0]).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-9);
        let p1 = tape.constant(Tensor::matrix(1, 1, vec![1.0]));
        let l = expert.bce_loss(&mut tape, p1, &[1.0]).unwrap();
        assert!(tape.value(l).item() < 1e-6);
    }

    #[test]
    fn pair_sampling_labels_and_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        assert!(sample_sync_pair(9, n, &mut rng).is_err());
        let mut pos = 0usize;
        let total = 10_000;
        for _ in 0..total {
            let pair = sample_sync_pair(64, n, &mut rng).unwrap();
            if pair.synchronous {
                assert_eq!(pair.motion_start, pair.audio_start);
                pos += 1;
            } else {
                assert!(pair.motion_start.abs_diff(pair.audio_start) >= n);
            }
        }
        // 50/50 within 3 sigma
        let sigma = (total as f64 * 0.25).sqrt();
        assert!((pos as f64 - total as f64 / 2.0).abs() < 3.0 * sigma, "pos = {pos}");
    }

    #[test]
    fn unconditional_expert_ignores_reference() {
        let (_, _, basis) = desk();
        let mut cfg = ExpertConfig::desk();
        cfg.unconditional = true;
        let expert = LipExpert::new(cfg);
        let store = expert.fresh_store::<f64>(5, &basis);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let audio = Tensor::<f64>::randn(5, 32, &mut rng);
        let motion = Tensor::<f64>::randn(5, 64, &mut rng);
        let r1 = Tensor::<f64>::randn(64, 64, &mut rng);
        let r2 = Tensor::<f64>::randn(64, 64, &mut rng);
        let p1 = expert.score_clip(&store, &basis, &audio, &motion, &r1).unwrap();
        let p2 = expert.score_clip(&store, &basis, &audio, &motion, &r2).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn basis_store_roundtrip() {
        let (_, _, basis) = desk();
        let mut store = ParameterStore::<f64>::new();
        basis.insert_into(&mut store);
        let back = FaceBasis::from_store(&store).unwrap();
        assert_eq!(back.mouth_index, basis.mouth_index);
        assert_eq!(back.expr_bases.data(), basis.expr_bases.data());
    }
}
