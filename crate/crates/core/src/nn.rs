//! Trainable layer toolkit: dense, attention, transformer blocks,
//! convolution blocks, pooling and positional encodings.
//!
//! Layers own no tensors; they hold names and dimensions, register their
//! parameters in a [`ParameterStore`] at init time and look them up when
//! building a forward graph on a [`Tape`]. `Bind::Frozen` runs the same
//! forward with gradients stopped at the weights, which is how a frozen
//! network participates in someone else's loss.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

/// Whether layer weights participate in the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bind {
    Train,
    Frozen,
}

fn bind_param<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParameterStore<S>,
    name: &str,
    bind: Bind,
) -> Result<Var> {
    match bind {
        Bind::Train => tape.param(store, name),
        Bind::Frozen => tape.frozen(store, name),
    }
}

/// Fan-in uniform init: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn fan_in_uniform<S: Scalar>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::rand_uniform(rows, cols, bound, rng)
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            name: name.into(),
            in_dim,
            out_dim,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.init_impl(store, rng, false);
    }

    /// Zero-initialized weights; used for output projections on residual
    /// paths so fresh blocks start as the identity.
    pub fn init_zero<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.init_impl(store, rng, true);
    }

    fn init_impl<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng, zero: bool) {
        let w = if zero {
            Tensor::zeros(self.in_dim, self.out_dim)
        } else {
            fan_in_uniform(self.in_dim, self.out_dim, self.in_dim, rng)
        };
        store.insert(format!("{}.w", self.name), w);
        store.insert(format!("{}.b", self.name), Tensor::zeros(1, self.out_dim));
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        x: Var,
    ) -> Result<Var> {
        let w = bind_param(tape, store, &format!("{}.w", self.name), bind)?;
        let b = bind_param(tape, store, &format!("{}.b", self.name), bind)?;
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }
}

// ---------------------------------------------------------------------------
// LayerNorm (learned affine)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        LayerNorm {
            name: name.into(),
            dim,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>) {
        store.insert(format!("{}.g", self.name), Tensor::full(1, self.dim, S::one()));
        store.insert(format!("{}.b", self.name), Tensor::zeros(1, self.dim));
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        x: Var,
    ) -> Result<Var> {
        let g = bind_param(tape, store, &format!("{}.g", self.name), bind)?;
        let b = bind_param(tape, store, &format!("{}.b", self.name), bind)?;
        let n = tape.layer_norm_rows(x, LAYER_NORM_EPS);
        let n = tape.mul_row(n, g)?;
        tape.add_row(n, b)
    }
}

// ---------------------------------------------------------------------------
// Multi-head attention
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub name: String,
    pub dim: usize,
    pub heads: usize,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
}

impl MultiHeadAttention {
    pub fn new(name: impl Into<String>, dim: usize, heads: usize) -> Self {
        let name = name.into();
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by heads {heads}");
        MultiHeadAttention {
            wq: Linear::new(format!("{name}.wq"), dim, dim),
            wk: Linear::new(format!("{name}.wk"), dim, dim),
            wv: Linear::new(format!("{name}.wv"), dim, dim),
            wo: Linear::new(format!("{name}.wo"), dim, dim),
            name,
            dim,
            heads,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.wq.init(store, rng);
        self.wk.init(store, rng);
        self.wv.init(store, rng);
        self.wo.init_zero(store, rng);
    }

    /// `softmax(Q Kᵀ / sqrt(d_h)) V` per head, heads concatenated, projected.
    /// Self-attention passes the same Var for `q_in` and `kv_in`.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        q_in: Var,
        kv_in: Var,
    ) -> Result<Var> {
        let q = self.wq.forward(tape, store, bind, q_in)?;
        let k = self.wk.forward(tape, store, bind, kv_in)?;
        let v = self.wv.forward(tape, store, bind, kv_in)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (c0, c1) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, c0, c1)?;
            let kh = tape.slice_cols(k, c0, c1)?;
            let vh = tape.slice_cols(v, c0, c1)?;
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.affine(scores, scale, 0.0);
            let attn = tape.softmax_rows(scores);
            heads.push(tape.matmul(attn, vh)?);
        }
        let cat = tape.concat_cols(&heads)?;
        self.wo.forward(tape, store, bind, cat)
    }

    /// Attention weights of head 0 (diagnostic; rows sum to one).
    pub fn attention_rows<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        q_in: Var,
        kv_in: Var,
    ) -> Result<Var> {
        let q = self.wq.forward(tape, store, Bind::Frozen, q_in)?;
        let k = self.wk.forward(tape, store, Bind::Frozen, kv_in)?;
        let dh = self.dim / self.heads;
        let qh = tape.slice_cols(q, 0, dh)?;
        let kh = tape.slice_cols(k, 0, dh)?;
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.affine(scores, 1.0 / (dh as f64).sqrt(), 0.0);
        Ok(tape.softmax_rows(scores))
    }
}

// ---------------------------------------------------------------------------
// Transformer encoder / decoder layers (pre-norm residual blocks)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FeedForward {
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    pub fn new(name: &str, dim: usize, inner: usize) -> Self {
        FeedForward {
            fc1: Linear::new(format!("{name}.fc1"), dim, inner),
            fc2: Linear::new(format!("{name}.fc2"), inner, dim),
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.fc1.init(store, rng);
        self.fc2.init_zero(store, rng);
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        x: Var,
    ) -> Result<Var> {
        let h = self.fc1.forward(tape, store, bind, x)?;
        let h = tape.relu(h);
        self.fc2.forward(tape, store, bind, h)
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub name: String,
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(name: impl Into<String>, dim: usize, heads: usize, inner: usize) -> Self {
        let name = name.into();
        EncoderLayer {
            ln1: LayerNorm::new(format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(format!("{name}.attn"), dim, heads),
            ln2: LayerNorm::new(format!("{name}.ln2"), dim),
            ff: FeedForward::new(&format!("{name}.ff"), dim, inner),
            name,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.ln1.init(store);
        self.attn.init(store, rng);
        self.ln2.init(store);
        self.ff.init(store, rng);
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        x: Var,
    ) -> Result<Var> {
        let n = self.ln1.forward(tape, store, bind, x)?;
        let a = self.attn.forward(tape, store, bind, n, n)?;
        let x = tape.add(x, a)?;
        let n = self.ln2.forward(tape, store, bind, x)?;
        let f = self.ff.forward(tape, store, bind, n)?;
        tape.add(x, f)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub name: String,
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(name: impl Into<String>, dim: usize, heads: usize, inner: usize) -> Self {
        let name = name.into();
        DecoderLayer {
            ln1: LayerNorm::new(format!("{name}.ln1"), dim),
            self_attn: MultiHeadAttention::new(format!("{name}.self_attn"), dim, heads),
            ln2: LayerNorm::new(format!("{name}.ln2"), dim),
            cross_attn: MultiHeadAttention::new(format!("{name}.cross_attn"), dim, heads),
            ln3: LayerNorm::new(format!("{name}.ln3"), dim),
            ff: FeedForward::new(&format!("{name}.ff"), dim, inner),
            name,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.ln1.init(store);
        self.self_attn.init(store, rng);
        self.ln2.init(store);
        self.cross_attn.init(store, rng);
        self.ln3.init(store);
        self.ff.init(store, rng);
    }

    /// Queries attend to themselves, then cross-attend to `memory`.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        q: Var,
        memory: Var,
    ) -> Result<Var> {
        let n = self.ln1.forward(tape, store, bind, q)?;
        let a = self.self_attn.forward(tape, store, bind, n, n)?;
        let q = tape.add(q, a)?;
        let n = self.ln2.forward(tape, store, bind, q)?;
        let a = self.cross_attn.forward(tape, store, bind, n, memory)?;
        let q = tape.add(q, a)?;
        let n = self.ln3.forward(tape, store, bind, q)?;
        let f = self.ff.forward(tape, store, bind, n)?;
        tape.add(q, f)
    }
}

// ---------------------------------------------------------------------------
// Self-attention pooling
// ---------------------------------------------------------------------------

/// Aggregates a token sequence into one vector: weights are a softmax over
/// a learned scoring direction, output is the weighted sum of tokens.
#[derive(Clone, Debug)]
pub struct AttentionPool {
    pub name: String,
    pub dim: usize,
}

impl AttentionPool {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        AttentionPool {
            name: name.into(),
            dim,
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        store.insert(
            format!("{}.u", self.name),
            fan_in_uniform::<S>(self.dim, 1, self.dim, rng),
        );
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        tokens: Var,
    ) -> Result<Var> {
        let u = bind_param(tape, store, &format!("{}.u", self.name), bind)?;
        let scores = tape.matmul(tokens, u)?; // N x 1
        let row = tape.transpose(scores); // 1 x N
        let weights = tape.softmax_rows(row); // 1 x N
        tape.matmul(weights, tokens) // 1 x dim
    }
}

// ---------------------------------------------------------------------------
// Convolution blocks (Conv1d -> BatchNorm -> ReLU)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Adds the block input to the pre-activation when shapes agree.
    pub residual: bool,
}

impl ConvBlock {
    pub fn new(name: impl Into<String>, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        ConvBlock {
            name: name.into(),
            c_in,
            c_out,
            kernel,
            stride,
            pad: kernel / 2,
            residual: false,
        }
    }

    pub fn residual(mut self) -> Self {
        self.residual = true;
        self
    }

    pub fn len_out(&self, len_in: usize) -> usize {
        (len_in + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        let fan_in = self.c_in * self.kernel;
        store.insert(
            format!("{}.conv.w", self.name),
            fan_in_uniform::<S>(self.kernel * self.c_in, self.c_out, fan_in, rng),
        );
        store.insert(format!("{}.conv.b", self.name), Tensor::zeros(1, self.c_out));
        store.insert(format!("{}.bn.g", self.name), Tensor::full(1, self.c_out, S::one()));
        store.insert(format!("{}.bn.b", self.name), Tensor::zeros(1, self.c_out));
        store.insert_buffer(
            format!("{}.bn.running_mean", self.name),
            Tensor::zeros(1, self.c_out),
        );
        store.insert_buffer(
            format!("{}.bn.running_var", self.name),
            Tensor::full(1, self.c_out, S::one()),
        );
    }

    /// `x` holds `batch` sequences of `len_in` rows. Returns the activated
    /// output and its per-sequence length.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        x: Var,
        batch: usize,
        len_in: usize,
        training: bool,
    ) -> Result<(Var, usize)> {
        let w = bind_param(tape, store, &format!("{}.conv.w", self.name), bind)?;
        let b = bind_param(tape, store, &format!("{}.conv.b", self.name), bind)?;
        let y = tape.conv1d(x, w, b, batch, len_in, self.kernel, self.stride, self.pad)?;
        let gamma = bind_param(tape, store, &format!("{}.bn.g", self.name), bind)?;
        let beta = bind_param(tape, store, &format!("{}.bn.b", self.name), bind)?;
        let rm = store.get(&format!("{}.bn.running_mean", self.name))?.clone();
        let rv = store.get(&format!("{}.bn.running_var", self.name))?.clone();
        let mut y = tape.batch_norm(
            y,
            gamma,
            beta,
            &rm,
            &rv,
            BATCH_NORM_EPS,
            training,
            &format!("{}.bn", self.name),
        )?;
        let len_out = self.len_out(len_in);
        if self.residual && self.c_in == self.c_out && len_out == len_in {
            y = tape.add(y, x)?;
        }
        Ok((tape.relu(y), len_out))
    }
}

/// Fold recorded batch statistics into running buffers:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn apply_bn_updates<S: Scalar>(
    store: &mut ParameterStore<S>,
    stats: &[(String, Tensor<S>, Tensor<S>)],
) -> Result<()> {
    let m = S::from_f(BATCH_NORM_MOMENTUM);
    let km = S::one() - m;
    for (key, mean, var) in stats {
        let rm_name = format!("{key}.running_mean");
        let rv_name = format!("{key}.running_var");
        let rm = store.get(&rm_name)?.zip_map(mean, |r, b| km * r + m * b);
        let rv = store.get(&rv_name)?.zip_map(var, |r, b| km * r + m * b);
        store.set(&rm_name, rm)?;
        store.set(&rv_name, rv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Two-layer MLP head
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(name: &str, in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Mlp {
            fc1: Linear::new(format!("{name}.fc1"), in_dim, hidden),
            fc2: Linear::new(format!("{name}.fc2"), hidden, out_dim),
        }
    }

    pub fn init<S: Scalar>(&self, store: &mut ParameterStore<S>, rng: &mut ChaCha8Rng) {
        self.fc1.init(store, rng);
        self.fc2.init(store, rng);
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParameterStore<S>,
        bind: Bind,
        x: Var,
    ) -> Result<Var> {
        let h = self.fc1.forward(tape, store, bind, x)?;
        let h = tape.relu(h);
        self.fc2.forward(tape, store, bind, h)
    }
}

// ---------------------------------------------------------------------------
// Sinusoidal embeddings
// ---------------------------------------------------------------------------

/// Interleaved sin/cos embedding of an integer index. `dim` must be even.
pub fn sinusoidal_embedding(index: usize, dim: usize) -> Vec<f64> {
    assert!(dim % 2 == 0, "sinusoidal embedding dim must be even, got {dim}");
    let mut out = vec![0.0; dim];
    for i in 0..dim / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        let angle = index as f64 * freq;
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    out
}

pub fn sinusoidal_row<S: Scalar>(index: usize, dim: usize) -> Tensor<S> {
    Tensor::row(sinusoidal_embedding(index, dim).into_iter().map(S::from_f).collect())
}

/// Rows 0..n of the sinusoidal table, used as additive positional encodings.
pub fn positional_matrix<S: Scalar>(n: usize, dim: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        data.extend(sinusoidal_embedding(i, dim).into_iter().map(S::from_f));
    }
    Tensor::matrix(n, dim, data)
}
