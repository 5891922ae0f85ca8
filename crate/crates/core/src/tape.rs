//! Tape-based reverse-mode automatic differentiation.
//!
//! A `Tape` records a dynamic graph of matrix operations. Every value is a
//! matrix (`1 x n` rows for vectors, `1 x 1` for scalars). Calling
//! [`Tape::backward`] on a scalar output walks the tape in reverse and
//! accumulates gradients into per-node slots; gradients of registered
//! parameters are then collected by name.
//!
//! Gradient flow stops at constants, so running a frozen sub-network inside
//! a training graph is just a matter of binding its weights with
//! [`Tape::constant`] instead of [`Tape::param`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

type BackFn<S> = Box<dyn Fn(&Tensor<S>, &mut Grads<S>)>;

struct Node<S> {
    value: Tensor<S>,
    rq: bool,
    back: Option<BackFn<S>>,
}

/// Per-node gradient slots populated during the reverse sweep.
pub struct Grads<S> {
    slots: Vec<Option<Tensor<S>>>,
    rq: Vec<bool>,
}

impl<S: Scalar> Grads<S> {
    pub fn add(&mut self, v: Var, g: Tensor<S>) {
        if !self.rq[v.0] {
            return;
        }
        match &mut self.slots[v.0] {
            Some(acc) => acc.accumulate(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.slots[v.0].as_ref()
    }
}

/// Batch-norm statistics observed during a training-mode forward pass,
/// keyed by layer name. The trainer folds them into running buffers after
/// the optimizer step.
pub type BatchStats<S> = Vec<(String, Tensor<S>, Tensor<S>)>;

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grad_enabled: bool,
    params: BTreeMap<String, Var>,
    bn_stats: BatchStats<S>,
}

impl<S: Scalar> Tape<S> {
    /// Tape that records backward closures (for training and grad checks).
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: true,
            params: BTreeMap::new(),
            bn_stats: Vec::new(),
        }
    }

    /// Forward-only tape: no backward closures are allocated.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: false,
            params: BTreeMap::new(),
            bn_stats: Vec::new(),
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, rq: bool, back: Option<BackFn<S>>) -> Var {
        let rq = rq && self.grad_enabled;
        self.nodes.push(Node {
            value,
            rq,
            back: if rq { back } else { None },
        });
        Var(self.nodes.len() - 1)
    }

    /// A value gradients never flow into.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, false, None)
    }

    /// A differentiable input that is not a named parameter.
    pub fn input(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, None)
    }

    /// Bind a named parameter from the store as a leaf (memoized per tape).
    pub fn param(&mut self, store: &ParameterStore<S>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.get(name)?.clone();
        let v = self.push(value, true, None);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Bind a named parameter as a frozen constant.
    pub fn frozen(&mut self, store: &ParameterStore<S>, name: &str) -> Result<Var> {
        let value = store.get(name)?.clone();
        Ok(self.constant(value))
    }

    pub fn take_bn_stats(&mut self) -> BatchStats<S> {
        std::mem::take(&mut self.bn_stats)
    }

    fn rq(&self, v: Var) -> bool {
        self.nodes[v.0].rq
    }

    // ---- elementwise and arithmetic ----------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if !ta.same_shape(&tb) {
            return Err(Error::shape("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out = ta.zip_map(&tb, |x, y| x + y);
        let rq = self.rq(a) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.clone());
                sink.add(b, g.clone());
            })),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if !ta.same_shape(&tb) {
            return Err(Error::shape("sub", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out = ta.zip_map(&tb, |x, y| x - y);
        let rq = self.rq(a) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.clone());
                sink.add(b, g.map(|v| -v));
            })),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if !ta.same_shape(&tb) {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out = ta.zip_map(&tb, |x, y| x * y);
        let rq = self.rq(a) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.zip_map(&tb, |gv, bv| gv * bv));
                sink.add(b, g.zip_map(&ta, |gv, av| gv * av));
            })),
        ))
    }

    /// `k * a + c`, elementwise with scalar coefficients.
    pub fn affine(&mut self, a: Var, k: f64, c: f64) -> Var {
        let (ks, cs) = (S::from_f(k), S::from_f(c));
        let out = self.value(a).map(|x| ks * x + cs);
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| sink.add(a, g.map(|v| v * ks)))),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        let out = ta.matmul(&tb)?;
        let rq = self.rq(a) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.matmul(&tb.transpose()).expect("matmul backward lhs"));
                sink.add(b, ta.transpose().matmul(g).expect("matmul backward rhs"));
            })),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| sink.add(a, g.transpose()))),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a).clone();
        let out = ta.map(|x| if x > S::zero() { x } else { S::zero() });
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(
                    a,
                    g.zip_map(&ta, |gv, av| if av > S::zero() { gv } else { S::zero() }),
                );
            })),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        let y = out.clone();
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.zip_map(&y, |gv, yv| gv * (S::one() - yv * yv)));
            })),
        )
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.sqrt());
        let y = out.clone();
        let half = S::from_f(0.5);
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.zip_map(&y, |gv, yv| gv * half / yv));
            })),
        )
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let ta = self.value(a).clone();
        let out = ta.map(|x| x.ln());
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.zip_map(&ta, |gv, av| gv / av));
            })),
        )
    }

    /// Clamp to `[lo, hi]`; gradient passes only through the interior.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let (los, his) = (S::from_f(lo), S::from_f(hi));
        let ta = self.value(a).clone();
        let out = ta.map(|x| x.max(los).min(his));
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(
                    a,
                    g.zip_map(&ta, |gv, av| {
                        if av > los && av < his {
                            gv
                        } else {
                            S::zero()
                        }
                    }),
                );
            })),
        )
    }

    /// Elementwise lower bound against a constant: `max(a, floor)`.
    pub fn max_scalar(&mut self, a: Var, floor: f64) -> Var {
        let fs = S::from_f(floor);
        let ta = self.value(a).clone();
        let out = ta.map(|x| x.max(fs));
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(
                    a,
                    g.zip_map(&ta, |gv, av| if av > fs { gv } else { S::zero() }),
                );
            })),
        )
    }

    /// Elementwise division of same-shape tensors.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a).clone(), self.value(b).clone());
        if !ta.same_shape(&tb) {
            return Err(Error::shape("div", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let out = ta.zip_map(&tb, |x, y| x / y);
        let rq = self.rq(a) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.zip_map(&tb, |gv, bv| gv / bv));
                let gb = g
                    .data()
                    .iter()
                    .zip(ta.data().iter().zip(tb.data().iter()))
                    .map(|(&gv, (&av, &bv))| -gv * av / (bv * bv))
                    .collect();
                sink.add(b, Tensor::from_vec(tb.shape().to_vec(), gb));
            })),
        ))
    }

    /// Divide by a `1 x 1` scalar node, broadcasting over `a`.
    pub fn div_scalar(&mut self, a: Var, b: Var) -> Result<Var> {
        let tb = self.value(b).clone();
        if tb.len() != 1 {
            return Err(Error::shape("div_scalar", format!("divisor shape {:?}", tb.shape())));
        }
        let ta = self.value(a).clone();
        let bv = tb.item();
        let out = ta.map(|x| x / bv);
        let rq = self.rq(a) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.map(|gv| gv / bv));
                let mut acc = S::zero();
                for (gv, av) in g.data().iter().zip(ta.data().iter()) {
                    acc += *gv * *av;
                }
                sink.add(b, Tensor::scalar(-acc / (bv * bv)));
            })),
        ))
    }

    // ---- reductions and broadcasts ------------------------------------

    pub fn sum_all(&mut self, a: Var) -> Var {
        let ta = self.value(a).clone();
        let total = ta.data().iter().fold(S::zero(), |acc, &v| acc + v);
        let (r, c) = (ta.rows(), ta.cols());
        let rq = self.rq(a);
        self.push(
            Tensor::scalar(total),
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, Tensor::full(r, c, g.item()));
            })),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.affine(s, 1.0 / n, 0.0)
    }

    /// Broadcast-add a `1 x C` row onto every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a).clone(), self.value(row).clone());
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(Error::shape(
                "add_row",
                format!("matrix {:?} row {:?}", ta.shape(), tr.shape()),
            ));
        }
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tr.data()[i % c])
            .collect();
        let out = Tensor::matrix(ta.rows(), c, data);
        let rq = self.rq(a) || self.rq(row);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(a, g.clone());
                sink.add(row, g.sum_rows());
            })),
        ))
    }

    /// Broadcast-multiply a `1 x C` row onto every row of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a).clone(), self.value(row).clone());
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(Error::shape(
                "mul_row",
                format!("matrix {:?} row {:?}", ta.shape(), tr.shape()),
            ));
        }
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * tr.data()[i % c])
            .collect();
        let out = Tensor::matrix(ta.rows(), c, data);
        let rq = self.rq(a) || self.rq(row);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                let gc = g.cols();
                let ga = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * tr.data()[i % gc])
                    .collect();
                sink.add(a, Tensor::matrix(g.rows(), gc, ga));
                let gprod = g.zip_map(&ta, |gv, av| gv * av);
                sink.add(row, gprod.sum_rows());
            })),
        ))
    }

    /// Tile a `1 x C` row `n` times into an `n x C` matrix.
    pub fn repeat_rows(&mut self, row: Var, n: usize) -> Result<Var> {
        let tr = self.value(row).clone();
        if tr.rows() != 1 {
            return Err(Error::shape("repeat_rows", format!("{:?}", tr.shape())));
        }
        let c = tr.cols();
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n {
            data.extend_from_slice(tr.data());
        }
        let rq = self.rq(row);
        Ok(self.push(
            Tensor::matrix(n, c, data),
            rq,
            Some(Box::new(move |g, sink| sink.add(row, g.sum_rows()))),
        ))
    }

    /// Mean over each consecutive group of `group_len` rows:
    /// `(G*group_len) x C -> G x C`.
    pub fn group_mean_rows(&mut self, a: Var, group_len: usize) -> Result<Var> {
        let ta = self.value(a).clone();
        let (r, c) = (ta.rows(), ta.cols());
        if group_len == 0 || r % group_len != 0 {
            return Err(Error::shape(
                "group_mean_rows",
                format!("{r} rows not divisible by group {group_len}"),
            ));
        }
        let groups = r / group_len;
        let inv = S::from_f(1.0 / group_len as f64);
        let mut data = vec![S::zero(); groups * c];
        for gidx in 0..groups {
            for l in 0..group_len {
                let base = (gidx * group_len + l) * c;
                for j in 0..c {
                    data[gidx * c + j] += ta.data()[base + j] * inv;
                }
            }
        }
        let rq = self.rq(a);
        Ok(self.push(
            Tensor::matrix(groups, c, data),
            rq,
            Some(Box::new(move |g, sink| {
                let mut ga = vec![S::zero(); r * c];
                for gidx in 0..groups {
                    for l in 0..group_len {
                        let base = (gidx * group_len + l) * c;
                        for j in 0..c {
                            ga[base + j] = g.data()[gidx * c + j] * inv;
                        }
                    }
                }
                sink.add(a, Tensor::matrix(r, c, ga));
            })),
        ))
    }

    // ---- structural ops ------------------------------------------------

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_rows", "empty part list"));
        }
        let c = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut row_counts = Vec::with_capacity(parts.len());
        let mut rq = false;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(Error::shape("concat_rows", format!("{} vs {} cols", t.cols(), c)));
            }
            row_counts.push(t.rows());
            data.extend_from_slice(t.data());
            rq |= self.rq(p);
        }
        let total: usize = row_counts.iter().sum();
        let parts_owned: Vec<Var> = parts.to_vec();
        Ok(self.push(
            Tensor::matrix(total, c, data),
            rq,
            Some(Box::new(move |g, sink| {
                let mut start = 0;
                for (&p, &rows) in parts_owned.iter().zip(row_counts.iter()) {
                    let slice = g.data()[start * c..(start + rows) * c].to_vec();
                    sink.add(p, Tensor::matrix(rows, c, slice));
                    start += rows;
                }
            })),
        ))
    }

    pub fn slice_rows(&mut self, a: Var, r0: usize, r1: usize) -> Result<Var> {
        let ta = self.value(a).clone();
        let (r, c) = (ta.rows(), ta.cols());
        if r0 >= r1 || r1 > r {
            return Err(Error::invalid(
                "slice_rows",
                format!("range {r0}..{r1} on {r} rows"),
            ));
        }
        let out = Tensor::matrix(r1 - r0, c, ta.data()[r0 * c..r1 * c].to_vec());
        let rq = self.rq(a);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                let mut ga = vec![S::zero(); r * c];
                ga[r0 * c..r1 * c].copy_from_slice(g.data());
                sink.add(a, Tensor::matrix(r, c, ga));
            })),
        ))
    }

    pub fn select_row(&mut self, a: Var, idx: usize) -> Result<Var> {
        self.slice_rows(a, idx, idx + 1)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols", "empty part list"));
        }
        let r = self.value(parts[0]).rows();
        let mut col_counts = Vec::with_capacity(parts.len());
        let mut rq = false;
        let mut total_c = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != r {
                return Err(Error::shape("concat_cols", format!("{} vs {} rows", t.rows(), r)));
            }
            col_counts.push(t.cols());
            total_c += t.cols();
            rq |= self.rq(p);
        }
        let mut data = vec![S::zero(); r * total_c];
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p).clone();
            let c = t.cols();
            for i in 0..r {
                data[i * total_c + offset..i * total_c + offset + c]
                    .copy_from_slice(&t.data()[i * c..(i + 1) * c]);
            }
            offset += c;
        }
        let parts_owned: Vec<Var> = parts.to_vec();
        Ok(self.push(
            Tensor::matrix(r, total_c, data),
            rq,
            Some(Box::new(move |g, sink| {
                let mut offset = 0;
                for (&p, &c) in parts_owned.iter().zip(col_counts.iter()) {
                    let mut gp = vec![S::zero(); r * c];
                    for i in 0..r {
                        gp[i * c..(i + 1) * c]
                            .copy_from_slice(&g.data()[i * total_c + offset..i * total_c + offset + c]);
                    }
                    sink.add(p, Tensor::matrix(r, c, gp));
                    offset += c;
                }
            })),
        ))
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, c1: usize) -> Result<Var> {
        let ta = self.value(a).clone();
        let (r, c) = (ta.rows(), ta.cols());
        if c0 >= c1 || c1 > c {
            return Err(Error::invalid(
                "slice_cols",
                format!("range {c0}..{c1} on {c} cols"),
            ));
        }
        let w = c1 - c0;
        let mut data = vec![S::zero(); r * w];
        for i in 0..r {
            data[i * w..(i + 1) * w].copy_from_slice(&ta.data()[i * c + c0..i * c + c1]);
        }
        let rq = self.rq(a);
        Ok(self.push(
            Tensor::matrix(r, w, data),
            rq,
            Some(Box::new(move |g, sink| {
                let mut ga = vec![S::zero(); r * c];
                for i in 0..r {
                    ga[i * c + c0..i * c + c1].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                sink.add(a, Tensor::matrix(r, c, ga));
            })),
        ))
    }

    /// Select an arbitrary list of columns (duplicates allowed).
    pub fn gather_cols(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let ta = self.value(a).clone();
        let (r, c) = (ta.rows(), ta.cols());
        if let Some(&bad) = indices.iter().find(|&&i| i >= c) {
            return Err(Error::invalid(
                "gather_cols",
                format!("index {bad} out of {c} cols"),
            ));
        }
        let w = indices.len();
        let mut data = vec![S::zero(); r * w];
        for i in 0..r {
            for (j, &src) in indices.iter().enumerate() {
                data[i * w + j] = ta.data()[i * c + src];
            }
        }
        let idx: Vec<usize> = indices.to_vec();
        let rq = self.rq(a);
        Ok(self.push(
            Tensor::matrix(r, w, data),
            rq,
            Some(Box::new(move |g, sink| {
                let mut ga = vec![S::zero(); r * c];
                for i in 0..r {
                    for (j, &src) in idx.iter().enumerate() {
                        ga[i * c + src] += g.data()[i * w + j];
                    }
                }
                sink.add(a, Tensor::matrix(r, c, ga));
            })),
        ))
    }

    // ---- normalization and softmax -------------------------------------

    /// Row-wise softmax with max-subtraction for stability.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a).clone();
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            let row = &ta.data()[i * c..(i + 1) * c];
            let m = row.iter().fold(S::neg_infinity(), |acc, &v| acc.max(v));
            let mut sum = S::zero();
            for j in 0..c {
                let e = (row[j] - m).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        let out = Tensor::matrix(r, c, data);
        let y = out.clone();
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                let mut ga = vec![S::zero(); r * c];
                for i in 0..r {
                    let gy = &g.data()[i * c..(i + 1) * c];
                    let yy = &y.data()[i * c..(i + 1) * c];
                    let mut dot = S::zero();
                    for j in 0..c {
                        dot += gy[j] * yy[j];
                    }
                    for j in 0..c {
                        ga[i * c + j] = yy[j] * (gy[j] - dot);
                    }
                }
                sink.add(a, Tensor::matrix(r, c, ga));
            })),
        )
    }

    /// Row-wise standardization `(x - mean) / sqrt(var + eps)` (no affine).
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let ta = self.value(a).clone();
        let (r, c) = (ta.rows(), ta.cols());
        let epss = S::from_f(eps);
        let invc = S::from_f(1.0 / c as f64);
        let mut data = vec![S::zero(); r * c];
        let mut inv_std = vec![S::zero(); r];
        for i in 0..r {
            let row = &ta.data()[i * c..(i + 1) * c];
            let mut mean = S::zero();
            for &v in row {
                mean += v;
            }
            mean *= invc;
            let mut var = S::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= invc;
            let istd = S::one() / (var + epss).sqrt();
            inv_std[i] = istd;
            for j in 0..c {
                data[i * c + j] = (row[j] - mean) * istd;
            }
        }
        let out = Tensor::matrix(r, c, data);
        let xhat = out.clone();
        let rq = self.rq(a);
        self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                let mut ga = vec![S::zero(); r * c];
                for i in 0..r {
                    let gy = &g.data()[i * c..(i + 1) * c];
                    let xh = &xhat.data()[i * c..(i + 1) * c];
                    let mut gmean = S::zero();
                    let mut gxdot = S::zero();
                    for j in 0..c {
                        gmean += gy[j];
                        gxdot += gy[j] * xh[j];
                    }
                    gmean *= invc;
                    gxdot *= invc;
                    for j in 0..c {
                        ga[i * c + j] = inv_std[i] * (gy[j] - gmean - xh[j] * gxdot);
                    }
                }
                sink.add(a, Tensor::matrix(r, c, ga));
            })),
        )
    }

    // ---- fused neural ops -----------------------------------------------

    /// Batched temporal convolution via im2col.
    ///
    /// `x` holds `batch` sequences of `len_in` rows with `c_in` features each
    /// (`(batch*len_in) x c_in`). Weights are `(k*c_in) x c_out`, bias
    /// `1 x c_out`. Zero padding.
    #[allow(clippy::too_many_arguments)]
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        batch: usize,
        len_in: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let tx = self.value(x).clone();
        let tw = self.value(w).clone();
        let tb = self.value(b).clone();
        let c_in = tx.cols();
        if tx.rows() != batch * len_in {
            return Err(Error::shape(
                "conv1d",
                format!("{} rows, expected {}*{}", tx.rows(), batch, len_in),
            ));
        }
        if tw.rows() != kernel * c_in {
            return Err(Error::shape(
                "conv1d",
                format!("weight rows {} != k*c_in {}", tw.rows(), kernel * c_in),
            ));
        }
        if stride == 0 || len_in + 2 * pad < kernel {
            return Err(Error::invalid(
                "conv1d",
                format!("len {len_in} pad {pad} kernel {kernel} stride {stride}"),
            ));
        }
        let c_out = tw.cols();
        let len_out = (len_in + 2 * pad - kernel) / stride + 1;
        // im2col: (batch*len_out) x (kernel*c_in)
        let pr = batch * len_out;
        let pc = kernel * c_in;
        let mut patches = vec![S::zero(); pr * pc];
        for g in 0..batch {
            for i in 0..len_out {
                let prow = (g * len_out + i) * pc;
                for dk in 0..kernel {
                    let src = (i * stride + dk) as isize - pad as isize;
                    if src < 0 || src >= len_in as isize {
                        continue;
                    }
                    let xrow = (g * len_in + src as usize) * c_in;
                    patches[prow + dk * c_in..prow + (dk + 1) * c_in]
                        .copy_from_slice(&tx.data()[xrow..xrow + c_in]);
                }
            }
        }
        let patches = Tensor::matrix(pr, pc, patches);
        let mut out = patches.matmul(&tw)?;
        // add bias
        {
            let data: Vec<S> = out
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| v + tb.data()[i % c_out])
                .collect();
            out = Tensor::matrix(pr, c_out, data);
        }
        let rq = self.rq(x) || self.rq(w) || self.rq(b);
        Ok(self.push(
            out,
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(b, g.sum_rows());
                sink.add(w, patches.transpose().matmul(g).expect("conv1d dW"));
                let gp = g.matmul(&tw.transpose()).expect("conv1d dP");
                // col2im scatter
                let mut gx = vec![S::zero(); batch * len_in * c_in];
                for gi in 0..batch {
                    for i in 0..len_out {
                        let prow = (gi * len_out + i) * pc;
                        for dk in 0..kernel {
                            let src = (i * stride + dk) as isize - pad as isize;
                            if src < 0 || src >= len_in as isize {
                                continue;
                            }
                            let xrow = (gi * len_in + src as usize) * c_in;
                            for j in 0..c_in {
                                gx[xrow + j] += gp.data()[prow + dk * c_in + j];
                            }
                        }
                    }
                }
                sink.add(x, Tensor::matrix(batch * len_in, c_in, gx));
            })),
        ))
    }

    /// Per-column batch normalization.
    ///
    /// In training mode the batch statistics are used and recorded under
    /// `stat_key` for the caller to fold into running buffers. In eval mode
    /// the provided running statistics are treated as constants.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<S>,
        running_var: &Tensor<S>,
        eps: f64,
        training: bool,
        stat_key: &str,
    ) -> Result<Var> {
        let tx = self.value(x).clone();
        let (r, c) = (tx.rows(), tx.cols());
        let tg = self.value(gamma).clone();
        if tg.cols() != c || self.value(beta).cols() != c {
            return Err(Error::shape(
                "batch_norm",
                format!("{c} cols vs gamma {:?}", tg.shape()),
            ));
        }
        let epss = S::from_f(eps);
        let (mean, var) = if training {
            let invr = S::from_f(1.0 / r as f64);
            let mut mean = vec![S::zero(); c];
            for i in 0..r {
                for j in 0..c {
                    mean[j] += tx.data()[i * c + j] * invr;
                }
            }
            let mut var = vec![S::zero(); c];
            for i in 0..r {
                for j in 0..c {
                    let d = tx.data()[i * c + j] - mean[j];
                    var[j] += d * d * invr;
                }
            }
            (Tensor::row(mean), Tensor::row(var))
        } else {
            (running_mean.clone(), running_var.clone())
        };
        if training {
            self.bn_stats
                .push((stat_key.to_string(), mean.clone(), var.clone()));
        }
        let inv_std: Vec<S> = var.data().iter().map(|&v| S::one() / (v + epss).sqrt()).collect();
        let mut xhat = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                xhat[i * c + j] = (tx.data()[i * c + j] - mean.data()[j]) * inv_std[j];
            }
        }
        let xhat = Tensor::matrix(r, c, xhat);
        let tb = self.value(beta).clone();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = tg.data()[j] * xhat.data()[i * c + j] + tb.data()[j];
            }
        }
        let rq = self.rq(x) || self.rq(gamma) || self.rq(beta);
        let xhat_b = xhat.clone();
        Ok(self.push(
            Tensor::matrix(r, c, out),
            rq,
            Some(Box::new(move |g, sink| {
                sink.add(beta, g.sum_rows());
                sink.add(gamma, g.zip_map(&xhat_b, |gv, xv| gv * xv).sum_rows());
                let invr = S::from_f(1.0 / r as f64);
                let mut ga = vec![S::zero(); r * c];
                if training {
                    // backprop through the batch statistics
                    let mut gmean = vec![S::zero(); c];
                    let mut gxdot = vec![S::zero(); c];
                    for i in 0..r {
                        for j in 0..c {
                            let gy = g.data()[i * c + j] * tg.data()[j];
                            gmean[j] += gy;
                            gxdot[j] += gy * xhat_b.data()[i * c + j];
                        }
                    }
                    for j in 0..c {
                        gmean[j] *= invr;
                        gxdot[j] *= invr;
                    }
                    for i in 0..r {
                        for j in 0..c {
                            let gy = g.data()[i * c + j] * tg.data()[j];
                            ga[i * c + j] =
                                inv_std[j] * (gy - gmean[j] - xhat_b.data()[i * c + j] * gxdot[j]);
                        }
                    }
                } else {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = g.data()[i * c + j] * tg.data()[j] * inv_std[j];
                        }
                    }
                }
                sink.add(x, Tensor::matrix(r, c, ga));
            })),
        ))
    }

    // ---- backward -------------------------------------------------------

    /// Reverse sweep from a scalar root. Returns per-node gradient slots.
    pub fn backward(&self, root: Var) -> Result<Grads<S>> {
        let root_val = self.value(root);
        if root_val.len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("root must be scalar, got {:?}", root_val.shape()),
            ));
        }
        let mut grads = Grads {
            slots: (0..self.nodes.len()).map(|_| None).collect(),
            rq: self.nodes.iter().map(|n| n.rq).collect(),
        };
        if !self.nodes[root.0].rq {
            return Ok(grads);
        }
        grads.slots[root.0] = Some(Tensor::scalar(S::one()));
        for id in (0..=root.0).rev() {
            if grads.slots[id].is_none() {
                continue;
            }
            if let Some(back) = &self.nodes[id].back {
                let g = grads.slots[id].clone().expect("slot populated");
                back(&g, &mut grads);
            }
        }
        Ok(grads)
    }

    /// Gradients of trainable parameters bound on this tape, keyed by name.
    /// Parameters untouched by the loss get zero gradients.
    pub fn param_grads(
        &self,
        store: &ParameterStore<S>,
        grads: &Grads<S>,
    ) -> BTreeMap<String, Tensor<S>> {
        let mut out = BTreeMap::new();
        for (name, &v) in &self.params {
            if store.is_buffer(name) {
                continue;
            }
            let value = self.value(v);
            let g = grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(value.rows(), value.cols()));
            out.insert(name.clone(), g);
        }
        out
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Tape::new()
    }
}
