//! Minimal float64 substrate for the base models: a flat parameter store,
//! hand-written forward/backward passes for the LSTM cell and attention,
//! masked softmax losses, Adam and variational dropout.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod lstm;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use attention::{attend, AttnParams, Keys};
pub use dropout::{sample_masks, DropoutMasks, SeqMasks};
pub use gradcheck::grad_check;
pub use loss::{log_softmax_masked, softmax_xent};
pub use lstm::{lstm_step, LstmParams};

/// Layer widths and dropout rate of one base model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub attention: usize,
    pub dropout: f64,
}

impl Dims {
    /// Embedding width tied to the hidden width.
    pub fn new(hidden: usize, attention: usize, dropout: f64) -> Dims {
        Dims {
            embed: hidden,
            hidden,
            attention,
            dropout,
        }
    }
}

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

/// Uniform in `(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`. Rank-1
/// shapes are biases and start at zero.
pub fn glorot_init<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    assert!(shape.len() <= 2, "glorot_init takes rank <= 2");
    let mut t = Tensor::zeros(shape);
    if shape.len() == 2 {
        let b = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
        for x in t.data.iter_mut() {
            *x = rng.gen_range(-b..b);
        }
    }
    t
}

/// Handle to one named matrix inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Param {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Param {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All parameters of one model in a single flat vector, so gradients,
/// optimizer moments and checkpoints share one layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Param)>,
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize) -> Param {
        assert!(self.find(name).is_none(), "duplicate parameter {name}");
        let p = Param {
            offset: self.data.len(),
            rows,
            cols,
        };
        self.data.resize(self.data.len() + p.len(), 0.0);
        self.entries.push((name.to_string(), p));
        p
    }

    /// Weight matrix with Glorot-uniform entries.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> Param {
        let p = self.add(name, rows, cols);
        let t = glorot_init(&[rows, cols], rng);
        self.data[p.range()].copy_from_slice(&t.data);
        p
    }

    /// Glorot entries with explicit fan sizes, for blocks of a larger matrix.
    pub fn fill_uniform<R: Rng>(&mut self, range: Range<usize>, bound: f64, rng: &mut R) {
        for x in &mut self.data[range] {
            *x = rng.gen_range(-bound..bound);
        }
    }

    pub fn find(&self, name: &str) -> Option<Param> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
    }

    pub fn entries(&self) -> &[(String, Param)] {
        &self.entries
    }

    pub fn get(&self, p: Param) -> &[f64] {
        &self.data[p.range()]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }
}

/// `y += W x` for a row-major `rows x cols` matrix.
pub fn gemv(w: &[f64], cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(w.len(), y.len() * cols);
    for (row, yi) in w.chunks_exact(cols).zip(y.iter_mut()) {
        *yi += dot(row, x);
    }
}

/// `dx += W^T dy`.
pub fn gemv_t(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(dx.len(), cols);
    for (row, d) in w.chunks_exact(cols).zip(dy) {
        if *d != 0.0 {
            axpy(*d, row, dx);
        }
    }
}

/// `G += dy x^T`.
pub fn ger(g: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (row, d) in g.chunks_exact_mut(cols).zip(dy) {
        if *d != 0.0 {
            axpy(*d, x, row);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut v = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        v.extend_from_slice(p);
    }
    v
}

/// Elementwise product into a fresh vector; `None` mask is identity.
pub fn masked(x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => x.to_vec(),
    }
}

/// Dense linear layer `y = W x (+ b)` stored in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: Param,
    pub b: Option<Param>,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, out: usize, inp: usize, bias: bool, rng: &mut R) -> Linear {
        let w = store.add_glorot(&format!("{name}.w"), out, inp, rng);
        let b = bias.then(|| store.add(&format!("{name}.b"), out, 1));
        Linear { w, b }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, data: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = match self.b {
            Some(b) => data[b.range()].to_vec(),
            None => vec![0.0; self.w.rows],
        };
        gemv(&data[self.w.range()], self.w.cols, x, &mut y);
        y
    }

    /// Accumulates parameter gradients and `dx += W^T dy`.
    pub fn backward(&self, data: &[f64], grad: &mut [f64], x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        ger(&mut grad[self.w.range()], self.w.cols, dy, x);
        if let Some(b) = self.b {
            axpy(1.0, dy, &mut grad[b.range()]);
        }
        if let Some(dx) = dx {
            gemv_t(&data[self.w.range()], self.w.cols, dy, dx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bound_and_reproducibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = glorot_init(&[1, 1], &mut rng);
        assert!(t.data[0].abs() <= 3f64.sqrt());
        let a = glorot_init(&[4, 5], &mut ChaCha8Rng::seed_from_u64(9));
        let b = glorot_init(&[4, 5], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(glorot_init(&[6], &mut rng).data.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn glorot_mean_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let t = glorot_init(&[n / 100, 100], &mut rng);
        let b = (6.0 / (n / 100 + 100) as f64).sqrt();
        let sigma = b / 3f64.sqrt();
        let mean = t.data.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn gemv_matches_manual() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 2];
        gemv(&w, 3, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, [-2.0, -2.0]);
        let mut dx = [0.0; 3];
        gemv_t(&w, 3, &[1.0, 1.0], &mut dx);
        assert_eq!(dx, [5.0, 7.0, 9.0]);
    }
}
