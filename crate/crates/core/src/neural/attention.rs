//! Additive attention: `alpha_k ∝ exp(v . tanh(Wd q + We key_k))`.

use rand::Rng;

use super::{axpy, dot, gemv, gemv_t, ger, Param, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttnParams {
    pub query: usize,
    pub key: usize,
    pub dim: usize,
    pub wd: Param,
    pub we: Param,
    pub v: Param,
}

/// Keys together with their `We` projections, computed once per sequence.
#[derive(Clone, Debug)]
pub struct Keys {
    pub keys: Vec<Vec<f64>>,
    pub proj: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct AttnOut {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    u: Vec<Vec<f64>>,
}

impl AttnParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, query: usize, key: usize, dim: usize, rng: &mut R) -> AttnParams {
        AttnParams {
            query,
            key,
            dim,
            wd: store.add_glorot(&format!("{name}.wd"), dim, query, rng),
            we: store.add_glorot(&format!("{name}.we"), dim, key, rng),
            v: store.add_glorot(&format!("{name}.v"), dim, 1, rng),
        }
    }

    pub fn project_keys(&self, w: &[f64], keys: Vec<Vec<f64>>) -> Keys {
        let proj = keys
            .iter()
            .map(|k| {
                let mut p = vec![0.0; self.dim];
                gemv(&w[self.we.range()], self.key, k, &mut p);
                p
            })
            .collect();
        Keys { keys, proj }
    }

    pub fn attend(&self, w: &[f64], q: &[f64], keys: &Keys) -> AttnOut {
        let mut qd = vec![0.0; self.dim];
        gemv(&w[self.wd.range()], self.query, q, &mut qd);
        let v = &w[self.v.range()];
        let mut u = Vec::with_capacity(keys.keys.len());
        let mut scores = Vec::with_capacity(keys.keys.len());
        for p in &keys.proj {
            let uk: Vec<f64> = qd.iter().zip(p).map(|(a, b)| (a + b).tanh()).collect();
            scores.push(dot(v, &uk));
            u.push(uk);
        }
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|a| *a /= z);
        let mut context = vec![0.0; self.key];
        for (a, k) in weights.iter().zip(&keys.keys) {
            axpy(*a, k, &mut context);
        }
        AttnOut { weights, context, u }
    }

    /// Accumulates into `dq`, `dkeys` (through the weighted sum) and
    /// `dproj` (through the scores). Call [`AttnParams::keys_backward`] once
    /// all steps have added their `dproj`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        w: &[f64],
        grad: &mut [f64],
        q: &[f64],
        keys: &Keys,
        out: &AttnOut,
        dctx: &[f64],
        dq: &mut [f64],
        dkeys: &mut [Vec<f64>],
        dproj: &mut [Vec<f64>],
    ) {
        let v = &w[self.v.range()];
        let dalpha: Vec<f64> = keys.keys.iter().map(|k| dot(dctx, k)).collect();
        let mean: f64 = out.weights.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        let mut dqd = vec![0.0; self.dim];
        let mut dv = vec![0.0; self.dim];
        for k in 0..keys.keys.len() {
            let a = out.weights[k];
            axpy(a, dctx, &mut dkeys[k]);
            let ds = a * (dalpha[k] - mean);
            if ds == 0.0 {
                continue;
            }
            axpy(ds, &out.u[k], &mut dv);
            for j in 0..self.dim {
                let dpre = ds * v[j] * (1.0 - out.u[k][j] * out.u[k][j]);
                dqd[j] += dpre;
                dproj[k][j] += dpre;
            }
        }
        axpy(1.0, &dv, &mut grad[self.v.range()]);
        ger(&mut grad[self.wd.range()], self.query, &dqd, q);
        gemv_t(&w[self.wd.range()], self.query, &dqd, dq);
    }

    pub fn keys_backward(&self, w: &[f64], grad: &mut [f64], keys: &Keys, dproj: &[Vec<f64>], dkeys: &mut [Vec<f64>]) {
        for ((k, dp), dk) in keys.keys.iter().zip(dproj).zip(dkeys.iter_mut()) {
            ger(&mut grad[self.we.range()], self.key, dp, k);
            gemv_t(&w[self.we.range()], self.key, dp, dk);
        }
    }
}

/// Stand-alone attention with the given parameters; errors on no keys.
pub fn attend(params: &AttnParams, w: &[f64], query: &[f64], keys: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if keys.is_empty() {
        return Err(Error::EmptyKeys);
    }
    if query.len() != params.query || keys.iter().any(|k| k.len() != params.key) {
        return Err(Error::DimensionMismatch("attention query or key width".into()));
    }
    let k = params.project_keys(w, keys.to_vec());
    let out = params.attend(w, query, &k);
    Ok((out.weights, out.context))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{grad_check, sample_coords};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (ParamStore, AttnParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = AttnParams::new(&mut store, "a", 3, 4, 5, &mut rng);
        (store, p)
    }

    #[test]
    fn single_and_identical_keys() {
        let (s, p) = setup(1);
        let (w, c) = attend(&p, &s.data, &[0.1, 0.2, 0.3], &[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(c, vec![1.0, 2.0, 3.0, 4.0]);
        let keys = vec![vec![0.5; 4]; 3];
        let (w, _) = attend(&p, &s.data, &[0.1, 0.2, 0.3], &keys).unwrap();
        assert!(w.iter().all(|a| (a - 1.0 / 3.0).abs() < 1e-12));
        assert!(matches!(attend(&p, &s.data, &[0.0; 3], &[]), Err(Error::EmptyKeys)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (store, p) = setup(4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let keys: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let target: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |w: &[f64]| {
            let k = p.project_keys(w, keys.clone());
            let out = p.attend(w, &q, &k);
            let loss = dot(&out.context, &target);
            let mut g = vec![0.0; w.len()];
            let mut dq = vec![0.0; 3];
            let mut dk = vec![vec![0.0; 4]; 4];
            let mut dp = vec![vec![0.0; 5]; 4];
            p.backward(w, &mut g, &q, &k, &out, &target, &mut dq, &mut dk, &mut dp);
            p.keys_backward(w, &mut g, &k, &dp, &mut dk);
            (loss, g)
        };
        let coords = sample_coords(store.len(), store.len(), &mut rng);
        assert!(grad_check(f, &store.data, 1e-5, &coords) <= 1e-6);
    }
}
