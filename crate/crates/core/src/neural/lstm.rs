//! One-layer LSTM with coupled input/forget gates and peephole connections:
//!
//! ```text
//! f  = sigmoid(Wf [x, h] + pf * c + bf)
//! c' = f * c + (1 - f) * tanh(Wc [x, h] + bc)
//! o  = sigmoid(Wo [x, h] + po * c' + bo)
//! h' = o * tanh(c')
//! ```
//!
//! The input half of each gate matrix is kept separate so a whole input
//! sequence can be projected up front.

use rand::Rng;

use super::{axpy, gemv, gemv_t, ger, masked, sigmoid, Param, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    /// `3H x I`, gate rows ordered f, c, o.
    pub wx: Param,
    /// `3H x H`.
    pub wh: Param,
    pub b: Param,
    pub pf: Param,
    pub po: Param,
}

/// Everything the backward pass needs from one step.
#[derive(Clone, Debug)]
pub struct StepCache {
    h_in: Vec<f64>,
    h_mask: Option<Vec<f64>>,
    c_prev: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
}

/// Gradients leaving one step.
pub struct StepGrad {
    pub dpx: Vec<f64>,
    pub dh: Vec<f64>,
    pub dc: Vec<f64>,
}

impl LstmParams {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> LstmParams {
        let wx = store.add(&format!("{name}.wx"), 3 * hidden, input);
        let wh = store.add(&format!("{name}.wh"), 3 * hidden, hidden);
        // Each gate is a H x (I + H) matrix for fan purposes.
        let bound = (6.0 / (input + 2 * hidden) as f64).sqrt();
        store.fill_uniform(wx.range(), bound, rng);
        store.fill_uniform(wh.range(), bound, rng);
        let b = store.add(&format!("{name}.b"), 3 * hidden, 1);
        let pf = store.add_glorot(&format!("{name}.pf"), hidden, 1, rng);
        let po = store.add_glorot(&format!("{name}.po"), hidden, 1, rng);
        LstmParams { input, hidden, wx, wh, b, pf, po }
    }

    /// `Wx x + b` for all three gates.
    pub fn project(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut px = w[self.b.range()].to_vec();
        gemv(&w[self.wx.range()], self.input, x, &mut px);
        px
    }

    pub fn project_backward(&self, w: &[f64], g: &mut [f64], x: &[f64], dpx: &[f64], dx: Option<&mut [f64]>) {
        ger(&mut g[self.wx.range()], self.input, dpx, x);
        axpy(1.0, dpx, &mut g[self.b.range()]);
        if let Some(dx) = dx {
            gemv_t(&w[self.wx.range()], self.input, dpx, dx);
        }
    }

    /// One step from a projected input. `h_mask` is the recurrent dropout mask.
    pub fn step(&self, w: &[f64], px: &[f64], h: &[f64], c: &[f64], h_mask: Option<&[f64]>) -> (Vec<f64>, Vec<f64>, StepCache) {
        let n = self.hidden;
        let h_in = masked(h, h_mask);
        let mut a = px.to_vec();
        gemv(&w[self.wh.range()], n, &h_in, &mut a);
        let pf = &w[self.pf.range()];
        let po = &w[self.po.range()];
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut o = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        let mut tc = vec![0.0; n];
        let mut h2 = vec![0.0; n];
        for k in 0..n {
            f[k] = sigmoid(a[k] + pf[k] * c[k]);
            g[k] = a[n + k].tanh();
            c2[k] = f[k] * c[k] + (1.0 - f[k]) * g[k];
            o[k] = sigmoid(a[2 * n + k] + po[k] * c2[k]);
            tc[k] = c2[k].tanh();
            h2[k] = o[k] * tc[k];
        }
        let cache = StepCache {
            h_in,
            h_mask: h_mask.map(<[f64]>::to_vec),
            c_prev: c.to_vec(),
            f,
            g,
            o,
            c: c2.clone(),
            tc,
        };
        (h2, c2, cache)
    }

    /// Backward through one step given gradients on `h'` and `c'`.
    pub fn step_backward(&self, w: &[f64], grad: &mut [f64], cache: &StepCache, dh: &[f64], dc: &[f64]) -> StepGrad {
        let n = self.hidden;
        let pf = &w[self.pf.range()];
        let po = &w[self.po.range()];
        let mut da = vec![0.0; 3 * n];
        let mut dc_prev = vec![0.0; n];
        let mut gpf = vec![0.0; n];
        let mut gpo = vec![0.0; n];
        for k in 0..n {
            let (f, g, o, c2, tc) = (cache.f[k], cache.g[k], cache.o[k], cache.c[k], cache.tc[k]);
            let dao = dh[k] * tc * o * (1.0 - o);
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc) + dao * po[k];
            gpo[k] = dao * c2;
            let df = dct * (cache.c_prev[k] - g);
            let dg = dct * (1.0 - f);
            let daf = df * f * (1.0 - f);
            gpf[k] = daf * cache.c_prev[k];
            dc_prev[k] = dct * f + daf * pf[k];
            da[k] = daf;
            da[n + k] = dg * (1.0 - g * g);
            da[2 * n + k] = dao;
        }
        axpy(1.0, &gpf, &mut grad[self.pf.range()]);
        axpy(1.0, &gpo, &mut grad[self.po.range()]);
        ger(&mut grad[self.wh.range()], n, &da, &cache.h_in);
        let mut dh_prev = vec![0.0; n];
        gemv_t(&w[self.wh.range()], n, &da, &mut dh_prev);
        if let Some(m) = &cache.h_mask {
            for (d, mk) in dh_prev.iter_mut().zip(m) {
                *d *= mk;
            }
        }
        StepGrad {
            dpx: da,
            dh: dh_prev,
            dc: dc_prev,
        }
    }

    /// Run over a sequence from zero state. Inputs are already masked.
    pub fn run(&self, w: &[f64], xs: &[Vec<f64>], h_mask: Option<&[f64]>, reverse: bool) -> LstmRun {
        let n = self.hidden;
        let order: Vec<usize> = if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut hs = vec![Vec::new(); xs.len()];
        let mut caches = Vec::with_capacity(xs.len());
        for &t in &order {
            let px = self.project(w, &xs[t]);
            let (h2, c2, cache) = self.step(w, &px, &h, &c, h_mask);
            hs[t] = h2.clone();
            caches.push(cache);
            h = h2;
            c = c2;
        }
        LstmRun { hs, caches, order }
    }

    /// Backward through [`LstmParams::run`]; returns gradients on the inputs.
    pub fn run_backward(&self, w: &[f64], grad: &mut [f64], xs: &[Vec<f64>], run: &LstmRun, dhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.hidden;
        let mut dxs = vec![vec![0.0; self.input]; xs.len()];
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        for (k, &t) in run.order.iter().enumerate().rev() {
            let mut dh = dhs[t].clone();
            axpy(1.0, &dh_next, &mut dh);
            let sg = self.step_backward(w, grad, &run.caches[k], &dh, &dc_next);
            self.project_backward(w, grad, &xs[t], &sg.dpx, Some(&mut dxs[t]));
            dh_next = sg.dh;
            dc_next = sg.dc;
        }
        dxs
    }
}

/// Forward results of a whole sequence, indexed by input position.
#[derive(Clone, Debug)]
pub struct LstmRun {
    pub hs: Vec<Vec<f64>>,
    caches: Vec<StepCache>,
    order: Vec<usize>,
}

/// Masks for one step: input `x`, recurrent `h`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepMasks<'a> {
    pub x: Option<&'a [f64]>,
    pub h: Option<&'a [f64]>,
}

/// Single cell update. Output dropout is applied by whoever consumes `h'`.
pub fn lstm_step(
    params: &LstmParams,
    w: &[f64],
    h: &[f64],
    c: &[f64],
    x: &[f64],
    masks: StepMasks<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = params.hidden;
    if x.len() != params.input || h.len() != n || c.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "lstm expects x={}, h=c={}; got x={}, h={}, c={}",
            params.input,
            n,
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let xin = masked(x, masks.x);
    let px = params.project(w, &xin);
    let (h2, c2, _) = params.step(w, &px, h, c, masks.h);
    Ok((h2, c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{grad_check, sample_coords};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_state() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmParams::new(&mut store, "l", 3, 4, &mut rng);
        store.data.iter_mut().for_each(|x| *x = 0.0);
        let (h, c) = lstm_step(&p, &store.data, &[0.0; 4], &[0.0; 4], &[0.0; 3], StepMasks::default()).unwrap();
        assert!(h.iter().chain(&c).all(|v| *v == 0.0));
    }

    #[test]
    fn unit_masks_match_unmasked() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmParams::new(&mut store, "l", 3, 4, &mut rng);
        let x = [0.3, -0.2, 0.9];
        let h = [0.1, 0.2, -0.3, 0.0];
        let c = [0.5, -0.5, 0.2, 0.1];
        let plain = lstm_step(&p, &store.data, &h, &c, &x, StepMasks::default()).unwrap();
        let ones3 = [1.0; 3];
        let ones4 = [1.0; 4];
        let m = StepMasks { x: Some(&ones3), h: Some(&ones4) };
        assert_eq!(plain, lstm_step(&p, &store.data, &h, &c, &x, m).unwrap());
        assert!(lstm_step(&p, &store.data, &h, &c, &[0.0; 2], StepMasks::default()).is_err());
    }

    #[test]
    fn sequence_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for cfg in 0..5 {
            let (i, n, t) = (2 + cfg % 3, 2 + cfg, 3);
            let mut store = ParamStore::new();
            let p = LstmParams::new(&mut store, "l", i, n, &mut rng);
            let xs: Vec<Vec<f64>> = (0..t).map(|_| (0..i).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let target: Vec<Vec<f64>> = (0..t).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let mask: Vec<f64> = (0..n).map(|k| if k % 3 == 0 { 0.0 } else { 1.5 }).collect();
            let reverse = cfg % 2 == 1;
            let f = |w: &[f64]| {
                let run = p.run(w, &xs, Some(&mask), reverse);
                let loss: f64 = run.hs.iter().zip(&target).map(|(h, y)| crate::neural::dot(h, y)).sum();
                let mut g = vec![0.0; w.len()];
                p.run_backward(w, &mut g, &xs, &run, &target);
                (loss, g)
            };
            let coords = sample_coords(store.len(), 60, &mut rng);
            let err = grad_check(f, &store.data, 1e-5, &coords);
            assert!(err <= 1e-6, "config {cfg}: {err}");
        }
    }
}
