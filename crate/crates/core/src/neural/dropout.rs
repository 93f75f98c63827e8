//! Variational dropout: one Bernoulli mask per connection class, drawn once
//! per sequence and reused at every step.

use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks {
    pub masks: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn get(&self, k: usize) -> Option<&[f64]> {
        self.masks.get(k).map(Vec::as_slice)
    }
}

/// One mask per entry of `dims`; kept units are scaled by `1 / (1 - rate)`.
pub fn sample_masks<R: Rng>(rate: f64, dims: &[usize], rng: &mut R) -> DropoutMasks {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    let keep = 1.0 / (1.0 - rate);
    let masks = dims
        .iter()
        .map(|&d| {
            (0..d)
                .map(|_| if rate > 0.0 && rng.gen::<f64>() < rate { 0.0 } else { keep })
                .collect()
        })
        .collect();
    DropoutMasks { masks }
}

/// Masks for one encoder/decoder sequence pair. `None` everywhere when
/// dropout is off.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeqMasks {
    pub emb: Option<Vec<f64>>,
    pub enc_f: Option<Vec<f64>>,
    pub enc_b: Option<Vec<f64>>,
    pub dec_in: Option<Vec<f64>>,
    pub dec_rec: Option<Vec<f64>>,
    pub dec_out: Option<Vec<f64>>,
}

impl SeqMasks {
    /// `emb` is the encoder input width, `enc` and `dec` the hidden widths,
    /// `dec_in` the decoder input width.
    pub fn sample<R: Rng>(rate: f64, emb: usize, enc: usize, dec_in: usize, dec: usize, rng: &mut R) -> SeqMasks {
        if rate == 0.0 {
            return SeqMasks::default();
        }
        let mut m = sample_masks(rate, &[emb, enc, enc, dec_in, dec, dec], rng).masks.into_iter().map(Some);
        let mut next = || m.next().expect("six masks");
        SeqMasks {
            emb: next(),
            enc_f: next(),
            enc_b: next(),
            dec_in: next(),
            dec_rec: next(),
            dec_out: next(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_all_ones() {
        let m = sample_masks(0.0, &[3, 2], &mut ChaCha8Rng::seed_from_u64(1));
        assert!(m.masks.iter().flatten().all(|x| *x == 1.0));
    }

    #[test]
    fn same_seed_same_masks() {
        let a = sample_masks(0.3, &[10], &mut ChaCha8Rng::seed_from_u64(4));
        let b = sample_masks(0.3, &[10], &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let rate = 0.3;
        let m = sample_masks(rate, &[n], &mut rng);
        let mean = m.masks[0].iter().sum::<f64>() / n as f64;
        // Each entry has variance rate / (1 - rate).
        let sd = (rate / (1.0 - rate) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * sd);
    }
}
