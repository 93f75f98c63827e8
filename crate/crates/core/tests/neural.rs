use pragma_core::neural::adam::{adam_step, AdamState};
use pragma_core::neural::attention::{attend, AttnParams};
use pragma_core::neural::dropout::sample_masks;
use pragma_core::neural::gradcheck::grad_check;
use pragma_core::neural::loss::{log_softmax_masked, softmax_xent};
use pragma_core::neural::{glorot_init, ParamStore};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn glorot_draws_are_centred_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = glorot_init(&[400, 250], &mut rng);
    let bound = (6.0f64 / 650.0).sqrt();
    assert!(t.data.iter().all(|x| x.abs() <= bound));
    let n = t.data.len() as f64;
    let mean = t.data.iter().sum::<f64>() / n;
    let sd = bound / 3f64.sqrt();
    assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "{mean}");
    let one = glorot_init(&[1, 1], &mut rng);
    assert!(one.data[0].abs() <= 3f64.sqrt());
}

#[test]
fn dropout_masks_preserve_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (rate, width, draws) = (0.3, 50, 4000);
    let mut sum = vec![0.0; width];
    for _ in 0..draws {
        let m = sample_masks(rate, &[width], &mut rng);
        for (s, x) in sum.iter_mut().zip(m.get(0).unwrap()) {
            *s += x;
        }
    }
    // Each mask entry has mean 1 and variance rate / (1 - rate).
    let se = (rate / (1.0 - rate) / draws as f64).sqrt();
    for s in sum {
        assert!((s / draws as f64 - 1.0).abs() < 4.0 * se);
    }
    let none = sample_masks(0.0, &[width], &mut rng);
    assert!(none.get(0).is_none_or(|m| m.iter().all(|x| *x == 1.0)));
}

#[test]
fn cross_entropy_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.gen_range(2..12);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut valid: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
        let target = rng.gen_range(0..n);
        valid[target] = true;
        let (loss, grad) = softmax_xent(&logits, &valid, target).unwrap();
        assert!(loss >= 0.0);
        let err = grad_check(|w| softmax_xent(w, &valid, target).unwrap(), &logits, 1e-6, &(0..n).collect::<Vec<_>>());
        assert!(err < 1e-6, "{err}");
        let z: f64 = valid.iter().filter(|v| **v).count() as f64;
        let (flat, _) = softmax_xent(&vec![0.0; n], &valid, target).unwrap();
        assert!((flat - z.ln()).abs() < 1e-12);
        assert!(grad.iter().zip(&valid).all(|(g, v)| *v || *g == 0.0));
    }
    assert!(softmax_xent(&[0.0, 1.0], &[true, false], 1).is_err());
}

#[test]
fn attention_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let p = AttnParams::new(&mut store, "attn", 4, 3, 5, &mut rng);
    let q = [0.3, -0.2, 0.5, 1.0];
    let (w, ctx) = attend(&p, &store.data, &q, &[vec![1.0, 2.0, 3.0]]).unwrap();
    assert_eq!(w, vec![1.0]);
    assert_eq!(ctx, vec![1.0, 2.0, 3.0]);
    let same = vec![vec![0.5, -1.0, 2.0]; 4];
    let (w, _) = attend(&p, &store.data, &q, &same).unwrap();
    assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-12));
    assert!(attend(&p, &store.data, &q, &[]).is_err());
}

#[test]
fn adam_first_step_is_signed_learning_rate() {
    let mut p = vec![1.0, -2.0, 0.5, 3.0];
    let g = [0.3, -7.0, 1e-3, 0.0];
    let mut st = AdamState::new(4);
    adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
    for (k, (x, x0)) in p.iter().zip([1.0, -2.0, 0.5, 3.0]).enumerate() {
        let want = -1e-3 * g[k].signum() * (g[k] != 0.0) as u8 as f64;
        assert!((x - x0 - want).abs() < 1e-5, "{k}: {}", x - x0);
    }
    let before = p.clone();
    let mut fresh = AdamState::new(4);
    adam_step(&mut p, &[0.0; 4], &mut fresh, 1e-3).unwrap();
    assert_eq!(p, before);
}

proptest! {
    #[test]
    fn masked_log_softmax_normalises(logits in prop::collection::vec(-50.0f64..50.0, 1..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut valid: Vec<bool> = logits.iter().map(|_| rng.gen_bool(0.6)).collect();
        valid[0] = true;
        let lp = log_softmax_masked(&logits, &valid);
        let z: f64 = lp.iter().zip(&valid).filter(|(_, v)| **v).map(|(l, _)| l.exp()).sum();
        prop_assert!((z - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = logits.iter().map(|x| x + 17.0).collect();
        let lp2 = log_softmax_masked(&shifted, &valid);
        for ((a, b), v) in lp.iter().zip(&lp2).zip(&valid) {
            if *v {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
