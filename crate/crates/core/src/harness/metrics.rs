use std::collections::HashMap;

use serde::Serialize;

use crate::vocab::EOS;

/// Percentage of true outcomes; 0 for no outcomes.
pub fn accuracy(outcomes: &[bool]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    100.0 * outcomes.iter().filter(|b| **b).count() as f64 / outcomes.len() as f64
}

/// One token stream for a multi-sentence output, sentences separated by EOS.
pub fn join_sentences(sentences: &[Vec<String>]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, s) in sentences.iter().enumerate() {
        if k > 0 {
            out.push(EOS.to_string());
        }
        out.extend(s.iter().cloned());
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus 4-gram BLEU on a 0-100 scale with one reference per candidate,
/// clipped counts, no smoothing and the usual brevity penalty.
pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<String>]) -> f64 {
    assert_eq!(candidates.len(), references.len(), "one reference per candidate");
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(r, n);
            for (g, k) in ngram_counts(c, n) {
                matched[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += c.len().saturating_sub(n - 1);
        }
    }
    if (0..4).any(|n| matched[n] == 0) {
        return 0.0;
    }
    let log_p: f64 = (0..4).map(|n| (matched[n] as f64 / total[n] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    100.0 * bp * log_p.exp()
}

/// Paired two-sided sign test; ties are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

pub fn sign_test(a: &[bool], b: &[bool]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired outcomes");
    let wins = a.iter().zip(b).filter(|(x, y)| **x && !**y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| !**x && **y).count();
    let n = wins + losses;
    let k = wins.min(losses);
    // Binomial(n, 1/2) lower tail up to k, built in log space.
    let mut log_pmf = -(n as f64) * std::f64::consts::LN_2;
    let mut tail = 0.0;
    for i in 0..=k {
        tail += log_pmf.exp();
        log_pmf += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    SignTest {
        wins,
        losses,
        ties: a.len() - n,
        p_value: (2.0 * tail).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_end_points() {
        let a = vec![toks("the cat sat on the mat")];
        assert_eq!(corpus_bleu(&a, &a), 100.0);
        assert_eq!(corpus_bleu(&[toks("a b c d e")], &[toks("v w x y z")]), 0.0);
    }

    #[test]
    fn brevity_penalty_applies_to_short_output() {
        let r = vec![toks("a b c d e f g h")];
        let c = vec![toks("a b c d")];
        let expect = 100.0 * (1.0f64 - 8.0 / 4.0).exp();
        assert!((corpus_bleu(&c, &r) - expect).abs() < 1e-9);
    }

    #[test]
    fn joined_with_separators() {
        let j = join_sentences(&[toks("a b"), toks("c")]);
        assert_eq!(j, toks("a b <eos> c"));
        assert!(join_sentences(&[]).is_empty());
    }

    #[test]
    fn sign_test_values() {
        let t = sign_test(&[true; 5], &[false; 5]);
        assert_eq!((t.wins, t.losses), (5, 0));
        assert!((t.p_value - 2.0 / 32.0).abs() < 1e-12);
        let same = sign_test(&[true, false], &[true, false]);
        assert_eq!(same.p_value, 1.0);
        assert_eq!(same.ties, 2);
    }
}
