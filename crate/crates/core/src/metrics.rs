//! Corpus-level generation metrics and paired bootstrap testing.
//!
//! BLEU follows the common per-hypothesis multi-reference convention: counts
//! are clipped by the maximum count in any single reference, precisions are
//! combined by an unsmoothed geometric mean (any zero precision gives 0), and
//! the brevity penalty uses the reference length closest to the hypothesis
//! (ties go to the shorter one).

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default reference cap for self-BLEU.
pub const SELF_BLEU_CAP: usize = 1000;

type Gram = (u8, [u32; 4]);

fn gram(tokens: &[usize]) -> Gram {
    let mut key = [u32::MAX; 4];
    for (k, &t) in key.iter_mut().zip(tokens) {
        *k = t as u32;
    }
    (tokens.len() as u8, key)
}

fn counts(tokens: &[usize], n: usize) -> HashMap<Gram, u32> {
    let mut out = HashMap::new();
    for k in 1..=n {
        for w in tokens.windows(k) {
            *out.entry(gram(w)).or_insert(0) += 1;
        }
    }
    out
}

fn check_n(n: usize) -> Result<()> {
    if !(1..=4).contains(&n) {
        return Err(Error::OutOfRange {
            name: "n",
            value: n as f64,
            range: "[1, 4]",
        });
    }
    Ok(())
}

/// Per-n-gram maximum reference counts, with the runner-up kept so a single
/// reference can be left out exactly.
struct RefIndex {
    /// gram -> (best count, index of its holder, best count among the others)
    max: HashMap<Gram, (u32, usize, u32)>,
    /// sorted (length, multiplicity)
    lengths: Vec<(usize, usize)>,
    /// reference position -> its length
    ref_len: HashMap<usize, usize>,
}

impl RefIndex {
    fn build<S: AsRef<[usize]>>(refs: &[S], ids: &[usize], n: usize) -> Self {
        let mut max: HashMap<Gram, (u32, usize, u32)> = HashMap::new();
        let mut len_counts: HashMap<usize, usize> = HashMap::new();
        let mut ref_len = HashMap::new();
        for &id in ids {
            let r = refs[id].as_ref();
            *len_counts.entry(r.len()).or_insert(0) += 1;
            ref_len.insert(id, r.len());
            for (g, c) in counts(r, n) {
                let e = max.entry(g).or_insert((0, usize::MAX, 0));
                if c > e.0 {
                    *e = (c, id, e.0);
                } else if c > e.2 {
                    e.2 = c;
                }
            }
        }
        let mut lengths: Vec<(usize, usize)> = len_counts.into_iter().collect();
        lengths.sort_unstable();
        Self {
            max,
            lengths,
            ref_len,
        }
    }

    fn clip(&self, g: &Gram, exclude: Option<usize>) -> u32 {
        match self.max.get(g) {
            None => 0,
            Some(&(best, holder, second)) => {
                if Some(holder) == exclude {
                    second
                } else {
                    best
                }
            }
        }
    }

    fn closest_len(&self, c: usize, exclude: Option<usize>) -> Option<usize> {
        let skip = exclude.and_then(|e| self.ref_len.get(&e)).copied();
        self.lengths
            .iter()
            .filter(|&&(l, m)| !(Some(l) == skip && m == 1))
            .map(|&(l, _)| l)
            .min_by_key(|&l| (l.abs_diff(c), l))
    }

    fn score(&self, hyp: &[usize], n: usize, exclude: Option<usize>) -> f64 {
        let hc = counts(hyp, n);
        let mut log_sum = 0.0;
        for k in 1..=n {
            let total = hyp.len().saturating_sub(k - 1);
            let matched: u32 = hc
                .iter()
                .filter(|(g, _)| g.0 as usize == k)
                .map(|(g, &c)| c.min(self.clip(g, exclude)))
                .sum();
            if total == 0 || matched == 0 {
                return 0.0;
            }
            log_sum += (f64::from(matched) / total as f64).ln();
        }
        let c = hyp.len();
        let r = match self.closest_len(c, exclude) {
            Some(r) => r,
            None => return 0.0,
        };
        let log_bp = if c > r { 0.0 } else { 1.0 - r as f64 / c as f64 };
        (log_sum / n as f64 + log_bp).exp()
    }
}

/// Mean per-hypothesis BLEU-n against the whole reference corpus, ×100.
pub fn bleu_n<H: AsRef<[usize]>, R: AsRef<[usize]>>(hypotheses: &[H], references: &[R], n: usize) -> Result<f64> {
    check_n(n)?;
    if hypotheses.is_empty() || references.is_empty() {
        return Err(Error::Empty("BLEU corpus"));
    }
    let ids: Vec<usize> = (0..references.len()).collect();
    let index = RefIndex::build(references, &ids, n);
    let total: f64 = hypotheses.iter().map(|h| index.score(h.as_ref(), n, None)).sum();
    Ok(100.0 * total / hypotheses.len() as f64)
}

/// Mean BLEU-n of each sample against the rest, ×100. References are capped
/// at `cap` items drawn with `seed`; every sample is still scored.
pub fn self_bleu_n<S: AsRef<[usize]>>(corpus: &[S], n: usize, cap: usize, seed: u64) -> Result<f64> {
    check_n(n)?;
    if corpus.len() < 2 {
        return Err(Error::Empty("self-BLEU needs at least two samples"));
    }
    if cap < 2 {
        return Err(Error::Config("self-BLEU reference cap must be at least 2".into()));
    }
    let ids: Vec<usize> = if corpus.len() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, corpus.len(), cap).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..corpus.len()).collect()
    };
    let index = RefIndex::build(corpus, &ids, n);
    let total: f64 = corpus
        .iter()
        .enumerate()
        .map(|(i, s)| index.score(s.as_ref(), n, Some(i)))
        .sum();
    Ok(100.0 * total / corpus.len() as f64)
}

/// Unique n-grams over total n-grams, corpus level.
pub fn distinct_n<S: AsRef<[usize]>>(corpus: &[S], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "n",
            value: 0.0,
            range: "[1, ∞)",
        });
    }
    let mut unique = HashSet::new();
    let mut total = 0usize;
    for s in corpus {
        for w in s.as_ref().windows(n) {
            unique.insert(w.to_vec());
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Empty("no n-grams: every sequence is shorter than n"));
    }
    Ok(unique.len() as f64 / total as f64)
}

/// Fraction of positions whose token already appears among the previous `l`
/// tokens of the same sequence, pooled over the corpus.
pub fn rep_l<S: AsRef<[usize]>>(corpus: &[S], l: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::OutOfRange {
            name: "l",
            value: 0.0,
            range: "[1, ∞)",
        });
    }
    if corpus.is_empty() {
        return Err(Error::Empty("rep-l corpus"));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for s in corpus {
        let s = s.as_ref();
        for i in 0..s.len() {
            if s[i.saturating_sub(l)..i].contains(&s[i]) {
                hits += 1;
            }
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Paired bootstrap p-value: the fraction of resamples whose mean difference
/// `A − B` fails to keep the sign of the full-data difference (a zero full
/// difference counts every resample as a flip).
pub fn paired_bootstrap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty("paired samples"));
    }
    if resamples < 100 {
        return Err(Error::OutOfRange {
            name: "resamples",
            value: resamples as f64,
            range: "[100, ∞)",
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let full = diffs.iter().sum::<f64>() / n as f64;
    let sign = if full > 0.0 {
        1.0
    } else if full < 0.0 {
        -1.0
    } else {
        0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flips = 0usize;
    for _ in 0..resamples {
        let s: f64 = (0..n).map(|_| diffs[rng.random_range(0..n)]).sum();
        if (s / n as f64) * sign <= 0.0 {
            flips += 1;
        }
    }
    Ok(flips as f64 / resamples as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub param: usize,
    pub value: f64,
    pub hypotheses: usize,
    pub references: usize,
    pub seed: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bleu_trivial_cases() {
        let refs = vec![vec![1, 2, 3], vec![4, 5, 6, 7]];
        let hyps = vec![vec![4, 5, 6, 7]];
        assert_eq!(bleu_n(&hyps, &refs, 1).unwrap(), 100.0);
        assert_eq!(bleu_n(&hyps, &refs, 4).unwrap(), 100.0);
        assert_eq!(bleu_n(&[vec![9, 8]], &refs, 1).unwrap(), 0.0);
        assert!(bleu_n(&hyps, &refs, 5).is_err());
        assert!(bleu_n::<Vec<usize>, _>(&[], &refs, 1).is_err());
    }

    #[test]
    fn bleu_hand_computed() {
        // hyp (5 tokens) = 1 1 2 3 4, ref = 1 2 3 5 4 4
        // p1: 1×2→1, 2, 3, 4 → 4/5; p2: (1,1) (1,2) (2,3) (3,4) → 2/4
        // closest ref length 6 > 5: BP = exp(1 − 6/5)
        let b = bleu_n(&[vec![1, 1, 2, 3, 4]], &[vec![1, 2, 3, 5, 4, 4]], 2).unwrap();
        let want = 100.0 * ((0.8f64 * 0.5).sqrt()) * (1.0f64 - 1.2).exp();
        assert!((b - want).abs() < 1e-12);
    }

    #[test]
    fn self_bleu_trivial_cases() {
        let same = vec![vec![1, 2, 3, 4]; 3];
        assert!((self_bleu_n(&same, 4, SELF_BLEU_CAP, 0).unwrap() - 100.0).abs() < 1e-12);
        let disjoint = vec![vec![1, 2], vec![3, 4], vec![5, 6]];
        assert_eq!(self_bleu_n(&disjoint, 2, SELF_BLEU_CAP, 0).unwrap(), 0.0);
        assert!(self_bleu_n(&[vec![1]], 1, SELF_BLEU_CAP, 0).is_err());
    }

    #[test]
    fn self_bleu_unrolls_to_leave_one_out() {
        let c = vec![vec![1, 2, 3, 1], vec![1, 2, 2], vec![3, 1, 2, 3, 3]];
        let mut direct = 0.0;
        for i in 0..c.len() {
            let rest: Vec<Vec<usize>> = c.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| s.clone()).collect();
            direct += bleu_n(&[c[i].clone()], &rest, 2).unwrap();
        }
        let got = self_bleu_n(&c, 2, SELF_BLEU_CAP, 0).unwrap();
        assert!((got - direct / 3.0).abs() < 1e-12);
    }

    #[test]
    fn distinct_and_rep() {
        assert_eq!(distinct_n(&[vec![1, 2, 3]], 1).unwrap(), 1.0);
        assert_eq!(distinct_n(&[vec![7; 4]], 1).unwrap(), 0.25);
        assert!(distinct_n(&[vec![1]], 2).is_err());
        assert_eq!(rep_l(&[vec![1, 2, 3]], 4).unwrap(), 0.0);
        assert_eq!(rep_l(&[vec![5; 4]], 4).unwrap(), 0.75);
        assert_eq!(rep_l(&[vec![1, 2, 1]], 1).unwrap(), 0.0);
        assert!((rep_l(&[vec![1, 2, 1]], 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_examples() {
        let a: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        assert_eq!(paired_bootstrap(&a, &a, 1000, 1).unwrap(), 1.0);
        let b: Vec<f64> = a.iter().map(|x| x - 10.0).collect();
        assert_eq!(paired_bootstrap(&a, &b, 1000, 1).unwrap(), 0.0);
        assert_eq!(
            paired_bootstrap(&a, &b[..10].repeat(5), 200, 3).unwrap(),
            paired_bootstrap(&a, &b[..10].repeat(5), 200, 3).unwrap()
        );
        assert!(paired_bootstrap(&a, &a[1..], 100, 0).is_err());
    }
}
