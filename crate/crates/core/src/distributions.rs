//! Exact algebra over finite categorical distributions.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on the sum of a distribution before renormalization.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// A probability vector over a vocabulary of size `V ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDist {
    probs: Vec<f64>,
}

impl CategoricalDist {
    /// Validates entries in `[0, 1]` and a total within [`SUM_TOLERANCE`] of
    /// one, then renormalizes to machine precision.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty vocabulary".into()));
        }
        let mut probs = probs;
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < -SUM_TOLERANCE || *p > 1.0 + SUM_TOLERANCE {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} = {p} is outside [0, 1]"
                )));
            }
            *p = p.clamp(0.0, 1.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}"
            )));
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(Self { probs })
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be nonnegative with a positive finite sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// Softmax of finite logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        Self::from_weights(&w)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDistribution("empty vocabulary".into()));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    /// Independent uniform(0, 1] weights, each clamped below at 1e-12, normalized.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Self {
        let w: Vec<f64> = (0..size)
            .map(|_| (1.0 - rng.random::<f64>()).max(1e-12))
            .collect();
        let total: f64 = w.iter().sum();
        Self {
            probs: w.into_iter().map(|x| x / total).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Elementwise convex combination `λ·self + (1−λ)·other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        same_size(self, other)?;
        Self::new(
            self.probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        )
    }
}

/// The one-hot distribution `e^(w)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OneHot {
    index: usize,
    size: usize,
}

impl OneHot {
    pub fn new(index: usize, size: usize) -> Result<Self> {
        if index >= size {
            return Err(Error::TokenOutOfRange { id: index, vocab: size });
        }
        Ok(Self { index, size })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn to_dist(&self) -> CategoricalDist {
        let mut probs = vec![0.0; self.size];
        probs[self.index] = 1.0;
        CategoricalDist { probs }
    }
}

/// `γ·e^(w) + (1−γ)·base`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureProxy {
    gamma: f64,
    target: usize,
    base: CategoricalDist,
}

impl MixtureProxy {
    pub fn new(gamma: f64, target: usize, base: CategoricalDist) -> Result<Self> {
        check_gamma(gamma)?;
        if target >= base.len() {
            return Err(Error::TokenOutOfRange {
                id: target,
                vocab: base.len(),
            });
        }
        Ok(Self { gamma, target, base })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn base(&self) -> &CategoricalDist {
        &self.base
    }

    pub fn prob(&self, i: usize) -> f64 {
        let hit = if i == self.target { self.gamma } else { 0.0 };
        hit + (1.0 - self.gamma) * self.base.probs[i]
    }

    pub fn to_dist(&self) -> CategoricalDist {
        CategoricalDist {
            probs: (0..self.base.len()).map(|i| self.prob(i)).collect(),
        }
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::OutOfRange {
            name: "gamma",
            value: gamma,
            range: "[0, 1]",
        });
    }
    Ok(())
}

fn same_size(p: &CategoricalDist, q: &CategoricalDist) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// `½·Σ|p_i − q_i|`.
pub fn tvd_abs(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    same_size(p, q)?;
    let s: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * s)
}

/// `1 − Σ min(p_i, q_i)`.
pub fn tvd_min(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    same_size(p, q)?;
    let s: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| a.min(*b)).sum();
    Ok(1.0 - s)
}

/// `Σ p_i log(p_i / q_i)` with `0·log 0 = 0`. A zero in `q` under positive
/// `p` is reported as an error instead of returning infinity.
pub fn kld(p: &CategoricalDist, q: &CategoricalDist) -> Result<f64> {
    same_size(p, q)?;
    let mut total = 0.0;
    for (i, (&a, &b)) in p.probs.iter().zip(&q.probs).enumerate() {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::SupportViolation { index: i, p: a });
        }
        total += a * (a / b).ln();
    }
    Ok(total.max(0.0))
}

/// Shannon entropy in nats.
pub fn shannon_entropy(p: &CategoricalDist) -> f64 {
    -p.probs
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Tsallis α-entropy `(1 − Σ p_i^α) / (α(α−1))`, Shannon at `α = 1`.
pub fn tsallis_entropy(p: &CategoricalDist, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            range: "(0, inf)",
        });
    }
    if alpha == 1.0 {
        return Ok(shannon_entropy(p));
    }
    let s: f64 = p.probs.iter().map(|x| x.powf(alpha)).sum();
    Ok((1.0 - s) / (alpha * (alpha - 1.0)))
}

/// `E_{w~p}[TVD(e^(w), p)] = 1 − Σ p_w²`.
pub fn onehot_variance(p: &CategoricalDist) -> f64 {
    1.0 - p.probs.iter().map(|x| x * x).sum::<f64>()
}

/// `Σ_w p_w·e^(w)`, accumulated one-hot by one-hot.
pub fn expected_onehot(p: &CategoricalDist) -> CategoricalDist {
    let mut acc = vec![0.0; p.len()];
    for (w, &pw) in p.probs.iter().enumerate() {
        let e = OneHot { index: w, size: p.len() }.to_dist();
        for (a, x) in acc.iter_mut().zip(e.probs) {
            *a += pw * x;
        }
    }
    CategoricalDist { probs: acc }
}

pub fn mixture_proxy_dist(gamma: f64, w: usize, base: &CategoricalDist) -> Result<CategoricalDist> {
    Ok(MixtureProxy::new(gamma, w, base.clone())?.to_dist())
}

/// `Σ_w weights_w·f(w)` over the full vocabulary.
pub fn expectation<F>(weights: &CategoricalDist, mut f: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut acc = 0.0;
    for (w, &pw) in weights.probs.iter().enumerate() {
        if pw > 0.0 {
            acc += pw * f(w)?;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(p: &[f64]) -> CategoricalDist {
        CategoricalDist::new(p.to_vec()).unwrap()
    }

    #[test]
    fn construction_validates_and_renormalizes() {
        assert!(CategoricalDist::new(vec![]).is_err());
        assert!(CategoricalDist::new(vec![0.5, 0.6]).is_err());
        assert!(CategoricalDist::new(vec![1.5, -0.5]).is_err());
        let p = CategoricalDist::new(vec![0.5 + 5e-11, 0.5]).unwrap();
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tvd_examples() {
        let p = d(&[0.7, 0.3]);
        let q = d(&[0.4, 0.6]);
        assert!((tvd_abs(&p, &q).unwrap() - 0.3).abs() < 1e-15);
        assert!((tvd_min(&p, &q).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(tvd_abs(&p, &p).unwrap(), 0.0);
        assert_eq!(tvd_min(&p, &p).unwrap(), 0.0);
        assert_eq!(tvd_abs(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert!(matches!(
            tvd_abs(&p, &d(&[1.0])),
            Err(Error::SizeMismatch(2, 1))
        ));
        assert!(tvd_min(&p, &d(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn tvd_min_with_onehot() {
        let q = d(&[0.1, 0.6, 0.3]);
        let e = OneHot::new(2, 3).unwrap().to_dist();
        assert!((tvd_min(&e, &q).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn tvd_forms_agree_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..1000 {
            let v = 1 + k % 9;
            let p = CategoricalDist::random(&mut rng, v);
            let q = CategoricalDist::random(&mut rng, v);
            let a = tvd_abs(&p, &q).unwrap();
            let m = tvd_min(&p, &q).unwrap();
            assert!((a - m).abs() < 1e-12);
        }
    }

    #[test]
    fn kld_examples() {
        let p = d(&[0.25, 0.75]);
        assert_eq!(kld(&p, &p).unwrap(), 0.0);
        let v = kld(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let err = kld(&d(&[0.5, 0.5]), &d(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { index: 1, .. }));
    }

    #[test]
    fn tsallis_examples() {
        let u = CategoricalDist::uniform(4).unwrap();
        assert!((tsallis_entropy(&u, 2.0).unwrap() - 0.375).abs() < 1e-15);
        let e = OneHot::new(1, 5).unwrap().to_dist();
        for a in [0.5, 1.0, 2.0, 3.0] {
            assert!(tsallis_entropy(&e, a).unwrap().abs() < 1e-15);
        }
        let p = d(&[0.1, 0.2, 0.3, 0.4]);
        let h = shannon_entropy(&p);
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert!((tsallis_entropy(&p, a).unwrap() - h).abs() < 5e-4);
        }
        assert!(tsallis_entropy(&p, 0.0).is_err());
    }

    #[test]
    fn onehot_variance_examples() {
        assert_eq!(onehot_variance(&OneHot::new(0, 3).unwrap().to_dist()), 0.0);
        let u = CategoricalDist::uniform(4).unwrap();
        assert!((onehot_variance(&u) - 0.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = CategoricalDist::random(&mut rng, 7);
            let direct = expectation(&p, |w| {
                tvd_abs(&OneHot::new(w, 7).unwrap().to_dist(), &p)
            })
            .unwrap();
            let closed = onehot_variance(&p);
            assert!((direct - closed).abs() < 1e-12);
            assert!((closed - 2.0 * tsallis_entropy(&p, 2.0).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_onehot_is_identity() {
        for p in [
            d(&[0.2, 0.5, 0.3]),
            OneHot::new(1, 3).unwrap().to_dist(),
            CategoricalDist::uniform(6).unwrap(),
        ] {
            let e = expected_onehot(&p);
            for (a, b) in e.probs().iter().zip(p.probs()) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn mixture_proxy_examples() {
        let base = d(&[0.5, 0.5]);
        let m = mixture_proxy_dist(0.5, 0, &base).unwrap();
        assert_eq!(m.probs(), &[0.75, 0.25]);
        let one = mixture_proxy_dist(1.0, 1, &base).unwrap();
        assert_eq!(one.probs(), &[0.0, 1.0]);
        let zero = mixture_proxy_dist(0.0, 1, &base).unwrap();
        assert_eq!(zero.probs(), base.probs());
        assert!(matches!(
            mixture_proxy_dist(1.5, 0, &base),
            Err(Error::OutOfRange { name: "gamma", .. })
        ));
        assert!(mixture_proxy_dist(0.5, 2, &base).is_err());
    }
}
