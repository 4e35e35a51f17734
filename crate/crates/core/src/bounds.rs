//! Exhaustive numerical checks of the TVD bounds and the proxy error
//! decomposition over tiny spaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Graph, Var};
use crate::distributions::{onehot_variance, tsallis_entropy, tvd_abs, CategoricalDist, OneHot};
use crate::error::{Error, Result};
use crate::seqmodel::{ModelConfig, SequenceModel, B_OUT};

/// Largest joint outcome space that will be enumerated.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Fixed-horizon distribution over `V^T` with one conditional per prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedSeqDist {
    vocab: usize,
    horizon: usize,
    /// `tables[t][code(prefix)]`, prefix encoded base `V`, first token most
    /// significant.
    tables: Vec<Vec<CategoricalDist>>,
}

fn outcome_count(vocab: usize, horizon: usize) -> Result<usize> {
    let needed = (vocab as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if needed > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            needed,
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(needed as usize)
}

impl FactorizedSeqDist {
    pub fn new(vocab: usize, tables: Vec<Vec<CategoricalDist>>) -> Result<Self> {
        let horizon = tables.len();
        if vocab == 0 || horizon == 0 {
            return Err(Error::Empty("factorized distribution"));
        }
        outcome_count(vocab, horizon)?;
        for (t, row) in tables.iter().enumerate() {
            if row.len() != vocab.pow(t as u32) {
                return Err(Error::SizeMismatch(row.len(), vocab.pow(t as u32)));
            }
            if let Some(c) = row.iter().find(|c| c.len() != vocab) {
                return Err(Error::SizeMismatch(c.len(), vocab));
            }
        }
        Ok(Self {
            vocab,
            horizon,
            tables,
        })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, vocab: usize, horizon: usize) -> Result<Self> {
        outcome_count(vocab, horizon)?;
        let tables = (0..horizon)
            .map(|t| {
                (0..vocab.pow(t as u32))
                    .map(|_| CategoricalDist::random(rng, vocab))
                    .collect()
            })
            .collect();
        Self::new(vocab, tables)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn conditional(&self, prefix: &[usize]) -> &CategoricalDist {
        let code = prefix.iter().fold(0, |acc, &y| acc * self.vocab + y);
        &self.tables[prefix.len()][code]
    }

    fn conditional_by_code(&self, t: usize, code: usize) -> &CategoricalDist {
        &self.tables[t][code]
    }

    /// Joint probability of one full sequence.
    pub fn prob(&self, seq: &[usize]) -> f64 {
        (0..seq.len())
            .map(|t| self.conditional(&seq[..t]).prob(seq[t]))
            .product()
    }

    /// Conditional-wise convex combination `(1−λ)·self + λ·other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let tables = self
            .tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.mix(y, 1.0 - lambda)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Self::new(self.vocab, tables)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.vocab != other.vocab {
            return Err(Error::SizeMismatch(self.vocab, other.vocab));
        }
        if self.horizon != other.horizon {
            return Err(Error::SizeMismatch(self.horizon, other.horizon));
        }
        Ok(())
    }

    /// Joint table in lexicographic order, built by extending prefixes.
    pub fn joint_table(&self) -> Vec<f64> {
        let mut level = vec![1.0];
        for t in 0..self.horizon {
            let mut next = Vec::with_capacity(level.len() * self.vocab);
            for (code, &mass) in level.iter().enumerate() {
                let c = self.conditional_by_code(t, code);
                next.extend(c.probs().iter().map(|p| mass * p));
            }
            level = next;
        }
        level
    }

    /// Joint table in reversed-digit order (first token least significant),
    /// each entry recomputed as a product of conditionals.
    fn joint_table_reversed(&self) -> Vec<f64> {
        let n = self.vocab.pow(self.horizon as u32);
        let mut seq = vec![0; self.horizon];
        (0..n)
            .map(|mut idx| {
                for s in seq.iter_mut() {
                    *s = idx % self.vocab;
                    idx /= self.vocab;
                }
                self.prob(&seq)
            })
            .collect()
    }
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Exact TVD between two joint distributions by full enumeration.
pub fn joint_tvd(p: &FactorizedSeqDist, q: &FactorizedSeqDist) -> Result<f64> {
    p.check_compatible(q)?;
    Ok(half_l1(&p.joint_table(), &q.joint_table()))
}

/// Same quantity through the reversed enumeration order.
pub fn joint_tvd_reenumerated(p: &FactorizedSeqDist, q: &FactorizedSeqDist) -> Result<f64> {
    p.check_compatible(q)?;
    Ok(half_l1(&p.joint_table_reversed(), &q.joint_table_reversed()))
}

/// `E_{y~p}[Σ_t TVD(p(·|y_<t), q(·|y_<t))]`, computed exactly.
pub fn expected_stepwise_tvd(p: &FactorizedSeqDist, q: &FactorizedSeqDist) -> Result<f64> {
    p.check_compatible(q)?;
    let mut level = vec![1.0];
    let mut total = 0.0;
    for t in 0..p.horizon {
        let mut next = Vec::with_capacity(level.len() * p.vocab);
        for (code, &mass) in level.iter().enumerate() {
            let (cp, cq) = (p.conditional_by_code(t, code), q.conditional_by_code(t, code));
            total += mass * tvd_abs(cp, cq)?;
            next.extend(cp.probs().iter().map(|x| mass * x));
        }
        level = next;
    }
    Ok(total)
}

/// Outcome of one randomized check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub check_name: String,
    pub trials: usize,
    pub tolerance: f64,
    /// Largest amount by which the checked relation failed; `≤ 0` is slack.
    pub max_violation: f64,
    pub lhs_max: f64,
    pub rhs_max: f64,
    pub seed: u64,
}

impl BoundReport {
    fn new(check_name: &str, tolerance: f64, seed: u64) -> Self {
        Self {
            check_name: check_name.to_string(),
            trials: 0,
            tolerance,
            max_violation: f64::NEG_INFINITY,
            lhs_max: f64::NEG_INFINITY,
            rhs_max: f64::NEG_INFINITY,
            seed,
        }
    }

    /// Records `lhs ≤ rhs`.
    fn record_le(&mut self, lhs: f64, rhs: f64) {
        self.record(lhs - rhs, lhs, rhs);
    }

    /// Records `|lhs − rhs| ≈ 0`.
    fn record_eq(&mut self, lhs: f64, rhs: f64) {
        self.record((lhs - rhs).abs(), lhs, rhs);
    }

    fn record(&mut self, violation: f64, lhs: f64, rhs: f64) {
        // NaN must surface as a failure
        self.max_violation = if violation.is_nan() {
            f64::INFINITY
        } else {
            self.max_violation.max(violation)
        };
        self.lhs_max = self.lhs_max.max(lhs);
        self.rhs_max = self.rhs_max.max(rhs);
    }

    fn merge(&mut self, other: &BoundReport) {
        self.record(other.max_violation, other.lhs_max, other.rhs_max);
    }

    fn trial(&mut self) {
        self.trials += 1;
    }

    pub fn passed(&self) -> bool {
        self.trials > 0 && self.max_violation <= self.tolerance
    }
}

/// Joint TVD is bounded by the expected sum of per-step TVDs.
pub fn verify_prop1(p: &FactorizedSeqDist, q: &FactorizedSeqDist) -> Result<BoundReport> {
    let mut r = BoundReport::new("sequence_tvd_bound", 1e-10, 0);
    r.record_le(joint_tvd(p, q)?, expected_stepwise_tvd(p, q)?);
    r.trial();
    Ok(r)
}

/// `|Πa − Πb| ≤ Σ_t |a_t − b_t|·Π_{i<t} a_i·Π_{j>t} b_j`.
pub fn verify_lemma_products(a: &[f64], b: &[f64]) -> Result<BoundReport> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if let Some(&x) = a.iter().chain(b).find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::OutOfRange {
            name: "product factor",
            value: x,
            range: "[0, 1]",
        });
    }
    let lhs = (a.iter().product::<f64>() - b.iter().product::<f64>()).abs();
    let rhs: f64 = (0..a.len())
        .map(|t| {
            (a[t] - b[t]).abs()
                * a[..t].iter().product::<f64>()
                * b[t + 1..].iter().product::<f64>()
        })
        .sum();
    let mut r = BoundReport::new("hybrid_product_telescoping", 1e-12, 0);
    r.record_le(lhs, rhs);
    r.trial();
    Ok(r)
}

/// Convexity bound `TVD(p,q) ≤ Σ_w p_w TVD(e^(w), q)` and its closed form
/// `1 − Σ_w p_w q_w`.
pub fn verify_prop2(p: &CategoricalDist, q: &CategoricalDist) -> Result<BoundReport> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch(p.len(), q.len()));
    }
    let lhs = tvd_abs(p, q)?;
    let mut rhs = 0.0;
    for w in 0..p.len() {
        rhs += p.prob(w) * tvd_abs(&OneHot::new(w, p.len())?.to_dist(), q)?;
    }
    let closed = 1.0 - p.probs().iter().zip(q.probs()).map(|(a, b)| a * b).sum::<f64>();
    let mut r = BoundReport::new("onehot_tvd_convexity", 1e-12, 0);
    r.record_le(lhs, rhs);
    r.record((rhs - closed).abs(), lhs, rhs);
    r.trial();
    Ok(r)
}

/// Bias/variance terms of the mixture proxy, both as closed forms and as
/// direct expectations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorDecomposition {
    pub error: f64,
    pub bias: f64,
    pub variance: f64,
    pub bias_direct: f64,
    pub variance_direct: f64,
}

/// Decomposes the error of estimating `TVD(p_o, q)` by
/// `E_{w~p_o} TVD(γe^(w) + (1−γ)q, q)`.
pub fn error_decomposition(p_o: &CategoricalDist, q: &CategoricalDist, gamma: f64) -> Result<ErrorDecomposition> {
    if p_o.len() != q.len() {
        return Err(Error::SizeMismatch(p_o.len(), q.len()));
    }
    crate::distributions::check_gamma(gamma)?;
    let v = p_o.len();
    let mean_proxy = p_o.mix(q, gamma)?;
    let (mut est, mut var_direct) = (0.0, 0.0);
    for w in 0..v {
        let proxy = crate::distributions::mixture_proxy_dist(gamma, w, q)?;
        est += p_o.prob(w) * tvd_abs(&proxy, q)?;
        var_direct += p_o.prob(w) * tvd_abs(&proxy, &mean_proxy)?;
    }
    let target = tvd_abs(p_o, q)?;
    Ok(ErrorDecomposition {
        error: est - target,
        bias: (1.0 - gamma) * tvd_abs(q, p_o)?,
        variance: gamma * onehot_variance(p_o),
        bias_direct: tvd_abs(&mean_proxy, p_o)?,
        variance_direct: var_direct,
    })
}

/// `Error ≤ Bias + Variance`, with the closed forms cross-checked.
pub fn verify_error_decomposition(p_o: &CategoricalDist, q: &CategoricalDist, gamma: f64) -> Result<(BoundReport, BoundReport)> {
    let d = error_decomposition(p_o, q, gamma)?;
    let mut ineq = BoundReport::new("error_bias_variance_bound", 1e-12, 0);
    ineq.record_le(d.error, d.bias + d.variance);
    ineq.trial();
    let mut closed = BoundReport::new("bias_variance_closed_forms", 1e-12, 0);
    closed.record_eq(d.bias, d.bias_direct);
    closed.record_eq(d.variance, d.variance_direct);
    closed.trial();
    Ok((ineq, closed))
}

/// Gradient comparison at a single sampled point.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCase {
    pub p_model: f64,
    pub p_oracle: f64,
    /// `max |∇(−min(1, p_θ/p_o)) − expected|` over every parameter.
    pub tvd_branch_error: f64,
    /// `max |∇(−log p_θ) − (−∇p_θ/p_θ)|`.
    pub kld_error: f64,
    /// Relative error of `‖∇KLD‖/‖∇TVD‖` against `p_o/p_θ` (0 on the flat
    /// branch).
    pub ratio_error: f64,
    /// Output-bias gradient of `p_θ` against `p_θ(δ_{jy} − p_j)`.
    pub analytic_error: f64,
    pub tvd_grad_norm: f64,
}

/// Checks the TVD and KLD gradient branches for a one-step model at target
/// `y`. Equality within 1e-12 counts as the flat branch.
pub fn gradient_case(model: &SequenceModel, p_o: &FactorizedSeqDist, y: usize) -> Result<GradientCase> {
    if p_o.horizon() != 1 {
        return Err(Error::Config("gradient cases need a one-step oracle".into()));
    }
    let v = model.vocab_size();
    if p_o.vocab() != v {
        return Err(Error::VocabMismatch(p_o.vocab(), v));
    }
    let po = p_o.conditional(&[]).prob(y);
    let seq = crate::seqmodel::TokenSequence::from_body(&[]);

    // Fresh tape per quantity so each gradient is independent.
    let grad_of = |build: &dyn Fn(&mut Graph, Var) -> Result<Var>| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let leaves = model.leaves(&mut g);
        let lp = model.forward_graph(&mut g, &leaves, &[&seq])?;
        // a bare EOS sequence gives exactly one [1×V] row
        let row = g.reshape(lp, vec![v])?;
        let mut select = vec![0.0; v];
        select[y] = 1.0;
        let picked = g.dot_const(row, &select)?;
        let out = build(&mut g, picked)?;
        let grads = g.backward(out)?;
        let val = g.value(out).item();
        Ok((val, leaves.iter().map(|&l| grads.tensor(l).into_values()).collect()))
    };
    let (log_pt, _) = grad_of(&|_, x| Ok(x))?;
    let pt = log_pt.exp();
    let (_, grad_p) = grad_of(&|g, x| Ok(g.exp(x)))?;
    let (_, grad_tvd) = grad_of(&|g, x| {
        let p = g.exp(x);
        let ratio = g.scale(p, 1.0 / po);
        let neg = g.neg(ratio);
        Ok(g.max_const(neg, -1.0))
    })?;
    let (_, grad_kld) = grad_of(&|g, x| Ok(g.neg(x)))?;

    let flat = |v: &[Vec<f64>]| v.iter().flatten().copied().collect::<Vec<f64>>();
    let (gp, gt, gk) = (flat(&grad_p), flat(&grad_tvd), flat(&grad_kld));
    let on_rising_branch = pt < po && (po - pt).abs() > 1e-12;
    let expected_tvd: Vec<f64> = gp
        .iter()
        .map(|d| if on_rising_branch { -d / po } else { 0.0 })
        .collect();
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let tvd_branch_error = max_diff(&gt, &expected_tvd);
    let expected_kld: Vec<f64> = gp.iter().map(|d| -d / pt).collect();
    let kld_error = max_diff(&gk, &expected_kld);
    let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tvd_grad_norm = norm(&gt);
    let ratio_error = if on_rising_branch {
        ((norm(&gk) / tvd_grad_norm) - po / pt).abs() / (po / pt)
    } else {
        0.0
    };
    let probs = model.step_dist(&[])?;
    let analytic: Vec<f64> = (0..v)
        .map(|j| pt * (f64::from(u8::from(j == y)) - probs.prob(j)))
        .collect();
    let analytic_error = max_diff(&grad_p[B_OUT], &analytic);
    Ok(GradientCase {
        p_model: pt,
        p_oracle: po,
        tvd_branch_error,
        kld_error,
        ratio_error,
        analytic_error,
        tvd_grad_norm,
    })
}

/// Configuration of the seeded verification suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Trials for the sequence-level and gradient checks; the scalar checks
    /// run ten times as many.
    pub trials: usize,
    /// Flips the sign of one relation; used to exercise failure reporting.
    pub inject_fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 1000,
            inject_fault: false,
        }
    }
}

fn trial_rng(seed: u64, check: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ check.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(trial as u64);
    rng
}

/// Runs every check and returns one report per check.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<BoundReport>> {
    let n = cfg.trials.max(1);
    let many = 10 * n;
    let seed = cfg.seed;
    let mut reports = Vec::new();

    let mut orders = BoundReport::new("joint_tvd_enumeration_orders", 1e-12, seed);
    let mut prop1 = BoundReport::new("sequence_tvd_bound", 1e-10, seed);
    let mut tighten = BoundReport::new("sequence_bound_mixing_path", 1e-12, seed);
    for i in 0..n {
        let mut rng = trial_rng(seed, 1, i);
        let v = rng.random_range(2..=4);
        let t = rng.random_range(1..=3);
        let p = FactorizedSeqDist::random(&mut rng, v, t)?;
        let q = FactorizedSeqDist::random(&mut rng, v, t)?;
        orders.record_eq(joint_tvd(&p, &q)?, joint_tvd_reenumerated(&p, &q)?);
        orders.trial();
        let r = verify_prop1(&p, &q)?;
        prop1.merge(&r);
        prop1.trial();
        if cfg.inject_fault {
            // reversed relation: RHS ≤ LHS
            prop1.record_le(expected_stepwise_tvd(&p, &q)?, joint_tvd(&p, &q)?);
        }
        // along the path from q to p the bound keeps holding and closes at p
        let mut last = 0.0;
        for k in 0..5 {
            let qk = q.mix(&p, k as f64 / 4.0)?;
            last = expected_stepwise_tvd(&p, &qk)? - joint_tvd(&p, &qk)?;
            tighten.record(-last, 0.0, last);
        }
        tighten.record(last.abs(), last, 0.0);
        tighten.trial();
    }
    reports.extend([orders, prop1, tighten]);

    let mut lemma = BoundReport::new("hybrid_product_telescoping", 1e-12, seed);
    let mut prop2 = BoundReport::new("onehot_tvd_convexity", 1e-12, seed);
    let mut decomp = BoundReport::new("error_bias_variance_bound", 1e-12, seed);
    let mut closed = BoundReport::new("bias_variance_closed_forms", 1e-12, seed);
    let mut tsallis = BoundReport::new("onehot_variance_tsallis_identity", 1e-12, seed);
    for i in 0..many {
        let mut rng = trial_rng(seed, 2, i);
        let t = rng.random_range(1..=6);
        let a: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
        lemma.merge(&verify_lemma_products(&a, &b)?);
        lemma.trial();

        let v = rng.random_range(2..=8);
        let p = CategoricalDist::random(&mut rng, v);
        let q = CategoricalDist::random(&mut rng, v);
        prop2.merge(&verify_prop2(&p, &q)?);
        prop2.trial();

        let gamma = match i % 10 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        };
        let (ineq, cf) = verify_error_decomposition(&p, &q, gamma)?;
        decomp.merge(&ineq);
        decomp.trial();
        closed.merge(&cf);
        closed.trial();

        tsallis.record_eq(onehot_variance(&p), 2.0 * tsallis_entropy(&p, 2.0)?);
        tsallis.trial();
    }
    reports.extend([lemma, prop2, decomp, closed, tsallis]);

    let mut grads = BoundReport::new("gradient_branches", 1e-6, seed);
    for i in 0..n {
        let mut rng = trial_rng(seed, 3, i);
        let v = rng.random_range(2..=5);
        let cfg_m = ModelConfig {
            vocab_size: v,
            embed_dim: 3,
            hidden_dim: 3,
        };
        let model = SequenceModel::init(cfg_m, rng.random())?;
        let p_o = FactorizedSeqDist::random(&mut rng, v, 1)?;
        let y = crate::seqmodel::draw_from_log_probs(
            &p_o.conditional(&[]).probs().iter().map(|p| p.ln()).collect::<Vec<_>>(),
            &mut rng,
        );
        let mut c = gradient_case(&model, &p_o, y)?;
        if (c.p_model - c.p_oracle).abs() <= 1e-12 {
            let mut nudged = model.clone();
            nudged.params_mut()[B_OUT].values_mut()[y] += 1e-3;
            c = gradient_case(&nudged, &p_o, y)?;
        }
        let worst = c
            .tvd_branch_error
            .max(c.kld_error)
            .max(c.ratio_error)
            .max(c.analytic_error);
        grads.record(worst, c.p_model, c.p_oracle);
        if c.p_model > c.p_oracle {
            grads.record(c.tvd_grad_norm, c.tvd_grad_norm, 0.0);
        }
        grads.trial();
    }
    reports.push(grads);

    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_dist(seed: u64, v: usize, t: usize) -> FactorizedSeqDist {
        FactorizedSeqDist::random(&mut ChaCha8Rng::seed_from_u64(seed), v, t).unwrap()
    }

    #[test]
    fn joint_sums_to_one() {
        let p = seq_dist(1, 3, 3);
        assert!((p.joint_table().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn joint_tvd_trivial_cases() {
        let p = seq_dist(2, 3, 3);
        assert_eq!(joint_tvd(&p, &p).unwrap(), 0.0);
        let a = seq_dist(3, 4, 1);
        let b = seq_dist(4, 4, 1);
        let direct = tvd_abs(a.conditional(&[]), b.conditional(&[])).unwrap();
        assert!((joint_tvd(&a, &b).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn joint_tvd_orders_agree() {
        let p = seq_dist(5, 3, 3);
        let q = seq_dist(6, 3, 3);
        let a = joint_tvd(&p, &q).unwrap();
        let b = joint_tvd_reenumerated(&p, &q).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn enumeration_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            FactorizedSeqDist::random(&mut rng, 10, 7),
            Err(Error::EnumerationBudget { .. })
        ));
    }

    #[test]
    fn sequence_bound_trivial_cases() {
        let p = seq_dist(7, 3, 2);
        let r = verify_prop1(&p, &p).unwrap();
        assert_eq!(r.lhs_max, 0.0);
        assert_eq!(r.rhs_max, 0.0);
        let a = seq_dist(8, 4, 1);
        let b = seq_dist(9, 4, 1);
        let r = verify_prop1(&a, &b).unwrap();
        assert!(r.max_violation.abs() < 1e-15);
    }

    #[test]
    fn hybrid_products_trivial_cases() {
        let r = verify_lemma_products(&[0.3, 0.5], &[0.3, 0.5]).unwrap();
        assert_eq!(r.lhs_max, 0.0);
        let r = verify_lemma_products(&[0.9], &[0.2]).unwrap();
        assert!((r.lhs_max - 0.7).abs() < 1e-15 && r.max_violation.abs() < 1e-15);
        assert!(verify_lemma_products(&[1.5], &[0.2]).is_err());
    }

    #[test]
    fn onehot_convexity_examples() {
        let u = CategoricalDist::uniform(2).unwrap();
        let r = verify_prop2(&u, &u).unwrap();
        assert_eq!(r.lhs_max, 0.0);
        assert!((r.rhs_max - 0.5).abs() < 1e-15);
        let e = OneHot::new(1, 3).unwrap().to_dist();
        let q = CategoricalDist::new(vec![0.2, 0.3, 0.5]).unwrap();
        let r = verify_prop2(&e, &q).unwrap();
        assert!(r.max_violation.abs() < 1e-15);
    }

    #[test]
    fn decomposition_at_gamma_limits() {
        let p = CategoricalDist::new(vec![0.6, 0.3, 0.1]).unwrap();
        let q = CategoricalDist::new(vec![0.2, 0.2, 0.6]).unwrap();
        let t = tvd_abs(&p, &q).unwrap();
        let d0 = error_decomposition(&p, &q, 0.0).unwrap();
        assert!((d0.error + t).abs() < 1e-15);
        assert!((d0.bias - t).abs() < 1e-15);
        assert_eq!(d0.variance, 0.0);
        let d1 = error_decomposition(&p, &q, 1.0).unwrap();
        assert_eq!(d1.bias, 0.0);
        assert!((d1.variance - onehot_variance(&p)).abs() < 1e-15);
    }

    #[test]
    fn gradient_branches_at_extremes() {
        let cfg = ModelConfig {
            vocab_size: 3,
            embed_dim: 2,
            hidden_dim: 2,
        };
        let model = SequenceModel::init(cfg, 1).unwrap();
        // oracle puts almost nothing on y = 0, so p_θ > p_o there
        let low = FactorizedSeqDist::new(3, vec![vec![CategoricalDist::new(vec![1e-6, 0.5, 0.5 - 1e-6]).unwrap()]]).unwrap();
        let c = gradient_case(&model, &low, 0).unwrap();
        assert!(c.p_model > c.p_oracle);
        assert_eq!(c.tvd_grad_norm, 0.0);
        let high = FactorizedSeqDist::new(3, vec![vec![CategoricalDist::new(vec![0.98, 0.01, 0.01]).unwrap()]]).unwrap();
        let c = gradient_case(&model, &high, 0).unwrap();
        assert!(c.p_model < c.p_oracle);
        assert!(c.ratio_error < 1e-6 && c.tvd_branch_error < 1e-9 && c.analytic_error < 1e-12);
    }

    #[test]
    fn small_suite_passes_and_fault_is_caught() {
        let cfg = SuiteConfig {
            seed: 3,
            trials: 50,
            inject_fault: false,
        };
        let reports = run_suite(&cfg).unwrap();
        assert!(reports.len() >= 7);
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
        let bad = run_suite(&SuiteConfig {
            inject_fault: true,
            ..cfg
        })
        .unwrap();
        assert!(bad.iter().any(|r| !r.passed()));
    }
}
