//! Token-level training losses.
//!
//! Every loss takes row-wise log-probabilities `[T×V]` and a [`Targets`]
//! layout and returns a scalar [`Var`] (mean over unmasked positions) plus a
//! [`LossBreakdown`] of per-position values and weights.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::distributions::{check_gamma, CategoricalDist, MixtureProxy};
use crate::error::{Error, Result};

/// Mixture coefficient and weight floor of the TaiLr objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailrConfig {
    pub gamma: f64,
    pub weight_floor: f64,
}

impl TailrConfig {
    pub fn new(gamma: f64, weight_floor: f64) -> Result<Self> {
        let cfg = Self { gamma, weight_floor };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if !(0.0..1.0).contains(&self.weight_floor) {
            return Err(Error::OutOfRange {
                name: "weight_floor",
                value: self.weight_floor,
                range: "[0, 1)",
            });
        }
        Ok(())
    }

    /// `max(b_m, p / (γ + (1−γ)p))`.
    pub fn weight(&self, p: f64) -> f64 {
        let raw = if self.gamma == 0.0 {
            1.0
        } else {
            p / (self.gamma + (1.0 - self.gamma) * p)
        };
        raw.max(self.weight_floor)
    }
}

/// Which rows of a `[T×V]` block are scored, and how they group into sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    /// Sequence each row belongs to.
    pub seq_index: Vec<usize>,
    /// Position of each row within its sequence.
    pub step: Vec<usize>,
}

impl Targets {
    /// One unpadded sequence, one row per token.
    pub fn single(ids: &[usize]) -> Self {
        Self {
            ids: ids.to_vec(),
            mask: vec![true; ids.len()],
            seq_index: vec![0; ids.len()],
            step: (0..ids.len()).collect(),
        }
    }

    /// Time-major layout used by batched training: row `t·B + b` holds
    /// step `t` of sequence `b`; rows past a sequence's end are masked with
    /// target `0`.
    pub fn time_major(seqs: &[&[usize]]) -> Self {
        let b = seqs.len();
        let len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut out = Self {
            ids: Vec::with_capacity(len * b),
            mask: Vec::with_capacity(len * b),
            seq_index: Vec::with_capacity(len * b),
            step: Vec::with_capacity(len * b),
        };
        for t in 0..len {
            for (i, s) in seqs.iter().enumerate() {
                let present = t < s.len();
                out.ids.push(if present { s[t] } else { 0 });
                out.mask.push(present);
                out.seq_index.push(i);
                out.step.push(t);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn active(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Drops every row of the given sequences from the mask.
    pub fn drop_sequences(&mut self, dropped: &[usize]) {
        let set: BTreeSet<usize> = dropped.iter().copied().collect();
        for (m, s) in self.mask.iter_mut().zip(&self.seq_index) {
            if set.contains(s) {
                *m = false;
            }
        }
    }

    /// Distinct targets at earlier unmasked steps of the same sequence,
    /// excluding the row's own target.
    pub fn prefix_candidates(&self) -> Vec<Vec<usize>> {
        let mut by_seq: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        for i in 0..self.len() {
            if self.mask[i] {
                by_seq
                    .entry(self.seq_index[i])
                    .or_default()
                    .push((self.step[i], self.ids[i]));
            }
        }
        (0..self.len())
            .map(|i| {
                if !self.mask[i] {
                    return Vec::new();
                }
                let seen: BTreeSet<usize> = by_seq[&self.seq_index[i]]
                    .iter()
                    .filter(|(s, id)| *s < self.step[i] && *id != self.ids[i])
                    .map(|(_, id)| *id)
                    .collect();
                seen.into_iter().collect()
            })
            .collect()
    }
}

/// Per-position diagnostics for a loss evaluation. Only unmasked rows appear.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    /// Row indices (into the `[T×V]` block) of the reported positions.
    pub positions: Vec<usize>,
    pub per_position_loss: Vec<f64>,
    pub per_position_weight: Vec<f64>,
    /// Mean of `per_position_loss`.
    pub total: f64,
}

/// A differentiable scalar loss and its diagnostics.
pub struct Loss {
    pub value: Var,
    pub breakdown: LossBreakdown,
}

fn check_targets(g: &Graph, log_probs: Var, targets: &Targets) -> Result<(usize, usize)> {
    let shape = g.shape(log_probs);
    let (rows, vocab) = match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "loss",
                left: shape.to_vec(),
                right: vec![targets.len()],
            })
        }
    };
    if rows != targets.len() || targets.mask.len() != rows {
        return Err(Error::ShapeMismatch {
            op: "loss",
            left: shape.to_vec(),
            right: vec![targets.len()],
        });
    }
    if let Some(&id) = targets.ids.iter().find(|&&id| id >= vocab) {
        return Err(Error::TokenOutOfRange { id, vocab });
    }
    if targets.active() == 0 {
        return Err(Error::Empty("no unmasked target positions"));
    }
    Ok((rows, vocab))
}

fn mean_coeffs(targets: &Targets) -> Vec<f64> {
    let n = targets.active() as f64;
    targets
        .mask
        .iter()
        .map(|&m| if m { 1.0 / n } else { 0.0 })
        .collect()
}

fn breakdown(targets: &Targets, losses: &[f64], weights: &[f64]) -> LossBreakdown {
    let positions: Vec<usize> = (0..targets.len()).filter(|&i| targets.mask[i]).collect();
    let per_position_loss: Vec<f64> = positions.iter().map(|&i| losses[i]).collect();
    let per_position_weight: Vec<f64> = positions.iter().map(|&i| weights[i]).collect();
    let total = per_position_loss.iter().sum::<f64>() / positions.len() as f64;
    LossBreakdown {
        positions,
        per_position_loss,
        per_position_weight,
        total,
    }
}

/// Mean `−log p(y_t)` over unmasked positions.
pub fn nll_loss(g: &mut Graph, log_probs: Var, targets: &Targets) -> Result<Loss> {
    check_targets(g, log_probs, targets)?;
    let picked = g.pick_rows(log_probs, &targets.ids)?;
    let coeffs: Vec<f64> = mean_coeffs(targets).into_iter().map(|c| -c).collect();
    let value = g.dot_const(picked, &coeffs)?;
    let losses: Vec<f64> = g.value(picked).values().iter().map(|v| -v).collect();
    let weights = vec![1.0; targets.len()];
    Ok(Loss {
        value,
        breakdown: breakdown(targets, &losses, &weights),
    })
}

/// `−w_t·log p(y_t)` where the weight is computed on the tape from the
/// forward probability and then detached with `stop_gradient`.
fn detached_weight_loss(
    g: &mut Graph,
    log_probs: Var,
    targets: &Targets,
    weight_of: impl FnOnce(&mut Graph, Var) -> Result<Var>,
) -> Result<Loss> {
    check_targets(g, log_probs, targets)?;
    let picked = g.pick_rows(log_probs, &targets.ids)?;
    let p = g.exp(picked);
    let raw = weight_of(g, p)?;
    let weight = g.stop_gradient(raw);
    let weighted = g.mul(weight, picked)?;
    let coeffs: Vec<f64> = mean_coeffs(targets).into_iter().map(|c| -c).collect();
    let value = g.dot_const(weighted, &coeffs)?;
    let losses: Vec<f64> = g.value(weighted).values().iter().map(|v| -v).collect();
    let weights = g.value(weight).values().to_vec();
    Ok(Loss {
        value,
        breakdown: breakdown(targets, &losses, &weights),
    })
}

/// `−max(b_m, p/(γ + (1−γ)p))·log p(y_t)` with the weight detached.
pub fn tailr_loss(g: &mut Graph, log_probs: Var, targets: &Targets, cfg: TailrConfig) -> Result<Loss> {
    cfg.validate()?;
    detached_weight_loss(g, log_probs, targets, |g, p| {
        let w = if cfg.gamma == 0.0 {
            // p/p; written out so a zero probability cannot produce 0/0
            let zero = g.scale(p, 0.0);
            let one = g.constant(1.0);
            g.add(zero, one)?
        } else {
            let scaled = g.scale(p, 1.0 - cfg.gamma);
            let gamma = g.constant(cfg.gamma);
            let denom = g.add(scaled, gamma)?;
            g.div(p, denom)?
        };
        Ok(g.max_const(w, cfg.weight_floor))
    })
}

/// GOLD-δ with a uniform behaviour policy: `−max(bound, p)·log p(y_t)`,
/// weight detached.
pub fn gold_loss(g: &mut Graph, log_probs: Var, targets: &Targets, weight_lower_bound: f64) -> Result<Loss> {
    if !(weight_lower_bound > 0.0 && weight_lower_bound <= 1.0) {
        return Err(Error::OutOfRange {
            name: "weight_lower_bound",
            value: weight_lower_bound,
            range: "(0, 1]",
        });
    }
    detached_weight_loss(g, log_probs, targets, |g, p| {
        Ok(g.max_const(p, weight_lower_bound))
    })
}

/// NLL plus `α·Σ_c −log(1 − p(c))` over the distinct tokens that occurred
/// earlier in the same sequence (other than the current target).
pub fn unlikelihood_loss(g: &mut Graph, log_probs: Var, targets: &Targets, alpha: f64) -> Result<Loss> {
    if !(alpha >= 0.0) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            range: "[0, inf)",
        });
    }
    let (_, vocab) = check_targets(g, log_probs, targets)?;
    let coeffs = mean_coeffs(targets);
    let picked = g.pick_rows(log_probs, &targets.ids)?;
    let neg_coeffs: Vec<f64> = coeffs.iter().map(|c| -c).collect();
    let nll = g.dot_const(picked, &neg_coeffs)?;
    let mut losses: Vec<f64> = g.value(picked).values().iter().map(|v| -v).collect();

    let candidates = targets.prefix_candidates();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for (r, cands) in candidates.iter().enumerate() {
        for &c in cands {
            rows.push(r);
            cols.push(c);
        }
    }
    if alpha == 0.0 || rows.is_empty() {
        let weights = vec![1.0; targets.len()];
        return Ok(Loss {
            value: nll,
            breakdown: breakdown(targets, &losses, &weights),
        });
    }

    // Gather log p(c) for every (row, candidate) pair via a flattened pick.
    let flat_len = g.value(log_probs).numel();
    let flat = g.reshape(log_probs, vec![flat_len, 1])?;
    let flat_idx: Vec<usize> = rows.iter().zip(&cols).map(|(r, c)| r * vocab + c).collect();
    let lp = g.gather_rows(flat, &flat_idx)?;
    let p = g.exp(lp);
    let neg_p = g.neg(p);
    let one = g.constant(1.0);
    let one_minus = g.add(one, neg_p)?;
    let log_one_minus = g.log(one_minus);
    let ul_coeffs: Vec<f64> = rows.iter().map(|&r| -alpha * coeffs[r]).collect();
    let ul = g.dot_const(log_one_minus, &ul_coeffs)?;
    let value = g.add(nll, ul)?;

    for ((&r, _), v) in rows.iter().zip(&cols).zip(g.value(log_one_minus).values()) {
        losses[r] -= alpha * v;
    }
    let weights = vec![1.0; targets.len()];
    Ok(Loss {
        value,
        breakdown: breakdown(targets, &losses, &weights),
    })
}

/// `1 − Σ_y p̂(y)·min(1, p_θ(y)/p̂(y))` evaluated over the whole vocabulary,
/// where `p̂ = γ·e^(w) + (1−γ)·p_θ`.
pub fn proxy_tvd_estimate(model_dist: &CategoricalDist, w: usize, gamma: f64) -> Result<f64> {
    let proxy = MixtureProxy::new(gamma, w, model_dist.clone())?;
    let mut acc = 0.0;
    for (y, &pm) in model_dist.probs().iter().enumerate() {
        let ph = proxy.prob(y);
        if ph > 0.0 {
            acc += ph * (pm / ph).min(1.0);
        }
    }
    Ok(1.0 - acc)
}

/// Streaming state for loss truncation: a sequence is dropped when its NLL
/// exceeds the `(1−c)`-quantile of a bounded window of recent NLLs.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationState {
    fraction: f64,
    hotstart_steps: usize,
    window: VecDeque<f64>,
    capacity: usize,
    seen: usize,
    quantile_estimate: f64,
}

impl TruncationState {
    pub const DEFAULT_WINDOW: usize = 1024;

    pub fn new(fraction: f64, hotstart_steps: usize) -> Result<Self> {
        Self::with_window(fraction, hotstart_steps, Self::DEFAULT_WINDOW)
    }

    pub fn with_window(fraction: f64, hotstart_steps: usize, capacity: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::OutOfRange {
                name: "fraction",
                value: fraction,
                range: "[0, 1)",
            });
        }
        if capacity == 0 {
            return Err(Error::Empty("truncation window"));
        }
        Ok(Self {
            fraction,
            hotstart_steps,
            window: VecDeque::with_capacity(capacity),
            capacity,
            seen: 0,
            quantile_estimate: f64::INFINITY,
        })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn quantile_estimate(&self) -> f64 {
        self.quantile_estimate
    }

    pub fn in_hotstart(&self) -> bool {
        self.seen < self.hotstart_steps
    }

    /// Records one sequence NLL and returns `true` to keep it.
    pub fn step(&mut self, sequence_nll: f64) -> bool {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(sequence_nll);
        let hot = self.in_hotstart();
        self.seen += 1;
        if self.fraction == 0.0 {
            self.quantile_estimate = f64::INFINITY;
            return true;
        }
        let mut sorted: Vec<f64> = self.window.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        // lower (1−c)-quantile of the window
        let idx = ((1.0 - self.fraction) * (sorted.len() - 1) as f64).floor() as usize;
        self.quantile_estimate = sorted[idx];
        hot || sequence_nll <= self.quantile_estimate
    }
}

/// Training objective selector, serialized in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Mle,
    Tailr(TailrConfig),
    Unlikelihood { alpha: f64 },
    LossTruncation { fraction: f64, hotstart_steps: usize },
    Gold { weight_lower_bound: f64 },
}

impl Objective {
    pub fn tag(&self) -> &'static str {
        match self {
            Objective::Mle => "mle",
            Objective::Tailr(_) => "tailr",
            Objective::Unlikelihood { .. } => "unlikelihood",
            Objective::LossTruncation { .. } => "loss_truncation",
            Objective::Gold { .. } => "gold",
        }
    }

    /// Token-level loss. Loss truncation is applied by the caller through the
    /// target mask, so here it scores like NLL.
    pub fn loss(&self, g: &mut Graph, log_probs: Var, targets: &Targets) -> Result<Loss> {
        match *self {
            Objective::Mle | Objective::LossTruncation { .. } => nll_loss(g, log_probs, targets),
            Objective::Tailr(cfg) => tailr_loss(g, log_probs, targets, cfg),
            Objective::Unlikelihood { alpha } => unlikelihood_loss(g, log_probs, targets, alpha),
            Objective::Gold { weight_lower_bound } => {
                gold_loss(g, log_probs, targets, weight_lower_bound)
            }
        }
    }
}

/// Per-sequence NLL sums from a row-wise log-probability block.
pub fn sequence_nlls(log_probs: &[f64], vocab: usize, targets: &Targets, n_seqs: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_seqs];
    for i in 0..targets.len() {
        if targets.mask[i] {
            out[targets.seq_index[i]] -= log_probs[i * vocab + targets.ids[i]];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn block(g: &mut Graph, rows: &[Vec<f64>]) -> (Var, Var) {
        let v = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let logits = g.leaf(Tensor::matrix(rows.len(), v, flat).unwrap());
        let lp = g.log_softmax(logits).unwrap();
        (logits, lp)
    }

    /// Logits giving `p(target) = p` over V=2.
    fn logits_for(p: f64) -> Vec<f64> {
        vec![(p / (1.0 - p)).ln(), 0.0]
    }

    #[test]
    fn nll_examples() {
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &[vec![0.0; 4], vec![0.0; 4]]);
        let l = nll_loss(&mut g, lp, &Targets::single(&[1, 3])).unwrap();
        for v in &l.breakdown.per_position_loss {
            assert!((v - 4f64.ln()).abs() < 1e-15);
        }
        assert!(l.breakdown.per_position_weight.iter().all(|w| *w == 1.0));

        let mut g = Graph::new();
        let lp = g.leaf(Tensor::matrix(1, 3, vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]).unwrap());
        let l = nll_loss(&mut g, lp, &Targets::single(&[1])).unwrap();
        assert_eq!(l.breakdown.total, 0.0);

        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &[vec![0.0; 4]]);
        assert!(matches!(
            nll_loss(&mut g, lp, &Targets::single(&[4])),
            Err(Error::TokenOutOfRange { id: 4, vocab: 4 })
        ));
    }

    #[test]
    fn masked_rows_are_excluded() {
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &[vec![0.0, 1.0], vec![3.0, -1.0], vec![0.5, 0.5]]);
        let a: &[usize] = &[0, 1];
        let b: &[usize] = &[1];
        let t = Targets::time_major(&[a, b]);
        // rows: (t0,s0) (t0,s1) (t1,s0) (t1,s1 masked) -> need 4 rows
        assert_eq!(t.len(), 4);
        assert_eq!(t.mask, vec![true, true, true, false]);
        let l = nll_loss(&mut g, lp, &t);
        assert!(l.is_err(), "row count mismatch must be rejected");
    }

    #[test]
    fn tailr_weight_examples() {
        let cases = [
            (1.0, 0.0, 0.5, 0.5),
            (0.1, 0.0, 0.5, 0.5 / 0.55),
            (1.0, 0.2, 0.05, 0.2),
        ];
        for (gamma, floor, p, expected) in cases {
            let cfg = TailrConfig::new(gamma, floor).unwrap();
            assert!((cfg.weight(p) - expected).abs() < 1e-12);
            let mut g = Graph::new();
            let (_, lp) = block(&mut g, &[logits_for(p)]);
            let l = tailr_loss(&mut g, lp, &Targets::single(&[0]), cfg).unwrap();
            assert!((l.breakdown.per_position_weight[0] - expected).abs() < 1e-12);
            let loss = -expected * p.ln();
            assert!((l.breakdown.per_position_loss[0] - loss).abs() < 1e-12);
        }
        // γ=1, p=0.5 gives 0.5·log 2
        let cfg = TailrConfig::new(1.0, 0.0).unwrap();
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &[logits_for(0.5)]);
        let l = tailr_loss(&mut g, lp, &Targets::single(&[0]), cfg).unwrap();
        assert!((l.breakdown.total - 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tailr_config_validation() {
        assert!(TailrConfig::new(1.1, 0.0).is_err());
        assert!(TailrConfig::new(0.5, 1.0).is_err());
        assert!(TailrConfig::new(0.5, -0.1).is_err());
        assert!(TailrConfig::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn tiny_gamma_matches_nll() {
        let rows = vec![vec![0.3, -1.0, 2.0], vec![-0.5, 0.1, 0.2]];
        let t = Targets::single(&[1, 2]);
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &rows);
        let a = nll_loss(&mut g, lp, &t).unwrap();
        let b = tailr_loss(&mut g, lp, &t, TailrConfig::new(1e-12, 0.0).unwrap()).unwrap();
        for (x, y) in a.breakdown.per_position_loss.iter().zip(&b.breakdown.per_position_loss) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn tailr_gradient_has_proxy_tvd_form() {
        // d/dθ of −w·log p with w detached equals −(dp/dθ)/(γ + (1−γ)p).
        let rows = vec![vec![0.4, -0.7, 1.1, 0.0]];
        let target = 2;
        for gamma in [0.05, 0.3, 1.0] {
            let cfg = TailrConfig::new(gamma, 0.0).unwrap();
            let mut g = Graph::new();
            let (logits, lp) = block(&mut g, &rows);
            let l = tailr_loss(&mut g, lp, &Targets::single(&[target]), cfg).unwrap();
            let grad = g.backward(l.value).unwrap().tensor(logits);
            let p_all = CategoricalDist::from_logits(&rows[0]).unwrap();
            let p = p_all.prob(target);
            for (j, gj) in grad.values().iter().enumerate() {
                let dp = p * (if j == target { 1.0 } else { 0.0 } - p_all.prob(j));
                let expected = -dp / (gamma + (1.0 - gamma) * p);
                assert!((gj - expected).abs() < 1e-12, "{gj} vs {expected}");
            }
        }
    }

    #[test]
    fn proxy_tvd_examples() {
        let m = CategoricalDist::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert!(proxy_tvd_estimate(&m, 1, 0.0).unwrap().abs() < 1e-15);
        assert!((proxy_tvd_estimate(&m, 1, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((proxy_tvd_estimate(&m, 0, 1.0).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unlikelihood_examples() {
        let rows = vec![vec![0.2, 0.1, -0.3], vec![0.0, 0.5, 0.1], vec![1.0, -1.0, 0.3]];
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &rows);
        let t = Targets::single(&[0, 1, 0]);
        let nll = nll_loss(&mut g, lp, &t).unwrap();
        let ul0 = unlikelihood_loss(&mut g, lp, &t, 0.0).unwrap();
        assert_eq!(nll.breakdown.total, ul0.breakdown.total);

        let single = Targets::single(&[2]);
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &rows[..1]);
        let a = nll_loss(&mut g, lp, &single).unwrap();
        let b = unlikelihood_loss(&mut g, lp, &single, 0.7).unwrap();
        assert_eq!(a.breakdown.total, b.breakdown.total);

        // candidates: step0 {}, step1 {0}, step2 {1}
        assert_eq!(t.prefix_candidates(), vec![vec![], vec![0], vec![1]]);
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &rows);
        let ul = unlikelihood_loss(&mut g, lp, &t, 0.5).unwrap();
        let p1 = CategoricalDist::from_logits(&rows[1]).unwrap();
        let p2 = CategoricalDist::from_logits(&rows[2]).unwrap();
        let extra = 0.5 * (-(1.0 - p1.prob(0)).ln() - (1.0 - p2.prob(1)).ln()) / 3.0;
        assert!((ul.breakdown.total - nll.breakdown.total - extra).abs() < 1e-12);
        assert!((g.value(ul.value).item() - ul.breakdown.total).abs() < 1e-12);
    }

    #[test]
    fn gold_examples() {
        let cfg_rows = vec![logits_for(0.05)];
        let mut g = Graph::new();
        let (_, lp) = block(&mut g, &cfg_rows);
        let t = Targets::single(&[0]);
        let l = gold_loss(&mut g, lp, &t, 0.2).unwrap();
        assert!((l.breakdown.per_position_weight[0] - 0.2).abs() < 1e-15);
        let one = gold_loss(&mut g, lp, &t, 1.0).unwrap();
        let nll = nll_loss(&mut g, lp, &t).unwrap();
        assert!((one.breakdown.total - nll.breakdown.total).abs() < 1e-15);
        assert!(gold_loss(&mut g, lp, &t, 0.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let mut s = TruncationState::new(0.0, 0).unwrap();
        assert!((0..100).all(|i| s.step(i as f64)));

        let mut s = TruncationState::new(0.5, 3).unwrap();
        assert!(s.step(100.0) && s.step(100.0) && s.step(100.0));
        assert!(!s.in_hotstart());

        let mut s = TruncationState::with_window(0.5, 0, 64).unwrap();
        let mut late = Vec::new();
        for i in 0..400 {
            let nll = if i % 2 == 0 { 1.0 } else { 9.0 };
            let keep = s.step(nll);
            if i >= 200 {
                late.push((nll, keep));
            }
        }
        assert!(late.iter().all(|(nll, keep)| (*nll == 1.0) == *keep));
        assert_eq!(s.quantile_estimate(), 1.0);
        assert!(TruncationState::new(1.0, 0).is_err());
    }

    #[test]
    fn sequence_nll_sums() {
        let a: &[usize] = &[1, 0];
        let b: &[usize] = &[0];
        let t = Targets::time_major(&[a, b]);
        let lp = vec![-1.0, -2.0, -3.0, -4.0, -5.0, -6.0, -7.0, -8.0];
        let s = sequence_nlls(&lp, 2, &t, 2);
        assert_eq!(s, vec![2.0 + 5.0, 3.0]);
    }
}
