//! Excess accumulated error: per-step KL to the oracle on model-sampled
//! prefixes, relative to the same quantity on oracle-sampled prefixes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqmodel::{draw_from_log_probs, sub_rng, SequenceModel, EOS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExAccConfig {
    /// Context length `l`.
    pub context_len: usize,
    /// Sampled prefixes per estimate.
    pub samples: usize,
    /// Replace the exact inner KL by importance-weighted draws from `p_θ`.
    pub importance_sampling: bool,
    /// Draws per prefix step when importance sampling.
    pub is_draws: usize,
    /// Below this `ε`, the excess is reported as 0.
    pub zero_tolerance: f64,
    pub seed: u64,
}

impl Default for ExAccConfig {
    fn default() -> Self {
        Self {
            context_len: 15,
            samples: 2000,
            importance_sampling: false,
            is_draws: 16,
            zero_tolerance: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExAccReport {
    pub context_len: usize,
    /// `R_{≤l}`: summed per-step error on model-sampled prefixes.
    pub regret: f64,
    /// `ε_{≤l}`: mean per-step error on oracle-sampled prefixes.
    pub epsilon: f64,
    pub percent: f64,
}

fn kl_row(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&lp, &lq)| {
            let w = lp.exp();
            if w > 0.0 {
                w * (lp - lq)
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// `Σ_{t≤l} E[KL(p_o(·|y_<t) ‖ p_θ(·|y_<t))]` with prefixes drawn from the
/// `generator` (θ when `from_model`, the oracle otherwise). A prefix that
/// already emitted EOS contributes nothing further.
fn accumulated_error(model: &SequenceModel, oracle: &SequenceModel, cfg: &ExAccConfig, from_model: bool) -> f64 {
    mean(&per_sample_error(model, oracle, cfg, from_model))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn per_sample_error(model: &SequenceModel, oracle: &SequenceModel, cfg: &ExAccConfig, from_model: bool) -> Vec<f64> {
    let v = oracle.vocab_size();
    let l = cfg.context_len;
    let stream_seed = cfg.seed ^ if from_model { 0x5EED_0001 } else { 0x5EED_0002 };
    let mut per_sample = vec![0.0; cfg.samples];
    let mut start = 0;
    while start < cfg.samples {
        let b = (cfg.samples - start).min(256);
        let mut rngs: Vec<_> = (start..start + b).map(|i| sub_rng(stream_seed, i as u64)).collect();
        // separate streams keep the prefixes identical across both modes
        let mut is_rngs: Vec<_> = (start..start + b).map(|i| sub_rng(!stream_seed, i as u64)).collect();
        let mut st_m = model.begin(b);
        let mut st_o = oracle.begin(b);
        let mut alive = vec![true; b];
        for t in 0..l {
            let lp_m = model.next_log_probs(&st_m);
            let lp_o = oracle.next_log_probs(&st_o);
            let mut inputs = vec![oracle.config().pad(); b];
            for i in 0..b {
                if !alive[i] {
                    continue;
                }
                let (rm, ro) = (&lp_m[i * v..(i + 1) * v], &lp_o[i * v..(i + 1) * v]);
                per_sample[start + i] += if cfg.importance_sampling {
                    // y ~ p_θ, weight p_o/p_θ
                    let k = cfg.is_draws.max(1);
                    (0..k)
                        .map(|_| {
                            let y = draw_from_log_probs(rm, &mut is_rngs[i]);
                            (ro[y] - rm[y]).exp() * (ro[y] - rm[y])
                        })
                        .sum::<f64>()
                        / k as f64
                } else {
                    kl_row(ro, rm)
                };
                if t + 1 < l {
                    let gen = if from_model { rm } else { ro };
                    let y = draw_from_log_probs(gen, &mut rngs[i]);
                    if y == EOS {
                        alive[i] = false;
                    } else {
                        inputs[i] = y;
                    }
                }
            }
            if t + 1 < l {
                model.feed(&mut st_m, &inputs);
                oracle.feed(&mut st_o, &inputs);
            }
        }
        start += b;
    }
    per_sample
}

/// `(R_{≤l} − l·ε_{≤l}) / (l·ε_{≤l}) · 100`.
pub fn exacc_err(model: &SequenceModel, oracle: &SequenceModel, cfg: &ExAccConfig) -> Result<ExAccReport> {
    if model.vocab_size() != oracle.vocab_size() {
        return Err(Error::VocabMismatch(model.vocab_size(), oracle.vocab_size()));
    }
    if cfg.context_len == 0 || cfg.samples == 0 {
        return Err(Error::Config("ExAccErr needs l ≥ 1 and at least one sample".into()));
    }
    let regret = accumulated_error(model, oracle, cfg, true);
    let total_eps = accumulated_error(model, oracle, cfg, false);
    let l = cfg.context_len as f64;
    let epsilon = total_eps / l;
    let percent = if epsilon.abs() < cfg.zero_tolerance {
        0.0
    } else {
        (regret - l * epsilon) / (l * epsilon) * 100.0
    };
    Ok(ExAccReport {
        context_len: cfg.context_len,
        regret,
        epsilon,
        percent,
    })
}
