//! Mini-batch training with Adam or SGD and global-norm clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SequenceModel, TokenSequence};
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::objectives::{sequence_nlls, Objective, Targets, TruncationState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            clip: None,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub objective: Objective,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            objective: Objective::Mle,
            optimizer: OptimizerConfig::default(),
            epochs: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub loss: f64,
    pub grad_norm: f64,
    pub mean_weight: f64,
    pub kept: usize,
    pub dropped: usize,
    /// `false` when every sequence in the batch was truncated away.
    pub updated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub mean_weight: f64,
    pub dev_ppl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest dev perplexity.
    pub model: SequenceModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Optimizer state bound to one model's parameter layout.
pub struct Trainer {
    objective: Objective,
    opt: OptimizerConfig,
    truncation: Option<TruncationState>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    epoch: usize,
    batch_index: usize,
}

impl Trainer {
    pub fn new(model: &SequenceModel, objective: Objective, opt: OptimizerConfig) -> Result<Self> {
        if !(opt.lr > 0.0) || !opt.lr.is_finite() {
            return Err(Error::OutOfRange {
                name: "lr",
                value: opt.lr,
                range: "(0, ∞)",
            });
        }
        let truncation = match objective {
            Objective::LossTruncation {
                fraction,
                hotstart_steps,
            } => Some(TruncationState::new(fraction, hotstart_steps)?),
            _ => None,
        };
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
        Ok(Self {
            objective,
            opt,
            truncation,
            m: zeros.clone(),
            v: zeros,
            t: 0,
            epoch: 0,
            batch_index: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One forward/backward/update on a batch.
    pub fn step(&mut self, model: &mut SequenceModel, batch: &[&TokenSequence]) -> Result<StepReport> {
        let v = model.vocab_size();
        for s in batch {
            s.validate(v)?;
        }
        let mut g = Graph::new();
        let leaves = model.leaves(&mut g);
        let lp = model.forward_graph(&mut g, &leaves, batch)?;
        let token_rows: Vec<&[usize]> = batch.iter().map(|s| s.tokens.as_slice()).collect();
        let mut targets = Targets::time_major(&token_rows);

        let mut dropped = Vec::new();
        if let Some(state) = self.truncation.as_mut() {
            let nlls = sequence_nlls(g.value(lp).values(), v, &targets, batch.len());
            for (i, nll) in nlls.iter().enumerate() {
                if !state.step(*nll) {
                    dropped.push(i);
                }
            }
            targets.drop_sequences(&dropped);
        }
        let kept = batch.len() - dropped.len();
        self.batch_index += 1;
        if kept == 0 {
            return Ok(StepReport {
                loss: f64::NAN,
                grad_norm: 0.0,
                mean_weight: 0.0,
                kept,
                dropped: dropped.len(),
                updated: false,
            });
        }

        let loss = self.objective.loss(&mut g, lp, &targets)?;
        let value = g.value(loss.value).item();
        let weights = &loss.breakdown.per_position_weight;
        let mean_weight = weights.iter().sum::<f64>() / weights.len() as f64;
        if !value.is_finite() {
            return Err(self.diverged(format!(
                "loss = {value}, mean weight = {mean_weight}, max token loss = {}",
                loss.breakdown
                    .per_position_loss
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            )));
        }
        let grads = g.backward(loss.value)?;
        let mut flat: Vec<Vec<f64>> = leaves
            .iter()
            .map(|&l| grads.get(l).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(l).numel()]))
            .collect();
        let grad_norm = flat.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(self.diverged(format!("gradient norm = {grad_norm}, loss = {value}")));
        }
        if let Some(c) = self.opt.clip {
            if grad_norm > c {
                let s = c / grad_norm;
                flat.iter_mut().flatten().for_each(|x| *x *= s);
            }
        }
        self.apply(model, &flat);
        Ok(StepReport {
            loss: value,
            grad_norm,
            mean_weight,
            kept,
            dropped: dropped.len(),
            updated: true,
        })
    }

    fn diverged(&self, detail: String) -> Error {
        Error::Diverged {
            epoch: self.epoch,
            step: self.t as usize,
            batch: self.batch_index,
            detail,
        }
    }

    fn apply(&mut self, model: &mut SequenceModel, grads: &[Vec<f64>]) {
        self.t += 1;
        let o = self.opt;
        match o.kind {
            OptimizerKind::Sgd => {
                for (p, g) in model.params_mut().iter_mut().zip(grads) {
                    for (w, d) in p.values_mut().iter_mut().zip(g) {
                        *w -= o.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - o.beta1.powi(self.t as i32);
                let bc2 = 1.0 - o.beta2.powi(self.t as i32);
                for (k, (p, g)) in model.params_mut().iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, (w, d)) in p.values_mut().iter_mut().zip(g).enumerate() {
                        m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * d;
                        v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * d * d;
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        *w -= o.lr * mh / (vh.sqrt() + o.eps);
                    }
                }
            }
        }
    }
}

/// Trains for `run.epochs` epochs and returns the best-dev-perplexity
/// parameters. Zero epochs returns the input model unchanged.
pub fn train(
    model: &SequenceModel,
    train_set: &[TokenSequence],
    dev_set: &[TokenSequence],
    run: &TrainRun,
) -> Result<TrainOutcome> {
    if run.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut current = model.clone();
    if run.epochs == 0 {
        return Ok(TrainOutcome {
            model: current,
            best_epoch: 0,
            log: Vec::new(),
        });
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut trainer = Trainer::new(&current, run.objective, run.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, SequenceModel)> = None;
    let mut log = Vec::with_capacity(run.epochs);
    for epoch in 1..=run.epochs {
        trainer.epoch = epoch;
        trainer.batch_index = 0;
        order.shuffle(&mut rng);
        let (mut loss_sum, mut weight_sum, mut steps) = (0.0, 0.0, 0);
        for chunk in order.chunks(run.batch_size) {
            let batch: Vec<&TokenSequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let r = trainer.step(&mut current, &batch)?;
            if r.updated {
                loss_sum += r.loss;
                weight_sum += r.mean_weight;
                steps += 1;
            }
        }
        let dev_ppl = if dev_set.is_empty() {
            f64::NAN
        } else {
            current.perplexity(dev_set)?
        };
        let denom = steps.max(1) as f64;
        log.push(EpochLog {
            epoch,
            steps,
            train_loss: loss_sum / denom,
            mean_weight: weight_sum / denom,
            dev_ppl,
        });
        let better = match &best {
            None => true,
            Some((b, _, _)) => dev_ppl < *b,
        };
        if better || dev_set.is_empty() {
            best = Some((dev_ppl, epoch, current.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::TailrConfig;
    use crate::seqmodel::ModelConfig;

    fn tiny() -> SequenceModel {
        SequenceModel::init(
            ModelConfig {
                vocab_size: 6,
                embed_dim: 4,
                hidden_dim: 5,
            },
            1,
        )
        .unwrap()
    }

    fn data() -> Vec<TokenSequence> {
        vec![
            TokenSequence::from_body(&[1, 2, 3]),
            TokenSequence::from_body(&[2, 2]),
            TokenSequence::from_body(&[5, 4, 3, 2, 1]),
            TokenSequence::from_body(&[1]),
        ]
    }

    #[test]
    fn sgd_delta_is_minus_lr_grad() {
        let model = tiny();
        let d = data();
        let batch: Vec<&TokenSequence> = d.iter().collect();
        let mut g = Graph::new();
        let leaves = model.leaves(&mut g);
        let lp = model.forward_graph(&mut g, &leaves, &batch).unwrap();
        let rows: Vec<&[usize]> = d.iter().map(|s| s.tokens.as_slice()).collect();
        let loss = Objective::Mle.loss(&mut g, lp, &Targets::time_major(&rows)).unwrap();
        let grads = g.backward(loss.value).unwrap();

        let mut m2 = model.clone();
        let mut tr = Trainer::new(&m2, Objective::Mle, OptimizerConfig::sgd(0.1)).unwrap();
        tr.step(&mut m2, &batch).unwrap();
        for (k, l) in leaves.iter().enumerate() {
            let gr = grads.get(*l).unwrap();
            for (i, (a, b)) in model.params()[k].values().iter().zip(m2.params()[k].values()).enumerate() {
                assert!(((b - a) + 0.1 * gr[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let model = tiny();
        let d = data();
        let batch: Vec<&TokenSequence> = d.iter().collect();
        let opt = OptimizerConfig {
            clip: None,
            ..OptimizerConfig::default()
        };
        let mut m2 = model.clone();
        let mut tr = Trainer::new(&m2, Objective::Mle, opt).unwrap();
        tr.step(&mut m2, &batch).unwrap();
        // first Adam step is lr·g/(|g|+eps), i.e. about lr for non-tiny gradients
        let w_out = 11;
        let moved = model.params()[w_out]
            .values()
            .iter()
            .zip(m2.params()[w_out].values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!((moved - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let model = tiny();
        let run = TrainRun {
            epochs: 0,
            ..TrainRun::default()
        };
        let out = train(&model, &data(), &data(), &run).unwrap();
        assert_eq!(out.model, model);
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_reduces_perplexity_and_is_deterministic() {
        let model = tiny();
        let run = TrainRun {
            objective: Objective::Tailr(TailrConfig::new(0.5, 0.1).unwrap()),
            optimizer: OptimizerConfig {
                lr: 0.02,
                ..OptimizerConfig::default()
            },
            epochs: 20,
            batch_size: 2,
            seed: 7,
        };
        let before = model.perplexity(&data()).unwrap();
        let a = train(&model, &data(), &data(), &run).unwrap();
        let b = train(&model, &data(), &data(), &run).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.model.perplexity(&data()).unwrap() < before);
        let best = a.log.iter().map(|e| e.dev_ppl).fold(f64::INFINITY, f64::min);
        assert_eq!(a.log[a.best_epoch - 1].dev_ppl, best);
    }

    #[test]
    fn truncation_can_skip_updates() {
        let model = tiny();
        let mut m2 = model.clone();
        let obj = Objective::LossTruncation {
            fraction: 0.5,
            hotstart_steps: 0,
        };
        let mut tr = Trainer::new(&m2, obj, OptimizerConfig::default()).unwrap();
        let d = data();
        let r = tr.step(&mut m2, &d.iter().collect::<Vec<_>>()).unwrap();
        assert!(r.dropped > 0 && r.updated);
    }
}
