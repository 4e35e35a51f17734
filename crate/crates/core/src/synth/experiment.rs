//! One full synthetic run: oracle, data, a learner per objective, and the
//! evaluation numbers that compare them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bleu_n, distinct_n, self_bleu_n, SELF_BLEU_CAP};
use crate::objectives::Objective;
use crate::seqmodel::{train, ModelConfig, OptimizerConfig, SequenceModel, TokenSequence, TrainOutcome, TrainRun};

use super::data::{sample_terminated, split_seed, synthesize, Datasets};
use super::exacc::{exacc_err, ExAccConfig, ExAccReport};
use super::oracle::{build_oracle, Oracle, OracleSpec};
use super::perturb::{build_traces, overestimation_slope, PerturbKind, PerturbationTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for DatasetSizes {
    fn default() -> Self {
        Self {
            train: 5000,
            dev: 1000,
            test: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub oracle: OracleSpec,
    pub sizes: DatasetSizes,
    pub max_len: usize,
    pub learner: ModelConfig,
    /// Shared training knobs; the objective field is replaced per learner.
    pub train: TrainRun,
    /// Samples drawn from each learner for PPL_oracle, BLEU and SelfBLEU.
    pub eval_samples: usize,
    /// Test-set origins used for perturbation traces.
    pub perturb_origins: usize,
    pub perturb_steps: usize,
    pub exacc: ExAccConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            oracle: OracleSpec::default(),
            sizes: DatasetSizes::default(),
            max_len: 20,
            learner: ModelConfig {
                vocab_size: 50,
                embed_dim: 32,
                hidden_dim: 64,
            },
            train: TrainRun {
                epochs: 8,
                optimizer: OptimizerConfig {
                    lr: 3e-3,
                    ..OptimizerConfig::default()
                },
                ..TrainRun::default()
            },
            eval_samples: 2000,
            perturb_origins: 500,
            perturb_steps: 30,
            exacc: ExAccConfig::default(),
        }
    }
}

/// Stream tags so every stage of a run draws from its own sub-seed.
mod stream {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const PERTURB: u64 = 5;
    pub const EXACC: u64 = 6;
    pub const SELF_BLEU: u64 = 7;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerMetrics {
    pub objective: String,
    pub ppl_oracle: f64,
    pub ppl_test: f64,
    pub bleu4: f64,
    pub self_bleu4: f64,
    pub distinct4: f64,
    /// Mean sample length, EOS included.
    pub mean_length: f64,
}

#[derive(Clone, Debug)]
pub struct LearnerRun {
    pub objective: Objective,
    pub outcome: TrainOutcome,
    pub metrics: LearnerMetrics,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learner.vocab_size != self.oracle.model.vocab_size {
            return Err(Error::VocabMismatch(self.learner.vocab_size, self.oracle.model.vocab_size));
        }
        if self.eval_samples < 2 {
            return Err(Error::Config("eval_samples must be at least 2".into()));
        }
        if self.exacc.context_len == 0 || self.exacc.samples == 0 {
            return Err(Error::Config("exacc needs context_len ≥ 1 and samples ≥ 1".into()));
        }
        Ok(())
    }
}

/// Validates the config and builds its oracle.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Oracle> {
    cfg.validate()?;
    build_oracle(&cfg.oracle)
}

pub fn make_datasets(cfg: &ExperimentConfig, oracle: &Oracle, seed: u64) -> Result<Datasets> {
    let s = cfg.sizes;
    synthesize(
        &oracle.model,
        &oracle.hash,
        (s.train, s.dev, s.test),
        cfg.max_len,
        split_seed(seed, stream::DATA),
    )
}

/// Trains one learner from the seed-shared initialization.
pub fn train_learner(cfg: &ExperimentConfig, data: &Datasets, objective: Objective, seed: u64) -> Result<TrainOutcome> {
    let init = SequenceModel::init(cfg.learner, split_seed(seed, stream::INIT))?;
    let run = TrainRun {
        objective,
        seed: split_seed(seed, stream::SHUFFLE),
        ..cfg.train.clone()
    };
    train(&init, &data.train, &data.dev, &run)
}

/// PPL of the oracle on learner samples, learner PPL on test, BLEU-4 of the
/// samples against test, and the diversity of the samples.
pub fn evaluate(
    cfg: &ExperimentConfig,
    oracle: &Oracle,
    data: &Datasets,
    model: &SequenceModel,
    tag: &str,
    seed: u64,
) -> Result<LearnerMetrics> {
    let samples = learner_samples(cfg, model, seed);
    let bodies: Vec<&[usize]> = samples.iter().map(TokenSequence::body).collect();
    let refs: Vec<&[usize]> = data.test.iter().map(TokenSequence::body).collect();
    Ok(LearnerMetrics {
        objective: tag.to_string(),
        ppl_oracle: oracle.model.perplexity(&samples)?,
        ppl_test: model.perplexity(&data.test)?,
        bleu4: bleu_n(&bodies, &refs, 4)?,
        self_bleu4: self_bleu_n(&bodies, 4, SELF_BLEU_CAP, split_seed(seed, stream::SELF_BLEU))?,
        // no 4-grams at all counts as no diversity
        distinct4: distinct_n(&bodies, 4).unwrap_or(0.0),
        mean_length: samples.iter().map(TokenSequence::len).sum::<usize>() as f64 / samples.len() as f64,
    })
}

/// Terminated samples used for every sample-based metric.
pub fn learner_samples(cfg: &ExperimentConfig, model: &SequenceModel, seed: u64) -> Vec<TokenSequence> {
    sample_terminated(model, cfg.eval_samples, cfg.max_len, split_seed(seed, stream::EVAL)).0
}

pub fn run_learner(
    cfg: &ExperimentConfig,
    oracle: &Oracle,
    data: &Datasets,
    objective: Objective,
    seed: u64,
) -> Result<LearnerRun> {
    let outcome = train_learner(cfg, data, objective, seed)?;
    let metrics = evaluate(cfg, oracle, data, &outcome.model, objective.tag(), seed)?;
    Ok(LearnerRun {
        objective,
        outcome,
        metrics,
    })
}

/// Perturbation traces over the first `perturb_origins` test sequences.
pub fn learner_traces(
    cfg: &ExperimentConfig,
    oracle: &Oracle,
    data: &Datasets,
    model: &SequenceModel,
    seed: u64,
) -> Result<Vec<PerturbationTrace>> {
    let n = cfg.perturb_origins.min(data.test.len());
    build_traces(
        &data.test[..n],
        model,
        &oracle.model,
        cfg.perturb_steps,
        &PerturbKind::ALL,
        split_seed(seed, stream::PERTURB),
    )
}

pub fn learner_slope(traces: &[PerturbationTrace]) -> Result<f64> {
    overestimation_slope(traces).ok_or(Error::Empty("overestimation slope needs two origin lengths"))
}

pub fn learner_exacc(cfg: &ExperimentConfig, oracle: &Oracle, model: &SequenceModel, seed: u64) -> Result<f64> {
    Ok(learner_exacc_at(cfg, oracle, model, seed, cfg.exacc.context_len)?.percent)
}

/// ExAccErr at context length `l`, with the prefix streams of `seed`.
pub fn learner_exacc_at(
    cfg: &ExperimentConfig,
    oracle: &Oracle,
    model: &SequenceModel,
    seed: u64,
    l: usize,
) -> Result<ExAccReport> {
    let ex = ExAccConfig {
        seed: split_seed(seed, stream::EXACC),
        context_len: l,
        ..cfg.exacc
    };
    exacc_err(model, &oracle.model, &ex)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let model = ModelConfig {
            vocab_size: 8,
            embed_dim: 4,
            hidden_dim: 6,
        };
        ExperimentConfig {
            oracle: OracleSpec {
                model,
                mean_length: 5.0,
                ..OracleSpec::default()
            },
            sizes: DatasetSizes {
                train: 60,
                dev: 20,
                test: 20,
            },
            max_len: 10,
            learner: model,
            train: TrainRun {
                epochs: 1,
                batch_size: 16,
                ..TrainRun::default()
            },
            eval_samples: 20,
            perturb_origins: 10,
            perturb_steps: 3,
            exacc: ExAccConfig {
                context_len: 4,
                samples: 20,
                ..ExAccConfig::default()
            },
        }
    }

    #[test]
    fn learner_run_is_deterministic() {
        let cfg = tiny();
        let o = prepare(&cfg).unwrap();
        let d = make_datasets(&cfg, &o, 3).unwrap();
        let a = run_learner(&cfg, &o, &d, Objective::Mle, 3).unwrap();
        let b = run_learner(&cfg, &o, &d, Objective::Mle, 3).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert!(a.metrics.ppl_oracle.is_finite() && a.metrics.ppl_test > 1.0);
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let mut cfg = tiny();
        cfg.learner.vocab_size = 9;
        assert!(prepare(&cfg).is_err());
    }
}
