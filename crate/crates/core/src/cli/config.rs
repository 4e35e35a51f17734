//! The serialized run configuration behind every subcommand.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objectives::{Objective, TailrConfig};
use crate::synth::{DescentSpec, ExperimentConfig, GaussianMixture, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    PplOracle,
    PplTest,
    Bleu4,
    SelfBleu4,
    Distinct4,
    MeanLength,
}

impl Metric {
    pub fn column(self) -> &'static str {
        match self {
            Metric::PplOracle => "ppl_oracle",
            Metric::PplTest => "ppl_test",
            Metric::Bleu4 => "bleu4",
            Metric::SelfBleu4 => "self_bleu4",
            Metric::Distinct4 => "distinct4",
            Metric::MeanLength => "mean_length",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub mixture: GaussianMixture,
    pub grid: GridSpec,
    pub descent: DescentSpec,
    /// Every `curve_stride`-th grid point goes into the curve table.
    pub curve_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    pub weight_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub experiment: ExperimentConfig,
    /// Trained learners, in output order.
    pub objectives: Vec<Objective>,
    /// Also score the oracle itself, as the first row of every table.
    pub score_oracle: bool,
    pub metrics: Vec<Metric>,
    pub verify: VerifyConfig,
    pub toy: ToyConfig,
    pub exacc_lengths: Vec<usize>,
    pub sweep: SweepConfig,
    pub plots: bool,
}

/// Tuned TaiLr setting used by default.
pub const DEFAULT_TAILR: TailrConfig = TailrConfig {
    gamma: 1e-3,
    weight_floor: 0.1,
};

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            experiment: ExperimentConfig::default(),
            objectives: vec![Objective::Mle, Objective::Tailr(DEFAULT_TAILR)],
            score_oracle: false,
            metrics: vec![Metric::PplOracle, Metric::PplTest, Metric::Bleu4, Metric::SelfBleu4],
            verify: VerifyConfig { trials: 1000 },
            toy: ToyConfig {
                mixture: GaussianMixture::default(),
                grid: GridSpec::default(),
                descent: DescentSpec::default(),
                curve_stride: 10,
            },
            exacc_lengths: vec![5, 10, 15],
            sweep: SweepConfig {
                gammas: (-8..=-1).map(|k| 10f64.powi(k)).chain([1.0]).collect(),
                weight_floor: DEFAULT_TAILR.weight_floor,
            },
            plots: true,
        }
    }
}

/// Default parameters for an objective named only by its tag.
pub fn default_objective(tag: &str) -> Option<Objective> {
    Some(match tag {
        "mle" => Objective::Mle,
        "tailr" => Objective::Tailr(DEFAULT_TAILR),
        "gold" => Objective::Gold { weight_lower_bound: 0.1 },
        "unlikelihood" => Objective::Unlikelihood { alpha: 1.0 },
        "loss_truncation" => Objective::LossTruncation {
            fraction: 0.1,
            hotstart_steps: 100,
        },
        _ => return None,
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        for o in &self.objectives {
            if let Objective::Tailr(t) = o {
                t.validate()?;
            }
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("metric list is empty".into()));
        }
        if self.verify.trials == 0 {
            return Err(Error::Config("verify.trials must be positive".into()));
        }
        if self.toy.curve_stride == 0 {
            return Err(Error::Config("toy.curve_stride must be positive".into()));
        }
        self.toy.mixture.validate()?;
        if self.exacc_lengths.contains(&0) {
            return Err(Error::Config("exacc lengths must be at least 1".into()));
        }
        if self.sweep.gammas.is_empty() {
            return Err(Error::Config("sweep.gammas is empty".into()));
        }
        for &g in &self.sweep.gammas {
            TailrConfig::new(g, self.sweep.weight_floor)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.sweep.gammas.len(), 9);
    }

    #[test]
    fn every_tag_has_a_default() {
        for tag in ["mle", "tailr", "gold", "unlikelihood", "loss_truncation"] {
            assert_eq!(default_objective(tag).unwrap().tag(), tag);
        }
        assert!(default_objective("oracle").is_none());
    }
}
