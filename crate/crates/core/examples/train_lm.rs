//! Trains a small GRU language model with MLE and with TaiLr on data sampled
//! from a random oracle, then compares perplexities.

use tailr::error::Result;
use tailr::objectives::{Objective, TailrConfig};
use tailr::seqmodel::{train, ModelConfig, OptimizerConfig, SequenceModel, TrainRun};
use tailr::synth::{build_oracle, synthesize, OracleSpec};

fn main() -> Result<()> {
    let model = ModelConfig {
        vocab_size: 20,
        embed_dim: 16,
        hidden_dim: 24,
    };
    let oracle = build_oracle(&OracleSpec {
        model,
        mean_length: 7.0,
        ..OracleSpec::default()
    })?;
    let data = synthesize(&oracle.model, &oracle.hash, (800, 200, 200), 15, 0)?;
    println!("oracle test PPL {:.3}", oracle.model.perplexity(&data.test)?);

    let init = SequenceModel::init(model, 1)?;
    for objective in [Objective::Mle, Objective::Tailr(TailrConfig::new(1e-3, 0.1)?)] {
        let run = TrainRun {
            objective,
            epochs: 4,
            optimizer: OptimizerConfig {
                lr: 5e-3,
                ..OptimizerConfig::default()
            },
            ..TrainRun::default()
        };
        let out = train(&init, &data.train, &data.dev, &run)?;
        for e in &out.log {
            println!(
                "{:<6} epoch {} loss {:.4} mean weight {:.3} dev PPL {:.3}",
                objective.tag(),
                e.epoch,
                e.train_loss,
                e.mean_weight,
                e.dev_ppl
            );
        }
        println!("{:<6} test PPL {:.3}", objective.tag(), out.model.perplexity(&data.test)?);
    }
    Ok(())
}
