//! Perturbation traces and excess accumulated error for an MLE learner,
//! with the oracle itself as a zero-error reference.

use tailr::error::Result;
use tailr::objectives::Objective;
use tailr::synth::{
    error_map, learner_exacc_at, learner_slope, learner_traces, make_datasets, prepare, train_learner, DatasetSizes,
    ExperimentConfig, DEFAULT_BUCKETS,
};

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig {
        sizes: DatasetSizes {
            train: 1000,
            dev: 200,
            test: 200,
        },
        perturb_origins: 100,
        perturb_steps: 10,
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 3;
    cfg.exacc.samples = 200;
    let oracle = prepare(&cfg)?;
    let data = make_datasets(&cfg, &oracle, 0)?;
    let learner = train_learner(&cfg, &data, Objective::Mle, 0)?.model;

    for (name, model) in [("oracle", &oracle.model), ("mle", &learner)] {
        let traces = learner_traces(&cfg, &oracle, &data, model, 0)?;
        println!("{name}: overestimation slope {:+.4}", learner_slope(&traces)?);
        for c in error_map(&traces, DEFAULT_BUCKETS)?.iter().filter(|c| c.step % 5 == 0) {
            println!(
                "  log p_o in [{:7.2}, {:7.2}] step {:2}: mean error {:+.3} over {}",
                c.log_p_o_lo, c.log_p_o_hi, c.step, c.mean_error, c.count
            );
        }
        for l in [5, 10] {
            let r = learner_exacc_at(&cfg, &oracle, model, 0, l)?;
            println!("  l={l:<2} ExAccErr {:+.2}%  regret {:.4}  epsilon {:.4}", r.percent, r.regret, r.epsilon);
        }
    }
    Ok(())
}
