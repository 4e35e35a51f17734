//! A scaled-down synthetic run: oracle, datasets, one learner per objective,
//! and the sample-based metrics for each.

use tailr::error::Result;
use tailr::objectives::Objective;
use tailr::synth::{make_datasets, prepare, run_learner, DatasetSizes, ExperimentConfig};

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig {
        sizes: DatasetSizes {
            train: 1000,
            dev: 200,
            test: 200,
        },
        eval_samples: 300,
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 3;
    let seed = 0;
    let oracle = prepare(&cfg)?;
    let data = make_datasets(&cfg, &oracle, seed)?;
    println!("oracle {} | test PPL {:.3}", &oracle.hash[..12], oracle.model.perplexity(&data.test)?);

    println!("{:<16} {:>10} {:>9} {:>7} {:>10} {:>10}", "objective", "PPL_oracle", "PPL_test", "BLEU-4", "SelfBLEU-4", "Distinct-4");
    for tag in ["mle", "tailr", "gold", "unlikelihood", "loss_truncation"] {
        let obj: Objective = tailr::cli::default_objective(tag).expect("known tag");
        let m = run_learner(&cfg, &oracle, &data, obj, seed)?.metrics;
        println!(
            "{:<16} {:>10.3} {:>9.3} {:>7.2} {:>10.2} {:>10.3}",
            tag, m.ppl_oracle, m.ppl_test, m.bleu4, m.self_bleu4, m.distinct4
        );
    }
    Ok(())
}
