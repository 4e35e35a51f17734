//! Per-token weights and losses of every training objective on one batch of
//! log-probabilities.

use tailr::autodiff::{Graph, Tensor};
use tailr::error::Result;
use tailr::objectives::{Objective, Targets, TailrConfig};

fn main() -> Result<()> {
    // three positions over a four-token vocabulary
    let logits = vec![2.0, 0.5, -1.0, 0.0, 0.1, 0.2, 0.3, 0.4, -2.0, 3.0, 0.0, 1.0];
    let targets = Targets::single(&[0, 3, 2]);
    let objectives = [
        Objective::Mle,
        Objective::Tailr(TailrConfig::new(0.1, 0.1)?),
        Objective::Tailr(TailrConfig::new(1e-3, 0.0)?),
        Objective::Gold { weight_lower_bound: 0.1 },
        Objective::Unlikelihood { alpha: 1.0 },
    ];
    for obj in objectives {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::matrix(3, 4, logits.clone())?);
        let lp = g.log_softmax(x)?;
        let loss = obj.loss(&mut g, lp, &targets)?;
        let grads = g.backward(loss.value)?;
        let gnorm: f64 = grads.tensor(x).values().iter().map(|v| v * v).sum::<f64>().sqrt();
        println!(
            "{:<14} loss {:.4}  weights {:?}  |grad| {:.4}",
            obj.tag(),
            g.value(loss.value).item(),
            loss.breakdown.per_position_weight.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(),
            gnorm
        );
    }

    let cfg = TailrConfig::new(0.1, 0.05)?;
    for p in [0.0, 0.01, 0.1, 0.5, 0.9, 1.0] {
        println!("p = {p:<4}  TaiLr weight {:.4}", cfg.weight(p));
    }
    Ok(())
}
