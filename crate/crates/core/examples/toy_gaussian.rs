//! Fits a single Gaussian to a two-component mixture by minimizing KL and
//! TVD: KL covers both modes, TVD locks onto the heavier one.

use tailr::error::Result;
use tailr::synth::{toy_gaussian_fit, DescentSpec, GaussianMixture, GridSpec, ToyObjective};

fn main() -> Result<()> {
    let mixture = GaussianMixture::default();
    println!("mixture mean {:.3}, sd {:.3}", mixture.mean(), mixture.variance().sqrt());
    for obj in [ToyObjective::Kld, ToyObjective::Tvd] {
        let fit = toy_gaussian_fit(&mixture, obj, &GridSpec::default(), &DescentSpec::default())?;
        print!(
            "{obj:?}: mu {:.4} sigma {:.4} divergence {:.4} ({} steps, converged {})",
            fit.mu, fit.sigma, fit.divergence, fit.steps, fit.converged
        );
        match fit.void_interval {
            Some((lo, hi)) => println!("  void region [{lo:.2}, {hi:.2}] with model mass {:.4}", fit.void_mass),
            None => println!(),
        }
    }
    Ok(())
}
