//! Divergences between categorical distributions and the sequence-level
//! bound check on random factorized pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailr::bounds::{expected_stepwise_tvd, joint_tvd, run_suite, FactorizedSeqDist, SuiteConfig};
use tailr::distributions::{kld, mixture_proxy_dist, tsallis_entropy, tvd_abs, CategoricalDist};
use tailr::error::Result;

fn main() -> Result<()> {
    let p = CategoricalDist::from_weights(&[0.6, 0.3, 0.1])?;
    let q = CategoricalDist::from_weights(&[0.2, 0.3, 0.5])?;
    println!("TVD(p,q)   = {:.4}", tvd_abs(&p, &q)?);
    println!("KL(p||q)   = {:.4}", kld(&p, &q)?);
    println!("Tsallis-2  = {:.4}", tsallis_entropy(&p, 2.0)?);
    let m = mixture_proxy_dist(0.1, 0, &q)?;
    println!("mixture proxy for token 0, gamma 0.1: {:?}", m.probs());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for horizon in 1..=4 {
        let a = FactorizedSeqDist::random(&mut rng, 3, horizon)?;
        let b = FactorizedSeqDist::random(&mut rng, 3, horizon)?;
        println!(
            "T={horizon}: joint TVD {:.4} <= expected stepwise TVD {:.4}",
            joint_tvd(&a, &b)?,
            expected_stepwise_tvd(&a, &b)?
        );
    }

    for r in run_suite(&SuiteConfig { trials: 200, ..SuiteConfig::default() })? {
        println!("{:<28} max violation {:+.3e}  {}", r.check_name, r.max_violation, if r.passed() { "ok" } else { "FAIL" });
    }
    Ok(())
}
