//! One Gaussian fitted to a two-component mixture under forward KL or TVD,
//! by quadrature on a fixed grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub sigmas: [f64; 2],
}

impl Default for GaussianMixture {
    fn default() -> Self {
        Self {
            weights: [0.8, 0.2],
            means: [-2.0, 3.0],
            sigmas: [0.7, 0.7],
        }
    }
}

impl GaussianMixture {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("mixture sigmas must be positive".into()));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("mixture weights must be positive and sum to 1".into()));
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> f64 {
        (0..2)
            .map(|k| self.weights[k] * normal_pdf(x, self.means[k], self.sigmas[k]))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights[0] * self.means[0] + self.weights[1] * self.means[1]
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (0..2)
            .map(|k| self.weights[k] * (self.sigmas[k].powi(2) + (self.means[k] - m).powi(2)))
            .sum()
    }
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    (-0.5 * ((x - mu) / sigma).powi(2) - sigma.ln() - LN_SQRT_2PI).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyObjective {
    Kld,
    Tvd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    /// Half-width beyond the outermost component means, in units of the
    /// largest sigma.
    pub sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 4001,
            sigmas: 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentSpec {
    pub max_steps: usize,
    pub grad_tol: f64,
}

impl Default for DescentSpec {
    fn default() -> Self {
        Self {
            max_steps: 2_000,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyFit {
    pub objective: ToyObjective,
    pub mu: f64,
    pub sigma: f64,
    pub divergence: f64,
    pub void_interval: Option<(f64, f64)>,
    /// Fitted-density mass over the void interval.
    pub void_mass: f64,
    pub steps: usize,
    /// `false` when the step budget ran out first.
    pub converged: bool,
}

/// Grid with trapezoid weights.
pub struct Quadrature {
    pub xs: Vec<f64>,
    pub ws: Vec<f64>,
}

impl Quadrature {
    pub fn new(mixture: &GaussianMixture, grid: &GridSpec) -> Result<Self> {
        if grid.points < 3 {
            return Err(Error::Config("grid needs at least 3 points".into()));
        }
        let smax = mixture.sigmas[0].max(mixture.sigmas[1]);
        let lo = mixture.means[0].min(mixture.means[1]) - grid.sigmas * smax;
        let hi = mixture.means[0].max(mixture.means[1]) + grid.sigmas * smax;
        let h = (hi - lo) / (grid.points - 1) as f64;
        let xs: Vec<f64> = (0..grid.points).map(|i| lo + h * i as f64).collect();
        let mut ws = vec![h; grid.points];
        ws[0] *= 0.5;
        ws[grid.points - 1] *= 0.5;
        Ok(Self { xs, ws })
    }

    pub fn tvd(&self, p: &[f64], q: &[f64]) -> f64 {
        0.5 * self.ws.iter().zip(p.iter().zip(q)).map(|(w, (a, b))| w * (a - b).abs()).sum::<f64>()
    }
}

/// Divergence and its gradient in `(μ, ln σ)`.
fn objective_and_grad(obj: ToyObjective, quad: &Quadrature, p: &[f64], mu: f64, s: f64) -> (f64, [f64; 2]) {
    let sigma = s.exp();
    let (mut f, mut gm, mut gs) = (0.0, 0.0, 0.0);
    for ((&x, &w), &px) in quad.xs.iter().zip(&quad.ws).zip(p) {
        let z = (x - mu) / sigma;
        let ln_q = -0.5 * z * z - s - LN_SQRT_2PI;
        let (dmu, ds) = (z / sigma, z * z - 1.0);
        match obj {
            ToyObjective::Kld => {
                if px > 0.0 {
                    f += w * px * (px.ln() - ln_q);
                    gm -= w * px * dmu;
                    gs -= w * px * ds;
                }
            }
            ToyObjective::Tvd => {
                let q = ln_q.exp();
                f += 0.5 * w * (px - q).abs();
                let sign = if q > px {
                    1.0
                } else if q < px {
                    -1.0
                } else {
                    0.0
                };
                gm += 0.5 * w * sign * q * dmu;
                gs += 0.5 * w * sign * q * ds;
            }
        }
    }
    (f, [gm, gs])
}

/// Damped Newton with Armijo backtracking from `(mu, ln sigma)`. The Hessian
/// comes from central differences of the gradient; when it is not positive
/// definite the step falls back to steepest descent.
fn descend(obj: ToyObjective, quad: &Quadrature, p: &[f64], start: (f64, f64), spec: &DescentSpec) -> (f64, f64, f64, usize, bool) {
    let (mut mu, mut s) = start;
    let (mut f, mut g) = objective_and_grad(obj, quad, p, mu, s);
    let mut gd_step = 1.0f64;
    for it in 0..spec.max_steps {
        let gn2 = g[0] * g[0] + g[1] * g[1];
        if gn2.sqrt() < spec.grad_tol {
            return (mu, s, f, it, true);
        }
        let h = 1e-5;
        let gp = |dm: f64, ds: f64| objective_and_grad(obj, quad, p, mu + dm, s + ds).1;
        let (gmp, gmm, gsp, gsm) = (gp(h, 0.0), gp(-h, 0.0), gp(0.0, h), gp(0.0, -h));
        let hmm = (gmp[0] - gmm[0]) / (2.0 * h);
        let hss = (gsp[1] - gsm[1]) / (2.0 * h);
        let hms = 0.25 * ((gmp[1] - gmm[1]) + (gsp[0] - gsm[0])) / h;
        let det = hmm * hss - hms * hms;
        let newton = (hmm > 0.0 && det > 0.0).then(|| [-(hss * g[0] - hms * g[1]) / det, -(hmm * g[1] - hms * g[0]) / det]);
        let (dir, mut step) = match newton {
            Some(d) if d[0] * g[0] + d[1] * g[1] < 0.0 => (d, 1.0),
            _ => {
                gd_step = (gd_step * 2.0).min(10.0);
                ([-g[0], -g[1]], gd_step)
            }
        };
        let slope = dir[0] * g[0] + dir[1] * g[1];
        loop {
            let (m2, s2) = (mu + step * dir[0], s + step * dir[1]);
            let (f2, g2) = objective_and_grad(obj, quad, p, m2, s2);
            if f2 <= f + 1e-4 * step * slope {
                if f2 >= f {
                    // accepted without any decrease: stalled on a kink
                    return (mu, s, f, it, true);
                }
                mu = m2;
                s = s2;
                f = f2;
                g = g2;
                if newton.is_none() {
                    gd_step = step;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                // no descent left at this resolution (kink of |·|)
                return (mu, s, f, it, true);
            }
        }
    }
    (mu, s, f, spec.max_steps, false)
}

/// Interval between the two highest density modes where the mixture falls
/// below 10% of its maximum; `None` if the density is unimodal on the grid or
/// never dips that low.
pub fn void_interval(mixture: &GaussianMixture, quad: &Quadrature) -> Option<(usize, usize)> {
    let d: Vec<f64> = quad.xs.iter().map(|&x| mixture.density(x)).collect();
    let mut peaks: Vec<usize> = (1..d.len() - 1).filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1]).collect();
    if peaks.len() < 2 {
        return None;
    }
    peaks.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let (a, b) = (peaks[0].min(peaks[1]), peaks[0].max(peaks[1]));
    let thr = 0.1 * d[peaks[0]];
    let inside: Vec<usize> = (a..=b).filter(|&i| d[i] < thr).collect();
    Some((*inside.first()?, *inside.last()?))
}

pub fn toy_gaussian_fit(mixture: &GaussianMixture, objective: ToyObjective, grid: &GridSpec, descent: &DescentSpec) -> Result<ToyFit> {
    mixture.validate()?;
    let quad = Quadrature::new(mixture, grid)?;
    let p: Vec<f64> = quad.xs.iter().map(|&x| mixture.density(x)).collect();
    let moment = (mixture.mean(), 0.5 * mixture.variance().ln());
    let starts = match objective {
        // convex in (μ, ln σ): one start suffices, kept away from the answer
        ToyObjective::Kld => vec![(0.0, 0.0)],
        ToyObjective::Tvd => vec![
            moment,
            (mixture.means[0], mixture.sigmas[0].ln()),
            (mixture.means[1], mixture.sigmas[1].ln()),
        ],
    };
    let best = starts
        .into_iter()
        .map(|st| descend(objective, &quad, &p, st, descent))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .expect("at least one start");
    let (mu, s, divergence, steps, converged) = best;
    let sigma = s.exp();
    let (void_interval, void_mass) = match void_interval(mixture, &quad) {
        Some((i, j)) => {
            let mass: f64 = (i..=j).map(|k| quad.ws[k] * normal_pdf(quad.xs[k], mu, sigma)).sum();
            (Some((quad.xs[i], quad.xs[j])), mass)
        }
        None => (None, 0.0),
    };
    Ok(ToyFit {
        objective,
        mu,
        sigma,
        divergence,
        void_interval,
        void_mass,
        steps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_tvd_is_zero_on_grid() {
        let m = GaussianMixture::default();
        let q = Quadrature::new(&m, &GridSpec::default()).unwrap();
        let p: Vec<f64> = q.xs.iter().map(|&x| m.density(x)).collect();
        assert!(q.tvd(&p, &p) <= 1e-10);
        let mass: f64 = q.ws.iter().zip(&p).map(|(w, v)| w * v).sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kld_fit_matches_moments() {
        let m = GaussianMixture::default();
        let f = toy_gaussian_fit(&m, ToyObjective::Kld, &GridSpec::default(), &DescentSpec::default()).unwrap();
        assert!(f.converged);
        assert!((f.mu - m.mean()).abs() < 1e-3);
        assert!((f.sigma.powi(2) - m.variance()).abs() < 1e-3);
    }

    #[test]
    fn degenerate_mixture_is_recovered() {
        let m = GaussianMixture {
            weights: [0.5, 0.5],
            means: [1.0, 1.0],
            sigmas: [0.6, 0.6],
        };
        for obj in [ToyObjective::Kld, ToyObjective::Tvd] {
            let f = toy_gaussian_fit(&m, obj, &GridSpec::default(), &DescentSpec::default()).unwrap();
            assert!((f.mu - 1.0).abs() < 1e-3, "{f:?}");
            assert!((f.sigma - 0.6).abs() < 1e-3, "{f:?}");
            assert!(f.void_interval.is_none());
        }
    }

    #[test]
    fn tvd_fit_leaves_the_gap_empty() {
        let m = GaussianMixture::default();
        let k = toy_gaussian_fit(&m, ToyObjective::Kld, &GridSpec::default(), &DescentSpec::default()).unwrap();
        let t = toy_gaussian_fit(&m, ToyObjective::Tvd, &GridSpec::default(), &DescentSpec::default()).unwrap();
        assert!(k.void_interval.is_some());
        assert!(t.void_mass < 0.5 * k.void_mass, "{t:?} vs {k:?}");
    }

    #[test]
    fn rejects_bad_mixtures() {
        let mut m = GaussianMixture::default();
        m.sigmas[1] = 0.0;
        assert!(toy_gaussian_fit(&m, ToyObjective::Kld, &GridSpec::default(), &DescentSpec::default()).is_err());
        let mut m = GaussianMixture::default();
        m.weights = [0.5, 0.6];
        assert!(m.validate().is_err());
    }
}
