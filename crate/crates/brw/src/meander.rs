//! Reference laws for the Brownian meander: marginals, endpoint
//! exponential moments, a weighted sampler, and the constants chain used by
//! the first-order experiments.
//!
//! The sampler runs the norm of three-dimensional Brownian motion from the
//! origin and reweights each path by the reciprocal of its endpoint
//! (Imhof's relation); weights are self-normalized per batch. Values at the
//! simulation grid times are exact in law; only off-grid times are
//! interpolated.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, substream};
use crate::stats::{normal_cdf, simpson};

/// Default number of uniform simulation steps on `[0, 1]`.
pub const DEFAULT_STEPS: usize = 1 << 10;

/// Meander marginal density at time `t` in `(0, 1]`:
/// `f_t(x) = (x / t^{3/2}) exp(-x^2 / 2t) erf(x / sqrt(2(1-t)))`.
/// At `t = 1` this is the Rayleigh density.
pub fn marginal_density(t: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let gauss = (x / t.powf(1.5)) * (-x * x / (2.0 * t)).exp();
    if t >= 1.0 {
        gauss
    } else {
        gauss * statrs::function::erf::erf(x / (2.0 * (1.0 - t)).sqrt())
    }
}

/// Meander marginal CDF at time `t` in `(0, 1]`. Closed form (Rayleigh) at
/// `t = 1`, quadrature of the density otherwise; absolute error below 1e-8.
pub fn marginal_cdf(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::DomainError(format!("t = {t} outside (0, 1]")));
    }
    if x < 0.0 {
        return Err(Error::DomainError(format!("x = {x} negative")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if t == 1.0 {
        return Ok(1.0 - (-0.5 * x * x).exp());
    }
    let cap = x.min(t.sqrt() * 40.0);
    Ok(simpson(|y| marginal_density(t, y), 0.0, cap, 1e-11).min(1.0))
}

/// Endpoint exponential moment `E[exp(a R_1)]` in closed form:
/// `1 + a sqrt(2 pi) exp(a^2/2) Phi(a)`. Overflows for `a` beyond ~37.6;
/// use [`endpoint_exp_moment_ln`] there.
pub fn endpoint_exp_moment(a: f64) -> f64 {
    assert!(a >= 0.0, "defined for a >= 0");
    1.0 + a * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * a * a).exp() * normal_cdf(a)
}

/// Natural log of the endpoint exponential moment, stable for large `a`.
pub fn endpoint_exp_moment_ln(a: f64) -> f64 {
    assert!(a >= 0.0);
    if a < 30.0 {
        return endpoint_exp_moment(a).ln();
    }
    // ln(1 + c exp(a^2/2)) with c = a sqrt(2 pi) Phi(a); Phi(a) ~ 1 here.
    let lc = (a * (2.0 * std::f64::consts::PI).sqrt() * normal_cdf(a)).ln();
    let big = 0.5 * a * a + lc;
    big + (-big).exp().ln_1p()
}

/// The scaled constants chain
/// `f(C) = exp(-C sigma2 / 2) sqrt(2 / (pi sigma2 C)) E[exp(sigma sqrt(C) R_1)]`,
/// which tends to 2 as `C` grows. Direct evaluation through the exponential
/// moment.
pub fn constants_chain(c: f64, sigma2: f64) -> f64 {
    assert!(c > 0.0 && sigma2 > 0.0);
    let a = (sigma2 * c).sqrt();
    let scale = (2.0 / (std::f64::consts::PI * sigma2 * c)).sqrt();
    if a < 30.0 {
        (-0.5 * sigma2 * c).exp() * scale * endpoint_exp_moment(a)
    } else {
        // exp(ln E - C sigma2/2) computed in log space.
        scale * (endpoint_exp_moment_ln(a) - 0.5 * sigma2 * c).exp()
    }
}

/// The same chain collapsed algebraically:
/// `f(C) = 2 Phi(sigma sqrt(C)) + sqrt(2/(pi sigma2 C)) exp(-C sigma2/2)`.
pub fn constants_chain_identity(c: f64, sigma2: f64) -> f64 {
    assert!(c > 0.0 && sigma2 > 0.0);
    let a = (sigma2 * c).sqrt();
    2.0 * normal_cdf(a) + (2.0 / (std::f64::consts::PI * sigma2 * c)).sqrt() * (-0.5 * sigma2 * c).exp()
}

/// One weighted meander path evaluated on a time grid.
#[derive(Clone, Debug)]
pub struct MeanderSample {
    /// Values at the requested grid times, positive on `(0, 1]`.
    pub values: Vec<f64>,
    /// Self-normalized Imhof weight; averages to 1 per batch.
    pub weight: f64,
}

/// Sample `batch` weighted meander paths on `t_grid` (ascending, within
/// `(0, 1]`), simulating the three-dimensional Bessel norm on `steps`
/// uniform increments.
pub fn sample_meander(t_grid: &[f64], steps: usize, batch: usize, seed: u64) -> Result<Vec<MeanderSample>> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DomainError("t_grid must be ascending".into()));
    }
    if !(t_grid[0] > 0.0 && *t_grid.last().unwrap() <= 1.0) {
        return Err(Error::DomainError("t_grid must lie in (0, 1]".into()));
    }
    let mut samples: Vec<MeanderSample> = (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(substream(seed, i as u64));
            let dt = 1.0 / steps as f64;
            let sd = dt.sqrt();
            let mut b = [0.0_f64; 3];
            let mut radius = Vec::with_capacity(steps + 1);
            radius.push(0.0);
            for _ in 0..steps {
                for c in b.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *c += sd * z;
                }
                radius.push((b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt());
            }
            let at = |t: f64| -> f64 {
                let pos = t * steps as f64;
                let k = (pos.floor() as usize).min(steps);
                let frac = pos - k as f64;
                if frac > 0.0 && k < steps {
                    radius[k] * (1.0 - frac) + radius[k + 1] * frac
                } else {
                    radius[k]
                }
            };
            let values: Vec<f64> = t_grid.iter().map(|&t| at(t)).collect();
            let endpoint = radius[steps];
            MeanderSample {
                values,
                weight: 1.0 / endpoint,
            }
        })
        .collect();
    let total: f64 = samples.iter().map(|s| s.weight).sum();
    let scale = batch as f64 / total;
    for s in &mut samples {
        s.weight *= scale;
    }
    Ok(samples)
}
