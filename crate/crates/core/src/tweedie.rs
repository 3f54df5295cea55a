//! Tweedie exponential dispersion models `Tw_p(mu, gamma)`: unit deviance and
//! exact samplers for `p >= 1`.
//!
//! Sampler branches, all with mean `mu` and variance `gamma mu^p`:
//!
//! * `p = 1`: `gamma * Poisson(mu / gamma)`.
//! * `1 < p < 2`: compound Poisson-gamma. With `N ~ Poisson(mu^(2-p) / (gamma (2-p)))`
//!   the draw is `Gamma(N (2-p)/(p-1), gamma (p-1) mu^(p-1))` (zero when `N = 0`).
//!   The mean is `rate * shape * scale = mu`, and the variance is
//!   `mu (shape + 1) scale = gamma mu^p`.
//! * `p = 2`: `Gamma(1/gamma, gamma mu)`.
//! * `p = 3`: inverse Gaussian with mean `mu` and shape `1/gamma`.
//! * other `p > 2`: exponentially tilted positive stable law with index
//!   `alpha = (p-2)/(p-1)`. The cumulant function is
//!   `(mu / (alpha b)) (1 - (1 - b s)^alpha)` with `b = (p-1) gamma mu^(p-1)`,
//!   i.e. a stable law of scale `delta = mu b^(alpha-1) / alpha` tilted by `1/b`.
//!   It is split into `m` i.i.d. pieces so that each rejection step accepts
//!   with probability at least `exp(-1)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TweedieParams {
    pub p: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl TweedieParams {
    pub fn new(p: f64, mu: f64, gamma: f64) -> Result<Self> {
        if !(p.is_finite() && mu.is_finite() && gamma.is_finite()) {
            return Err(invalid("Tweedie parameters must be finite"));
        }
        if p > 0.0 && p < 1.0 {
            return Err(invalid(format!("no Tweedie model exists for p = {p} in (0, 1)")));
        }
        if !(gamma > 0.0) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        if p != 0.0 && !(mu > 0.0) {
            return Err(invalid(format!("mu must be positive for p = {p}, got {mu}")));
        }
        Ok(Self { p, mu, gamma })
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.gamma * variance_function(self.mu, self.p)
    }

    /// `c Tw_p(mu, gamma) = Tw_p(c mu, c^(2-p) gamma)`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(invalid(format!("scale must be positive, got {c}")));
        }
        Self::new(self.p, c * self.mu, c.powf(2.0 - self.p) * self.gamma)
    }
}

/// `V(mu) = mu^p`.
pub fn variance_function(mu: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        mu.powf(p)
    }
}

fn in_support(x: f64, p: f64) -> bool {
    if p == 0.0 {
        x.is_finite()
    } else if p == 1.0 || (p > 1.0 && p < 2.0) {
        x >= 0.0 && x.is_finite()
    } else {
        x > 0.0 && x.is_finite()
    }
}

/// Unit deviance `d(y; mu) = 2 int_mu^y (y - z) / V(z) dz`.
pub fn unit_deviance(y: f64, mu: f64, p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        return Err(domain(format!("p = {p} in (0, 1) has no Tweedie model")));
    }
    if !in_support(y, p) || !(p == 0.0 || mu > 0.0) || !mu.is_finite() {
        return Err(domain(format!("y = {y}, mu = {mu} outside the support for p = {p}")));
    }
    let d = if p == 0.0 {
        (y - mu).powi(2)
    } else if p == 1.0 {
        let ylog = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
        2.0 * (ylog - (y - mu))
    } else if p == 2.0 {
        2.0 * (y / mu - 1.0 - (y / mu).ln())
    } else {
        let a = if y > 0.0 { y.powf(2.0 - p) / ((1.0 - p) * (2.0 - p)) } else { 0.0 };
        2.0 * (a - y * mu.powf(1.0 - p) / (1.0 - p) + mu.powf(2.0 - p) / (2.0 - p))
    };
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    ScaledPoisson,
    CompoundGamma { rate: f64, shape: f64, scale: f64 },
    Gamma,
    InverseGaussian,
    TiltedStable { alpha: f64, delta: f64, tau: f64, pieces: u64 },
}

/// Precomputed sampler for one parameter triple.
#[derive(Debug, Clone, Copy)]
pub struct TweedieSampler {
    params: TweedieParams,
    branch: Branch,
}

impl TweedieSampler {
    pub fn new(params: TweedieParams) -> Result<Self> {
        let TweedieParams { p, mu, gamma } = params;
        if p < 1.0 {
            return Err(invalid(format!("Tweedie sampling needs p >= 1, got {p}")));
        }
        let branch = if p == 1.0 {
            Branch::ScaledPoisson
        } else if p < 2.0 {
            Branch::CompoundGamma {
                rate: mu.powf(2.0 - p) / (gamma * (2.0 - p)),
                shape: (2.0 - p) / (p - 1.0),
                scale: gamma * (p - 1.0) * mu.powf(p - 1.0),
            }
        } else if p == 2.0 {
            Branch::Gamma
        } else if p == 3.0 {
            Branch::InverseGaussian
        } else {
            let alpha = (p - 2.0) / (p - 1.0);
            let b = (p - 1.0) * gamma * mu.powf(p - 1.0);
            let total = mu / (alpha * b);
            let pieces = total.ceil().max(1.0);
            log::debug!(
                "tilted stable: alpha={alpha}, acceptance per piece {:.4} over {pieces} pieces",
                (-total / pieces).exp()
            );
            Branch::TiltedStable {
                alpha,
                delta: mu * b.powf(alpha - 1.0) / alpha / pieces,
                tau: 1.0 / b,
                pieces: pieces as u64,
            }
        };
        Ok(Self { params, branch })
    }

    pub fn params(&self) -> TweedieParams {
        self.params
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let TweedieParams { mu, gamma, .. } = self.params;
        match self.branch {
            Branch::ScaledPoisson => gamma * poisson(mu / gamma, rng),
            Branch::CompoundGamma { rate, shape, scale } => {
                let n = poisson(rate, rng);
                if n == 0.0 {
                    0.0
                } else {
                    Gamma::new(n * shape, scale).expect("positive gamma parameters").sample(rng)
                }
            }
            Branch::Gamma => Gamma::new(1.0 / gamma, gamma * mu)
                .expect("positive gamma parameters")
                .sample(rng),
            Branch::InverseGaussian => inverse_gaussian(mu, 1.0 / gamma, rng),
            Branch::TiltedStable { alpha, delta, tau, pieces } => (0..pieces)
                .map(|_| tilted_stable(alpha, delta, tau, rng))
                .sum(),
        }
    }
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng)
    }
}

/// Transformation with multiple roots.
fn inverse_gaussian<R: Rng + ?Sized>(mu: f64, shape: f64, rng: &mut R) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let y = n * n;
    let my = mu * y;
    let x = mu + mu * my / (2.0 * shape)
        - mu / (2.0 * shape) * (4.0 * shape * my + my * my).sqrt();
    let u: f64 = rng.random();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// Positive stable law with Laplace transform `exp(-s^alpha)` (Kanter's representation).
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u: f64 = rng.random::<f64>() * std::f64::consts::PI;
        if u > 0.0 {
            break u;
        }
    };
    let e: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

/// Stable law of scale `delta` (Laplace `exp(-delta s^alpha)`) tilted by `exp(-tau x)`.
fn tilted_stable<R: Rng + ?Sized>(alpha: f64, delta: f64, tau: f64, rng: &mut R) -> f64 {
    let scale = delta.powf(1.0 / alpha);
    loop {
        let s = scale * positive_stable(alpha, rng);
        let u: f64 = rng.random();
        if u <= (-tau * s).exp() {
            return s;
        }
    }
}

/// One draw from `Tw_p(mu, gamma)`.
pub fn sample_tweedie<R: Rng + ?Sized>(params: TweedieParams, rng: &mut R) -> Result<f64> {
    Ok(TweedieSampler::new(params)?.sample(rng))
}
