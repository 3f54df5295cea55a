//! Poisson-Tweedie laws `PT_p(mu, gamma)`: Poisson mixtures over `Tw_p(mu, gamma)`
//! for `p >= 1`, and the Hermite law at `p = 0`.
//!
//! With `b = (p-1) gamma mu^(p-1)` and `alpha = (p-2)/(p-1)` the FCGF is
//! `(mu / (alpha b)) (1 - (1 - b t)^alpha)` for `p > 1, p != 2`. Its limits give
//! the remaining rows: `-log(1 - gamma mu t) / gamma` at `p = 2`,
//! `(mu / gamma)(e^(gamma t) - 1)` at `p = 1` and `mu t + gamma t^2 / 2` at `p = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fcgf::{AnalyticFcgf, Expr};
use crate::series::{pmf_from_fcgf, PmfConfig, PmfTable, TableSampler};
use crate::tweedie::{poisson, TweedieParams, TweedieSampler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtParams {
    pub p: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl PtParams {
    pub fn new(p: f64, mu: f64, gamma: f64) -> Result<Self> {
        if !(p.is_finite() && mu.is_finite() && gamma.is_finite()) {
            return Err(invalid("Poisson-Tweedie parameters must be finite"));
        }
        if p < 0.0 || (p > 0.0 && p < 1.0) {
            return Err(invalid(format!(
                "Poisson-Tweedie needs p = 0 or p >= 1, got {p}"
            )));
        }
        if !(mu > 0.0) || !(gamma > 0.0) {
            return Err(invalid(format!("need mu > 0 and gamma > 0, got mu={mu}, gamma={gamma}")));
        }
        if p == 0.0 && gamma > mu {
            return Err(invalid(format!("Hermite needs gamma <= mu, got gamma={gamma} > mu={mu}")));
        }
        Ok(Self { p, mu, gamma })
    }

    /// `Var = mu + gamma mu^p`.
    pub fn variance(&self) -> f64 {
        self.mu + self.gamma * if self.p == 0.0 { 1.0 } else { self.mu.powf(self.p) }
    }
}

pub(crate) fn pt_expr(p: f64, mu: f64, gamma: f64) -> Expr {
    if p == 0.0 {
        Expr::Poly(vec![0.0, mu, gamma / 2.0])
    } else if p == 1.0 {
        Expr::Exp { a: mu / gamma, r: gamma }
    } else if p == 2.0 {
        Expr::Log { w: -1.0 / gamma, s: -gamma * mu }
    } else {
        let b = (p - 1.0) * gamma * mu.powf(p - 1.0);
        let alpha = (p - 2.0) / (p - 1.0);
        Expr::Power { a: -mu / (alpha * b), b: -b, alpha }
    }
}

pub fn pt_fcgf(params: &PtParams) -> AnalyticFcgf {
    let PtParams { p, mu, gamma } = *params;
    AnalyticFcgf::from_expr(pt_expr(p, mu, gamma), true, p >= 1.0)
}

pub fn pt_pmf(params: &PtParams, cfg: &PmfConfig) -> Result<PmfTable> {
    pmf_from_fcgf(&pt_fcgf(params), cfg)
}

/// `c PT_p(mu, gamma) = PT_p(c mu, c^(2-p) gamma)`; `p = 0` only thins (`c <= 1`).
pub fn pt_dilate(params: &PtParams, c: f64) -> Result<PtParams> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("dilation factor must be positive, got {c}")));
    }
    if params.p == 0.0 && c > 1.0 {
        return Err(invalid(format!("Hermite laws dilate only with c <= 1, got {c}")));
    }
    PtParams::new(params.p, c * params.mu, c.powf(2.0 - params.p) * params.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Duality {
    /// `(mu, lambda)` additive to `(mu, gamma = 1/lambda)` reproductive.
    ToReproductive,
    /// `(mu, gamma)` reproductive to `(mu, lambda = 1/gamma)` additive.
    ToAdditive,
}

/// `FD(mu, gamma) = gamma FD*(mu, 1/gamma)`: the second parameter is inverted,
/// `mu` is shared.
pub fn duality(mu: f64, x: f64, _direction: Duality) -> Result<(f64, f64)> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(format!("index parameter must be positive, got {x}")));
    }
    Ok((mu, 1.0 / x))
}

/// Draws from `PT_p(mu, gamma)`; `p >= 1` by mixing, `p = 0` by table inversion.
pub fn sample_pt<R: Rng + ?Sized>(params: &PtParams, n: usize, rng: &mut R) -> Result<Vec<u64>> {
    if params.p == 0.0 {
        let table = pt_pmf(params, &PmfConfig::default())?;
        let sampler = TableSampler::new(&table);
        return Ok((0..n).map(|_| sampler.sample(rng)).collect());
    }
    let mixing = TweedieSampler::new(TweedieParams::new(params.p, params.mu, params.gamma)?)?;
    Ok((0..n).map(|_| poisson(mixing.sample(rng), rng) as u64).collect())
}
