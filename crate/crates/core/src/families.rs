//! Named count distributions and the dispersion functions of the factorial
//! tilting families they generate.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::fcgf::{log_normalizer, AnalyticFcgf, Expr, Interval};
use crate::poisson_tweedie::pt_expr;

/// Closed-form dispersion function `v(m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum DispersionLaw {
    /// `coef * m^power`
    Power { coef: f64, power: f64 },
    /// `slope * (m - offset)`
    Affine { slope: f64, offset: f64 },
    Numeric,
}

impl DispersionLaw {
    fn eval(&self, m: f64) -> Option<f64> {
        match *self {
            DispersionLaw::Power { coef, power } => {
                Some(if power == 0.0 { coef } else { coef * m.powf(power) })
            }
            DispersionLaw::Affine { slope, offset } => Some(slope * (m - offset)),
            DispersionLaw::Numeric => None,
        }
    }

    /// Reads the law off the structure of an FCGF; tilting preserves it.
    fn of(expr: &Expr) -> DispersionLaw {
        match expr {
            Expr::Linear(_) => DispersionLaw::Power { coef: 0.0, power: 0.0 },
            // C' = w s / (1 + s x), C'' = -(C')^2 / w
            Expr::Log { w, .. } => DispersionLaw::Power { coef: -1.0 / w, power: 2.0 },
            Expr::Exp { r, .. } => DispersionLaw::Affine { slope: *r, offset: 0.0 },
            Expr::Poly(p) if p.len() <= 3 => {
                DispersionLaw::Power { coef: 2.0 * p.get(2).copied().unwrap_or(0.0), power: 0.0 }
            }
            Expr::Power { a, b, alpha } => {
                if *alpha == 1.0 {
                    DispersionLaw::Power { coef: 0.0, power: 0.0 }
                } else {
                    // C' = a alpha b z^(alpha-1), C'' = a alpha (alpha-1) b^2 z^(alpha-2)
                    let power = (alpha - 2.0) / (alpha - 1.0);
                    let coef = a * alpha * (alpha - 1.0) * b * b * (a * alpha * b).powf(-power);
                    DispersionLaw::Power { coef, power }
                }
            }
            Expr::Sum(parts) => match parts.as_slice() {
                [Expr::Linear(off), Expr::Exp { r, .. }] | [Expr::Exp { r, .. }, Expr::Linear(off)] => {
                    DispersionLaw::Affine { slope: *r, offset: *off }
                }
                _ => DispersionLaw::Numeric,
            },
            _ => DispersionLaw::Numeric,
        }
    }
}

/// A catalog member together with its tilting family.
#[derive(Debug, Clone)]
pub struct FamilySpec {
    name: String,
    params: BTreeMap<String, f64>,
    fcgf: AnalyticFcgf,
    law: DispersionLaw,
    mean_domain: Interval,
    tilt_range: Interval,
}

/// Parameter schema entry for the registry.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyInfo {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub optional: &'static [&'static str],
    pub summary: &'static str,
}

pub const REGISTRY: &[FamilyInfo] = &[
    FamilyInfo { name: "poisson", params: &["mu"], optional: &[], summary: "C(t) = mu t" },
    FamilyInfo { name: "bernoulli", params: &["q"], optional: &[], summary: "C(t) = log(1 + q t)" },
    FamilyInfo { name: "binomial", params: &["trials", "q"], optional: &[], summary: "C(t) = n log(1 + q t)" },
    FamilyInfo { name: "degenerate", params: &["value"], optional: &[], summary: "point mass, C(t) = n log(1 + t)" },
    FamilyInfo { name: "geometric", params: &["mu"], optional: &[], summary: "C(t) = -log(1 - mu t)" },
    FamilyInfo { name: "nb", params: &["lambda", "mu"], optional: &[], summary: "additive negative binomial, C(t) = -lambda log(1 - mu t)" },
    FamilyInfo { name: "hermite", params: &["mu", "gamma"], optional: &[], summary: "C(t) = mu t + gamma t^2 / 2, 0 < gamma <= mu" },
    FamilyInfo { name: "short", params: &["mu1", "mu2", "phi"], optional: &[], summary: "C(t) = mu1 (e^(phi t) - 1) + mu2 t" },
    FamilyInfo { name: "neyman-a", params: &["mu", "gamma"], optional: &[], summary: "C(t) = (mu / gamma)(e^(gamma t) - 1)" },
    FamilyInfo { name: "neyman-a-additive", params: &["mean"], optional: &[], summary: "C(t) = mean (e^t - 1); only the mean is identifiable" },
    FamilyInfo { name: "poisson-nb", params: &["lambda", "mu", "k"], optional: &[], summary: "C(t) = lambda ((1 - mu t)^(-k) - 1)" },
    FamilyInfo { name: "polya-aeppli", params: &["lambda", "mu"], optional: &[], summary: "Poisson-NB with k = 1" },
    FamilyInfo { name: "poisson-binomial", params: &["lambda", "mu", "trials"], optional: &[], summary: "C(t) = lambda ((1 + mu t)^n - 1), 0 < mu <= 1" },
    FamilyInfo { name: "discrete-stable", params: &["alpha"], optional: &["theta", "mu", "lambda"], summary: "C(t) = lambda C_alpha(theta) ((1 + t/theta)^alpha - 1)" },
    FamilyInfo { name: "linnik", params: &["b", "c", "alpha", "theta"], optional: &[], summary: "C(t) = -b log(1 + c (-t)^alpha) tilted to theta < 0" },
    FamilyInfo { name: "com-poisson", params: &["lambda", "nu"], optional: &[], summary: "C(t) = log Z(lambda (1 + t)) - log Z(lambda)" },
    FamilyInfo { name: "pt", params: &["p", "mu", "gamma"], optional: &[], summary: "Poisson-Tweedie PT_p(mu, gamma), p = 0 or p >= 1" },
];

fn canonical(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('_', "-")
}

fn get(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| invalid(format!("missing parameter '{key}'")))
}

fn positive(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    let v = get(params, key)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{key} must be positive, got {v}")))
    }
}

fn positive_int(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    let v = positive(params, key)?;
    if v.fract() != 0.0 {
        return Err(invalid(format!("{key} must be a positive integer, got {v}")));
    }
    Ok(v)
}

fn check_known(name: &str, params: &BTreeMap<String, f64>) -> Result<()> {
    let info = REGISTRY
        .iter()
        .find(|i| i.name == name)
        .ok_or_else(|| Error::UnknownFamily(name.to_string()))?;
    for key in params.keys() {
        if !info.params.contains(&key.as_str()) && !info.optional.contains(&key.as_str()) {
            if name == "neyman-a-additive" && (key == "mu" || key == "lambda") {
                return Err(invalid(
                    "neyman-a-additive: only the mean lambda*mu is identifiable; pass 'mean'",
                ));
            }
            return Err(invalid(format!("unknown parameter '{key}' for family {name}")));
        }
    }
    Ok(())
}

/// `alpha = (p - 2) / (p - 1)`, with `-inf` at `p = 1`.
pub fn alpha_from_p(p: f64) -> f64 {
    if p == 1.0 {
        f64::NEG_INFINITY
    } else {
        (p - 2.0) / (p - 1.0)
    }
}

/// Named power-dispersion laws with their `(p, alpha)` pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AtlasRow {
    pub family: String,
    pub p: f64,
    pub alpha: f64,
}

pub fn atlas() -> Vec<AtlasRow> {
    let mut rows: Vec<(String, f64)> = vec![
        ("hermite".into(), 0.0),
        ("neyman-a".into(), 1.0),
        ("polya-aeppli".into(), 1.5),
        ("nb".into(), 2.0),
        ("pig".into(), 3.0),
    ];
    for n in 3..=5 {
        let n = n as f64;
        rows.push((format!("poisson-binomial(n={n})"), (n - 2.0) / (n - 1.0)));
    }
    rows.into_iter()
        .map(|(family, p)| AtlasRow { family, p, alpha: alpha_from_p(p) })
        .collect()
}

/// Inverse of [`alpha_from_p`]; the map is an involution.
pub fn p_from_alpha(alpha: f64) -> f64 {
    if alpha.is_infinite() {
        1.0
    } else {
        (alpha - 2.0) / (alpha - 1.0)
    }
}

/// Mean of the tilted discrete stable member: `(theta / (alpha - 1))^(alpha - 1)`.
pub fn discrete_stable_mu(theta: f64, alpha: f64) -> Result<f64> {
    if !(alpha < 1.0) || alpha == 0.0 || !(theta / (alpha - 1.0) > 0.0) {
        return Err(domain(format!("need theta / (alpha - 1) > 0, got theta={theta}, alpha={alpha}")));
    }
    Ok((theta / (alpha - 1.0)).powf(alpha - 1.0))
}

pub fn discrete_stable_theta(mu: f64, alpha: f64) -> Result<f64> {
    if !(alpha < 1.0) || alpha == 0.0 || !(mu > 0.0) {
        return Err(domain(format!("need mu > 0 and alpha < 1, got mu={mu}, alpha={alpha}")));
    }
    Ok((alpha - 1.0) * mu.powf(1.0 / (alpha - 1.0)))
}

const POS: Interval = Interval { lo: 0.0, hi: f64::INFINITY };

impl FamilySpec {
    pub fn make(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let name = canonical(name);
        check_known(&name, params)?;
        // valid tilts of laws that are not infinitely dilatable; others use the analytic extent
        let mut tilts: Option<Interval> = None;
        let (expr, div, dil, mean_domain) = match name.as_str() {
            "poisson" => {
                let mu = get(params, "mu")?;
                if !(mu >= 0.0) {
                    return Err(invalid(format!("mu must be >= 0, got {mu}")));
                }
                (Expr::Linear(mu), true, true, Interval::new(mu, mu))
            }
            "bernoulli" | "binomial" | "degenerate" => {
                let (n, q) = match name.as_str() {
                    "bernoulli" => (1.0, get(params, "q")?),
                    "binomial" => (positive_int(params, "trials")?, get(params, "q")?),
                    _ => (positive_int(params, "value")?, 1.0),
                };
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(format!("q must lie in (0, 1], got {q}")));
                }
                tilts = Some(Interval::new(1.0 - 1.0 / q, f64::INFINITY));
                (Expr::Log { w: n, s: q }, false, false, Interval::new(0.0, n))
            }
            "geometric" => (Expr::Log { w: -1.0, s: -positive(params, "mu")? }, true, true, POS),
            "nb" => {
                let lambda = positive(params, "lambda")?;
                let mu = positive(params, "mu")?;
                (Expr::Log { w: -lambda, s: -mu }, true, true, POS)
            }
            "hermite" => {
                let mu = positive(params, "mu")?;
                let gamma = positive(params, "gamma")?;
                if gamma > mu {
                    return Err(invalid(format!(
                        "Hermite needs 0 < gamma <= mu, got gamma={gamma} > mu={mu}"
                    )));
                }
                tilts = Some(Interval::new(1.0 - mu / gamma, f64::INFINITY));
                (pt_expr(0.0, mu, gamma), true, false, Interval::new(gamma, f64::INFINITY))
            }
            "short" => {
                let mu1 = positive(params, "mu1")?;
                let mu2 = positive(params, "mu2")?;
                let phi = positive(params, "phi")?;
                (
                    Expr::sum(vec![Expr::Exp { a: mu1, r: phi }, Expr::Linear(mu2)]),
                    true,
                    true,
                    Interval::new(mu2, f64::INFINITY),
                )
            }
            "neyman-a" => {
                let mu = positive(params, "mu")?;
                let gamma = positive(params, "gamma")?;
                (pt_expr(1.0, mu, gamma), true, true, POS)
            }
            "neyman-a-additive" => (Expr::Exp { a: positive(params, "mean")?, r: 1.0 }, true, true, POS),
            "poisson-nb" | "polya-aeppli" => {
                let lambda = positive(params, "lambda")?;
                let mu = positive(params, "mu")?;
                let k = if name == "polya-aeppli" { 1.0 } else { positive(params, "k")? };
                (Expr::Power { a: lambda, b: -mu, alpha: -k }, true, true, POS)
            }
            "poisson-binomial" => {
                let lambda = positive(params, "lambda")?;
                let mu = positive(params, "mu")?;
                let n = positive_int(params, "trials")?;
                if mu > 1.0 {
                    return Err(invalid(format!("poisson-binomial needs mu <= 1, got {mu}")));
                }
                let lo = lambda * n * mu.powf(n);
                let md = if n == 1.0 { Interval::new(lo, lo) } else { Interval::new(lo, f64::INFINITY) };
                tilts = Some(Interval::new(1.0 - 1.0 / mu, f64::INFINITY));
                (Expr::Power { a: lambda, b: mu, alpha: n }, true, false, md)
            }
            "discrete-stable" => {
                let alpha = get(params, "alpha")?;
                if !(alpha < 1.0) || alpha == 0.0 {
                    return Err(invalid(format!("discrete stable needs alpha < 1, alpha != 0, got {alpha}")));
                }
                let lambda = params.get("lambda").copied().unwrap_or(1.0);
                if !(lambda > 0.0) {
                    return Err(invalid(format!("lambda must be positive, got {lambda}")));
                }
                let theta = match (params.get("theta"), params.get("mu")) {
                    (Some(_), Some(_)) => {
                        return Err(invalid("discrete-stable takes theta or mu, not both"))
                    }
                    (Some(&theta), None) => {
                        discrete_stable_mu(theta, alpha)?;
                        theta
                    }
                    (None, Some(&mu)) => discrete_stable_theta(mu, alpha)?,
                    (None, None) => return Err(invalid("discrete-stable needs theta or mu")),
                };
                let c_alpha = (alpha - 1.0) / alpha * (theta / (alpha - 1.0)).powf(alpha);
                (Expr::Power { a: lambda * c_alpha, b: 1.0 / theta, alpha }, true, true, POS)
            }
            "linnik" => {
                let b = positive(params, "b")?;
                let kappa = positive(params, "c")?;
                let alpha = get(params, "alpha")?;
                let theta = get(params, "theta")?;
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(invalid(format!("Linnik needs 0 < alpha < 1, got {alpha}")));
                }
                if !(theta < 0.0) {
                    return Err(invalid(format!(
                        "Linnik members need a tilt theta < 0 (0 is a boundary point), got {theta}"
                    )));
                }
                (Expr::Linnik { b, kappa, alpha, shift: theta, dil: 1.0 }, true, true, POS)
            }
            "com-poisson" => {
                let lambda = positive(params, "lambda")?;
                let nu = positive(params, "nu")?;
                let log_z0 = log_normalizer(lambda, nu)?;
                let md = if nu > 1.0 {
                    Interval::new(0.0, lambda)
                } else if nu < 1.0 {
                    Interval::new(lambda, f64::INFINITY)
                } else {
                    Interval::new(lambda, lambda)
                };
                (Expr::Com { lambda, nu, base: 1.0, dil: 1.0, log_z0 }, false, false, md)
            }
            "pt" => {
                let p = get(params, "p")?;
                let mu = positive(params, "mu")?;
                let gamma = positive(params, "gamma")?;
                let pt = crate::poisson_tweedie::PtParams::new(p, mu, gamma)?;
                let md = if p == 0.0 { Interval::new(gamma, f64::INFINITY) } else { POS };
                if p == 0.0 {
                    tilts = Some(Interval::new(1.0 - mu / gamma, f64::INFINITY));
                }
                (pt_expr(pt.p, pt.mu, pt.gamma), true, p >= 1.0, md)
            }
            other => return Err(Error::UnknownFamily(other.to_string())),
        };
        let fcgf = AnalyticFcgf::from_expr(expr, div, dil);
        let law = DispersionLaw::of(fcgf.expr());
        let tilt_range = match tilts {
            Some(t) => t,
            None if dil => fcgf.analytic_extent(),
            None => fcgf.domain(),
        };
        Ok(Self { name, params: params.clone(), fcgf, law, mean_domain, tilt_range })
    }

    /// Wraps an arbitrary FCGF; its dispersion function is computed numerically.
    pub fn from_fcgf(name: &str, fcgf: AnalyticFcgf) -> Self {
        let tilt_range = if fcgf.is_infinitely_dilatable() {
            fcgf.analytic_extent()
        } else {
            fcgf.domain()
        };
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            fcgf,
            law: DispersionLaw::Numeric,
            mean_domain: Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            tilt_range,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn fcgf(&self) -> &AnalyticFcgf {
        &self.fcgf
    }

    pub fn mean_domain(&self) -> Interval {
        self.mean_domain
    }

    /// Tilts over which the dispersion function is searched.
    pub fn tilt_range(&self) -> Interval {
        self.tilt_range
    }

    /// Closed-form `v(m)`, when the family has one.
    pub fn unit_dispersion(&self, m: f64) -> Option<f64> {
        self.law.eval(m)
    }

    pub fn has_closed_form_dispersion(&self) -> bool {
        self.law != DispersionLaw::Numeric
    }

    /// Member of the same tilting family with base `C(theta + t) - C(theta)`.
    pub fn tilted(&self, theta: f64) -> Result<Self> {
        let fcgf = self.fcgf.tilt_within(theta, self.tilt_range)?;
        let shift = |iv: Interval| Interval::new(iv.lo - theta, iv.hi - theta);
        Ok(Self {
            name: self.name.clone(),
            params: self.params.clone(),
            law: DispersionLaw::of(fcgf.expr()),
            fcgf,
            mean_domain: self.mean_domain,
            tilt_range: shift(self.tilt_range),
        })
    }

    /// Tilt `theta` at which the member has mean `m`.
    pub fn tilt_for_mean(&self, m: f64) -> Result<f64> {
        solve_tilt(&self.fcgf, m, self.tilt_range)
    }
}

/// Convenience constructor from `(name, value)` pairs.
pub fn make(name: &str, params: &[(&str, f64)]) -> Result<FamilySpec> {
    let map = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    FamilySpec::make(name, &map)
}

/// `v(m) = C''(theta)` where `C'(theta) = m`.
pub fn dispersion_function(spec: &FamilySpec, m: f64) -> Result<f64> {
    let md = spec.mean_domain;
    let slack = |b: f64| if b.is_finite() { 1e-12 * b.abs().max(1.0) } else { 0.0 };
    if !(m >= md.lo - slack(md.lo) && m <= md.hi + slack(md.hi)) {
        return Err(Error::RootNotBracketed { target: m, lo: md.lo, hi: md.hi });
    }
    let m = m.clamp(md.lo, md.hi);
    if md.lo == md.hi {
        // the tilting family is a single law
        return spec.fcgf.derivative(0.0, 2);
    }
    if let Some(v) = spec.unit_dispersion(m) {
        return Ok(v);
    }
    numeric_dispersion(spec, m)
}

/// Dispersion function by root finding, ignoring any closed form.
pub fn numeric_dispersion(spec: &FamilySpec, m: f64) -> Result<f64> {
    let theta = solve_tilt(&spec.fcgf, m, spec.tilt_range)?;
    spec.fcgf.derivative(theta, 2)
}

/// Solves `C'(theta) = target` on `range` by bracket expansion from 0 and
/// bisection carried to full double precision.
pub fn solve_tilt(f: &AnalyticFcgf, target: f64, range: Interval) -> Result<f64> {
    let g = |theta: f64| f.derivative(theta, 1).map(|d| d - target);
    let not_bracketed = || Error::RootNotBracketed { target, lo: range.lo, hi: range.hi };
    if !range.closure_contains(0.0) {
        return Err(domain("tilt range must contain 0"));
    }
    let tol = 1e-12 * target.abs().max(1.0);
    let g0 = g(0.0)?;
    if g0.abs() <= tol {
        return Ok(0.0);
    }
    let slope = f.derivative(0.0, 2)?;
    if slope == 0.0 {
        return Err(not_bracketed());
    }
    let up = (g0 < 0.0) == (slope > 0.0);
    let edge = if up { range.hi } else { range.lo };
    let (mut a, mut ga) = (0.0, g0);
    let mut step = 1.0;
    let mut bracket = None;
    for _ in 0..4000 {
        let next = if edge.is_infinite() {
            let n = a + if up { step } else { -step };
            step *= 2.0;
            n
        } else {
            let n = a + 0.5 * (edge - a);
            if n == a || n == edge {
                break;
            }
            n
        };
        let gn = match g(next) {
            Ok(v) if v.is_finite() => v,
            _ => break,
        };
        if gn == 0.0 {
            return Ok(next);
        }
        if gn.signum() != ga.signum() {
            bracket = Some((a, next));
            break;
        }
        a = next;
        ga = gn;
    }
    let Some((mut lo, mut hi)) = bracket else {
        // a root on a finite edge of the range is approached but never crossed
        return if edge.is_finite() && ga.abs() <= 1e2 * tol { Ok(a) } else { Err(not_bracketed()) };
    };
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let glo = g(lo)?;
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
