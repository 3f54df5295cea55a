//! The operator algebra on factorial cumulant generating functions.

mod com;
pub(crate) mod expr;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::series::{convolve_to, exp_series, PmfConfig, PmfTable, PowerSeries};
pub(crate) use com::log_normalizer;
pub(crate) use expr::{Expr, Mobius};

/// Open interval `(lo, hi)`; empty when `lo >= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn all() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn empty() -> Self {
        Self { lo: 0.0, hi: 0.0 }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo < self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn closure_contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }
}

/// A count distribution described by its FCGF `C(t) = log E[(1+t)^X]`.
#[derive(Debug, Clone)]
pub struct AnalyticFcgf {
    expr: Arc<Expr>,
    infinitely_divisible: bool,
    infinitely_dilatable: bool,
    /// False once the variable may take negative values (after `reflect`).
    counts: bool,
}

/// Mean, dispersion `S = Var - E`, Fisher index and zero-inflation index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub mean: f64,
    pub dispersion: f64,
    pub fisher_index: Option<f64>,
    pub zero_inflation: Option<f64>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl AnalyticFcgf {
    pub(crate) fn from_expr(expr: Expr, divisible: bool, dilatable: bool) -> Self {
        Self {
            expr: Arc::new(expr),
            infinitely_divisible: divisible,
            infinitely_dilatable: dilatable,
            counts: true,
        }
    }

    fn derived(&self, expr: Expr, divisible: bool, dilatable: bool) -> Self {
        Self {
            expr: Arc::new(expr),
            infinitely_divisible: divisible,
            infinitely_dilatable: dilatable,
            counts: self.counts,
        }
    }

    pub(crate) fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Poisson with mean `mu`: `C(t) = mu t`.
    pub fn poisson(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid(format!("Poisson mean must be >= 0, got {mu}")));
        }
        Ok(Self::from_expr(Expr::Linear(mu), true, true))
    }

    pub fn is_infinitely_divisible(&self) -> bool {
        self.infinitely_divisible
    }

    pub fn is_infinitely_dilatable(&self) -> bool {
        self.infinitely_dilatable
    }

    pub fn is_count_valued(&self) -> bool {
        self.counts
    }

    /// Interval on which the closed form is analytic; may extend below `-1`.
    pub fn analytic_extent(&self) -> Interval {
        self.expr.extent()
    }

    /// The FCGF domain: analytic extent intersected with `(-1, inf)`.
    pub fn domain(&self) -> Interval {
        self.analytic_extent().intersect(&Interval::new(-1.0, f64::INFINITY))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !self.analytic_extent().contains(t) {
            return Err(domain(format!("t = {t} is outside the domain")));
        }
        let v = self.expr.eval(t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow(format!("C({t}) = {v}")))
        }
    }

    /// Taylor coefficients of `u -> C(t0 + u)`.
    pub fn taylor_at(&self, t0: f64, order: usize) -> Result<PowerSeries> {
        self.expr.taylor(t0, order)
    }

    /// `k`-th derivative of `C` at `t`.
    pub fn derivative(&self, t: f64, k: usize) -> Result<f64> {
        Ok(self.taylor_at(t, k)?.coeff(k) * factorial(k))
    }

    /// Factorial cumulants `C'(0), .., C^(n)(0)`.
    pub fn cumulants(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(invalid("need at least one cumulant"));
        }
        if !self.analytic_extent().contains(0.0) {
            return Err(domain("0 is not interior to the domain"));
        }
        let s = self.taylor_at(0.0, n)?;
        Ok((1..=n).map(|k| s.coeff(k) * factorial(k)).collect())
    }

    pub fn mean(&self) -> Result<f64> {
        self.derivative(0.0, 1)
    }

    pub fn dispersion(&self) -> Result<f64> {
        self.derivative(0.0, 2)
    }

    /// `t -> C(ct)`. For `c > 1` the distribution must be infinitely dilatable.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("dilation factor must be positive, got {c}")));
        }
        if c > 1.0 && !self.infinitely_dilatable {
            return Err(Error::DilationUnavailable(c));
        }
        self.dilate_unflagged(c)
    }

    fn dilate_unflagged(&self, c: f64) -> Result<Self> {
        let e = self.expr.as_ref().clone().compose(&Mobius::affine(c, 0.0))?;
        Ok(self.derived(e, self.infinitely_divisible, self.infinitely_dilatable))
    }

    /// Dilation that, for `c > 1` on a distribution not known to be infinitely
    /// dilatable, is accepted when the resulting PMF is non-negative to `cfg.order`.
    pub fn dilate_validated(&self, c: f64, cfg: &PmfConfig) -> Result<Self> {
        if c <= 1.0 || self.infinitely_dilatable {
            return self.dilate(c);
        }
        if !(c.is_finite()) {
            return Err(invalid(format!("dilation factor must be finite, got {c}")));
        }
        let out = self.dilate_unflagged(c)?;
        out.certify(cfg).map_err(|e| match e {
            Error::NegativeProbability { .. } => Error::DilationUnavailable(c),
            other => other,
        })?;
        Ok(Self { infinitely_divisible: false, ..out })
    }

    /// Negative-binomial thinning: `t -> C(ct / (1 - ct))`.
    pub fn geometric_thin(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("thinning factor must be positive, got {c}")));
        }
        if !self.counts {
            return Err(invalid("geometric thinning needs a non-negative variable"));
        }
        let e = self.expr.as_ref().clone().compose(&Mobius::new(c, 0.0, -c, 1.0))?;
        Ok(self.derived(e, self.infinitely_divisible, true))
    }

    /// Adds an independent Poisson(`mu`) component.
    pub fn translate(&self, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid(format!("translation must be >= 0, got {mu}")));
        }
        let e = Expr::sum(vec![self.expr.as_ref().clone(), Expr::Linear(mu)]);
        Ok(self.derived(e, self.infinitely_divisible, self.infinitely_dilatable))
    }

    /// Removes a Poisson(`mu`) component; the result is certified by PMF
    /// non-negativity up to `cfg.order`.
    pub fn subtract(&self, mu: f64, cfg: &PmfConfig) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid(format!("subtraction must be >= 0, got {mu}")));
        }
        let e = Expr::sum(vec![self.expr.as_ref().clone(), Expr::Linear(-mu)]);
        let out = self.derived(e, false, false);
        out.certify(cfg)?;
        Ok(out)
    }

    /// Factorial tilting `C(theta + t) - C(theta)`.
    ///
    /// For infinitely dilatable laws `theta` may lie anywhere in the analytic
    /// extent, including below `-1`; otherwise it must lie in the domain.
    pub fn tilt(&self, theta: f64) -> Result<Self> {
        let allowed = if self.infinitely_dilatable { self.analytic_extent() } else { self.domain() };
        self.tilt_within(theta, allowed)
    }

    /// Tilt checked against a caller-supplied range of valid tilts.
    pub(crate) fn tilt_within(&self, theta: f64, allowed: Interval) -> Result<Self> {
        if !allowed.contains(theta) {
            return Err(domain(format!(
                "tilt {theta} outside ({}, {})",
                allowed.lo, allowed.hi
            )));
        }
        let e = self.expr.as_ref().clone().compose(&Mobius::affine(1.0, theta))?;
        Ok(self.derived(e, self.infinitely_divisible, self.infinitely_dilatable))
    }

    /// M-transform `t -> C(t / (1 + a t))`, unvalidated.
    pub fn m_transform(&self, a: f64) -> Result<Self> {
        if !(a > -1.0 && a.is_finite()) {
            return Err(invalid(format!("M-transform parameter must exceed -1, got {a}")));
        }
        if a == 0.0 {
            return Ok(self.clone());
        }
        let e = self.expr.as_ref().clone().compose(&Mobius::new(1.0, 0.0, a, 1.0))?;
        Ok(self.derived(e, false, false))
    }

    /// M-transform certified by PMF non-negativity up to `cfg.order`.
    pub fn m_transform_checked(&self, a: f64, cfg: &PmfConfig) -> Result<Self> {
        let out = self.m_transform(a)?;
        out.certify(cfg)?;
        Ok(out)
    }

    /// FCGF of `-X`: `t -> C(-t / (1 + t))`.
    pub fn reflect(&self) -> Result<Self> {
        let e = self.expr.as_ref().clone().compose(&Mobius::new(-1.0, 0.0, 1.0, 1.0))?;
        Ok(Self {
            expr: Arc::new(e),
            infinitely_divisible: false,
            infinitely_dilatable: false,
            counts: false,
        })
    }

    /// `lambda C`, the `lambda`-fold convolution power.
    pub fn convolution_power(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("convolution power must be positive, got {lambda}")));
        }
        if lambda.fract() != 0.0 && !self.infinitely_divisible {
            return Err(invalid(format!(
                "non-integer convolution power {lambda} needs an infinitely divisible law"
            )));
        }
        let e = self.expr.as_ref().clone().scale(lambda);
        Ok(self.derived(e, self.infinitely_divisible, self.infinitely_dilatable))
    }

    /// Independent sum.
    pub fn convolve(&self, other: &AnalyticFcgf) -> Self {
        Self {
            expr: Arc::new(Expr::sum(vec![self.expr.as_ref().clone(), other.expr.as_ref().clone()])),
            infinitely_divisible: self.infinitely_divisible && other.infinitely_divisible,
            infinitely_dilatable: self.infinitely_dilatable && other.infinitely_dilatable,
            counts: self.counts && other.counts,
        }
    }

    /// Raw PGF coefficients `p_0..p_order`, unvalidated.
    pub(crate) fn pmf_coefficients(&self, order: usize) -> Result<Vec<f64>> {
        if !self.counts {
            return Err(Error::Unsupported("PMF of a variable with negative support".into()));
        }
        let mut tables = Vec::new();
        let mut rest = Vec::new();
        for term in self.expr.terms() {
            match term.direct_pgf(order) {
                Some(p) => tables.push(p?),
                None => rest.push(term.clone()),
            }
        }
        if !rest.is_empty() {
            let r = Expr::sum(rest);
            if !r.extent().contains(-1.0) {
                return Err(domain(
                    "-1 is not interior to the domain (P(X=0) = 0 or C(-1) undefined)",
                ));
            }
            let h = r.taylor(-1.0, order)?;
            tables.push(exp_series(&h)?.into_coeffs());
        }
        let mut acc = tables.pop().expect("at least one term");
        for t in tables {
            let a = PmfTable::with_tail(acc, 0.0, 1.0);
            let b = PmfTable::with_tail(t, 0.0, 1.0);
            acc = convolve_to(&a, &b, order).probs().to_vec();
        }
        Ok(acc)
    }

    /// Checks that the PMF is a probability sequence up to `cfg.order`.
    pub fn certify(&self, cfg: &PmfConfig) -> Result<()> {
        let probs = self.pmf_coefficients(cfg.order)?;
        match PmfTable::from_probs(probs, cfg.tail_tol) {
            Ok(_) => Ok(()),
            Err(Error::NegativeProbability { index, value }) => Err(Error::NotAnFcgf(format!(
                "PMF coefficient {value:e} at k={index} is negative"
            ))),
            Err(e) => Err(e),
        }
    }

    /// True iff `C'' >= -1e-10` at every grid point.
    pub fn convexity_check(&self, grid: &[f64]) -> bool {
        grid.iter()
            .all(|&t| matches!(self.derivative(t, 2), Ok(v) if v >= -1e-10))
    }

    pub fn report(&self) -> Result<DispersionReport> {
        let s = self.taylor_at(0.0, 2)?;
        let mean = s.coeff(1);
        let dispersion = 2.0 * s.coeff(2);
        let fisher_index = (mean > 0.0).then(|| 1.0 + dispersion / mean);
        let zero_inflation = if mean > 0.0 && self.analytic_extent().closure_contains(-1.0) {
            let c = self.expr.eval(-1.0);
            c.is_finite().then(|| 1.0 + c / mean)
        } else {
            None
        };
        Ok(DispersionReport { mean, dispersion, fisher_index, zero_inflation })
    }
}

pub fn report(f: &AnalyticFcgf) -> Result<DispersionReport> {
    f.report()
}

pub fn cumulants(f: &AnalyticFcgf, n: usize) -> Result<Vec<f64>> {
    f.cumulants(n)
}

pub fn convexity_check(f: &AnalyticFcgf, grid: &[f64]) -> bool {
    f.convexity_check(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::pmf_from_fcgf;
    use approx::assert_abs_diff_eq;

    fn geometric(mu: f64) -> AnalyticFcgf {
        AnalyticFcgf::from_expr(Expr::Log { w: -1.0, s: -mu }, true, true)
    }

    fn bernoulli(q: f64) -> AnalyticFcgf {
        AnalyticFcgf::from_expr(Expr::Log { w: 1.0, s: q }, false, false)
    }

    fn finite_diff(f: &AnalyticFcgf, t: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (f.eval(t + h).unwrap() - f.eval(t - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn poisson_cumulants() {
        let c = AnalyticFcgf::poisson(3.0).unwrap().cumulants(4).unwrap();
        assert_eq!(c, vec![3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn geometric_first_cumulants() {
        let g = geometric(2.0);
        let c = g.cumulants(2).unwrap();
        assert_abs_diff_eq!(c[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[1], 4.0, epsilon = 1e-14);
        assert!((finite_diff(&g, 0.0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn dilating_geometric_by_three() {
        let g = geometric(2.0).dilate(3.0).unwrap();
        for t in [-0.1, 0.05, 0.1] {
            assert_abs_diff_eq!(g.eval(t).unwrap(), -(1.0 - 6.0 * t).ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn bernoulli_cannot_be_dilated_up() {
        assert_eq!(bernoulli(0.5).dilate(2.0).unwrap_err(), Error::DilationUnavailable(2.0));
        assert!(!bernoulli(0.5).convexity_check(&[-0.5, 0.0, 0.5]));
        assert!(geometric(1.0).convexity_check(&[-0.5, 0.0, 0.5]));
    }

    #[test]
    fn poisson_dilation_translation() {
        let p = AnalyticFcgf::poisson(2.0).unwrap();
        assert_abs_diff_eq!(p.dilate(0.3).unwrap().mean().unwrap(), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p.translate(1.0).unwrap().mean().unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn geometric_thinning_of_point_mass() {
        let one = AnalyticFcgf::from_expr(Expr::Log { w: 1.0, s: 1.0 }, false, false);
        let g = one.geometric_thin(0.7).unwrap();
        for t in [-0.9, 0.0, 0.5] {
            assert_abs_diff_eq!(g.eval(t).unwrap(), -(1.0 - 0.7 * t).ln(), epsilon = 1e-14);
        }
        assert!(g.is_infinitely_dilatable());
    }

    #[test]
    fn reflect_after_geometric_thinning() {
        // C(t; -X) = C(-t; Y) for X = Po(lambda), Y = geometric_thin(X, 1)
        let lambda = 1.5;
        let x = AnalyticFcgf::poisson(lambda).unwrap();
        let y = x.geometric_thin(1.0).unwrap();
        let r = x.reflect().unwrap();
        for t in [-0.5, -0.2, 0.3, 2.0] {
            assert_abs_diff_eq!(r.eval(t).unwrap(), y.eval(-t).unwrap(), epsilon = 1e-13);
        }
        assert!(!r.is_count_valued());
    }

    #[test]
    fn subtract_short_within_bound() {
        let short = AnalyticFcgf::from_expr(
            Expr::sum(vec![Expr::Exp { a: 1.0, r: 1.0 }, Expr::Linear(2.0)]),
            true,
            true,
        );
        let cfg = PmfConfig::with_order(64);
        assert!(short.subtract(2.0, &cfg).is_ok());
        assert!(matches!(short.subtract(2.5, &cfg), Err(Error::NotAnFcgf(_))));
        let po = AnalyticFcgf::poisson(1.0).unwrap();
        assert!(matches!(po.subtract(2.0, &cfg), Err(Error::NotAnFcgf(_))));
    }

    #[test]
    fn tilting_nb_base() {
        let base = AnalyticFcgf::from_expr(Expr::Log { w: -2.0, s: -1.0 }, true, true);
        let theta = 0.4;
        let t = base.tilt(theta).unwrap();
        let mu = 1.0 / (1.0 - theta);
        for x in [-0.5, 0.1] {
            assert_abs_diff_eq!(t.eval(x).unwrap(), -2.0 * (1.0 - mu * x).ln(), epsilon = 1e-14);
        }
        let tt = base.tilt(0.1).unwrap().tilt(0.2).unwrap();
        let direct = base.tilt(0.3).unwrap();
        assert_abs_diff_eq!(tt.eval(0.2).unwrap(), direct.eval(0.2).unwrap(), epsilon = 1e-14);
        assert!(base.tilt(1.0).is_err());
    }

    #[test]
    fn m_transform_nb_to_binomial() {
        for (n, mu) in [(1.0, 0.5), (3.0, 0.5), (1.0, 1.0), (3.0, 1.0)] {
            let nb = AnalyticFcgf::from_expr(Expr::Log { w: -n, s: -mu }, true, true);
            let b = nb.m_transform(mu).unwrap();
            let table = pmf_from_fcgf(&b, &PmfConfig::with_order(10)).unwrap();
            let direct = PmfTable::binomial(n as u64, mu, 10).unwrap();
            for k in 0..=10 {
                assert_abs_diff_eq!(table.prob(k), direct.prob(k), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn m_transform_moments() {
        let g = geometric(1.5);
        let a = 0.3;
        let m = g.m_transform(a).unwrap();
        let before = g.report().unwrap();
        let after = m.report().unwrap();
        assert_abs_diff_eq!(after.mean, before.mean, epsilon = 1e-13);
        assert_abs_diff_eq!(after.dispersion, before.dispersion - 2.0 * a * before.mean, epsilon = 1e-12);
    }

    #[test]
    fn m_transform_inverse_pair() {
        // M-transforms compose additively in a, so -a undoes a
        let g = geometric(0.8);
        let a = 0.5;
        let back = g.m_transform(a).unwrap().m_transform(-a).unwrap();
        for t in [-0.5, 0.0, 0.3] {
            assert_abs_diff_eq!(back.eval(t).unwrap(), g.eval(t).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn reports() {
        let r = AnalyticFcgf::poisson(2.0).unwrap().report().unwrap();
        assert_eq!((r.dispersion, r.fisher_index, r.zero_inflation), (0.0, Some(1.0), Some(0.0)));
        let b = bernoulli(0.3).report().unwrap();
        assert_abs_diff_eq!(b.dispersion, -0.09, epsilon = 1e-15);
        let j = serde_json::to_value(r).unwrap();
        for key in ["mean", "dispersion", "fisher_index", "zero_inflation"] {
            assert!(j.get(key).is_some());
        }
    }

    #[test]
    fn pmf_rejects_zero_mass_at_zero() {
        // shifted geometric: C(t) = log(1+t) - log(1 - mu t)
        let f = AnalyticFcgf::from_expr(
            Expr::sum(vec![Expr::Log { w: 1.0, s: 2.0 }, Expr::Log { w: -1.0, s: -1.0 }]),
            false,
            false,
        );
        assert!(matches!(f.certify(&PmfConfig::with_order(8)), Err(Error::Domain(_))));
    }
}
