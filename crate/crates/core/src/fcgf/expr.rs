//! Closed-form building blocks of FCGFs and their Taylor data.
//!
//! Every node represents a function `C` with `C(0) = 0`. Argument maps
//! (dilation, tilting, M-transform, geometric thinning, reflection) are
//! Möbius maps `g`, and composing a node with `g` yields `C(g(t)) - C(g(0))`.
//! Where a leaf admits it, the composition is rewritten into leaves of the
//! same kind so that Taylor data stays closed form.

use statrs::function::gamma::ln_gamma;

use super::com::{self, LogValue};
use super::Interval;
use crate::error::{domain, Result};
use crate::series::{binomial_term, log_series, PowerSeries};

/// `t -> (a t + b) / (c t + d)` with `d != 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Mobius {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mobius {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        if c == 0.0 && d != 1.0 && d != 0.0 {
            Self { a: a / d, b: b / d, c: 0.0, d: 1.0 }
        } else {
            Self { a, b, c, d }
        }
    }

    pub fn affine(scale: f64, shift: f64) -> Self {
        Self { a: scale, b: shift, c: 0.0, d: 1.0 }
    }

    pub fn is_affine(&self) -> bool {
        self.c == 0.0
    }

    pub fn is_identity(&self) -> bool {
        self.a == 1.0 && self.b == 0.0 && self.c == 0.0 && self.d == 1.0
    }

    pub fn apply(&self, t: f64) -> f64 {
        (self.a * t + self.b) / (self.c * t + self.d)
    }

    /// `self(inner(t))`.
    pub fn after(&self, inner: &Mobius) -> Mobius {
        Mobius::new(
            self.a * inner.a + self.b * inner.c,
            self.a * inner.b + self.b * inner.d,
            self.c * inner.a + self.d * inner.c,
            self.c * inner.b + self.d * inner.d,
        )
    }

    fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// The connected piece of the real line, containing 0, on which `g` is finite.
    pub fn branch(&self) -> Interval {
        if self.c == 0.0 {
            return Interval::all();
        }
        let pole = -self.d / self.c;
        if pole > 0.0 {
            Interval::new(f64::NEG_INFINITY, pole)
        } else {
            Interval::new(pole, f64::INFINITY)
        }
    }

    /// Taylor coefficients of `g(t0 + u) - g(t0)`.
    pub fn increment_series(&self, t0: f64, order: usize) -> PowerSeries {
        let den = self.c * t0 + self.d;
        let lead = self.det() / (den * den);
        let ratio = -self.c / den;
        let mut coeffs = vec![0.0; order + 1];
        let mut term = lead;
        for coeff in coeffs.iter_mut().skip(1) {
            *coeff = term;
            term *= ratio;
        }
        PowerSeries::raw(coeffs)
    }

    /// Points of the branch through 0 that `g` maps into `target`.
    pub fn preimage(&self, target: &Interval) -> Interval {
        let branch = self.branch();
        let det = self.det();
        if det == 0.0 {
            return if target.contains(self.apply(0.0)) { branch } else { Interval::empty() };
        }
        let limit = |e: f64| -> f64 {
            if e.is_infinite() {
                if self.c == 0.0 {
                    e * (self.a / self.d).signum()
                } else {
                    self.a / self.c
                }
            } else {
                // `e` is the pole
                let side = if e == branch.hi { 1.0 } else { -1.0 };
                f64::INFINITY * det.signum() * side
            }
        };
        let (l1, l2) = (limit(branch.lo), limit(branch.hi));
        let increasing = det > 0.0;
        let (img, lo_end, hi_end) = if increasing {
            (Interval::new(l1, l2), branch.lo, branch.hi)
        } else {
            (Interval::new(l2, l1), branch.hi, branch.lo)
        };
        let j = img.intersect(target);
        if j.is_empty() {
            return Interval::empty();
        }
        let inverse = |y: f64| (self.d * y - self.b) / (self.a - self.c * y);
        let p_lo = if j.lo == img.lo { lo_end } else { inverse(j.lo) };
        let p_hi = if j.hi == img.hi { hi_end } else { inverse(j.hi) };
        Interval::new(p_lo.min(p_hi), p_lo.max(p_hi)).intersect(&branch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Expr {
    /// `mu t`
    Linear(f64),
    /// `sum_j p_j t^j`, with `p_0 = 0`
    Poly(Vec<f64>),
    /// `w log(1 + s t)`
    Log { w: f64, s: f64 },
    /// `a ((1 + b t)^alpha - 1)`
    Power { a: f64, b: f64, alpha: f64 },
    /// `a (exp(r t) - 1)`
    Exp { a: f64, r: f64 },
    /// `-b log(1 + kappa (-x)^alpha) + b log(1 + kappa (-shift)^alpha)`, `x = shift + dil t`
    Linnik { b: f64, kappa: f64, alpha: f64, shift: f64, dil: f64 },
    /// `log Z(lambda (base + dil t)) - log Z(lambda base)`
    Com { lambda: f64, nu: f64, base: f64, dil: f64, log_z0: f64 },
    Sum(Vec<Expr>),
    Scaled(f64, Box<Expr>),
    /// `inner(map(t)) - inner(map(0))`
    Composed { inner: Box<Expr>, map: Mobius },
}

fn is_nonneg_int(x: f64) -> bool {
    x >= 0.0 && x.fract() == 0.0 && x < 1e9
}

fn is_pos_int_approx(x: f64) -> bool {
    x >= 0.5 && (x - x.round()).abs() < 1e-12 && x < 1e9
}

/// Coefficients of `p(x0 + u)`.
fn taylor_shift(p: &[f64], x0: f64) -> Vec<f64> {
    let mut c = p.to_vec();
    let n = c.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            c[j] += x0 * c[j + 1];
        }
    }
    c
}

fn ln_fact(k: usize) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

fn log_interval(s: f64) -> Interval {
    if s > 0.0 {
        Interval::new(-1.0 / s, f64::INFINITY)
    } else if s < 0.0 {
        Interval::new(f64::NEG_INFINITY, -1.0 / s)
    } else {
        Interval::all()
    }
}

/// Coefficients of `scale (1 + rho u)^alpha` in log space, `z` already folded into `scale`.
fn binomial_series(scale: f64, rho: f64, alpha: f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    out[0] = scale;
    if scale == 0.0 || rho == 0.0 {
        return out;
    }
    let mut log_mag = scale.abs().ln();
    let mut sign = scale.signum();
    let lr = rho.abs().ln();
    for (k, coeff) in out.iter_mut().enumerate().skip(1) {
        let f = alpha - (k - 1) as f64;
        if f == 0.0 {
            break;
        }
        log_mag += f.abs().ln() - (k as f64).ln() + lr;
        sign *= f.signum() * rho.signum();
        *coeff = sign * log_mag.exp();
    }
    out
}

impl Expr {
    pub fn extent(&self) -> Interval {
        match self {
            Expr::Linear(_) | Expr::Poly(_) | Expr::Exp { .. } => Interval::all(),
            Expr::Log { s, .. } => log_interval(*s),
            Expr::Power { b, alpha, .. } => {
                if is_nonneg_int(*alpha) {
                    Interval::all()
                } else {
                    log_interval(*b)
                }
            }
            Expr::Linnik { shift, dil, .. } => {
                let edge = -shift / dil;
                if *dil > 0.0 {
                    Interval::new(f64::NEG_INFINITY, edge)
                } else {
                    Interval::new(edge, f64::INFINITY)
                }
            }
            Expr::Com { lambda, base, dil, .. } => {
                let edge = (-1.0 / lambda - base) / dil;
                if *dil > 0.0 {
                    Interval::new(edge, f64::INFINITY)
                } else {
                    Interval::new(f64::NEG_INFINITY, edge)
                }
            }
            Expr::Sum(parts) => parts
                .iter()
                .fold(Interval::all(), |acc, p| acc.intersect(&p.extent())),
            Expr::Scaled(_, inner) => inner.extent(),
            Expr::Composed { inner, map } => map.preimage(&inner.extent()),
        }
    }

    /// Value at `t`; may be NaN or infinite outside the extent.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Expr::Linear(mu) => mu * t,
            Expr::Poly(p) => p.iter().rev().fold(0.0, |acc, &c| acc * t + c),
            Expr::Log { w, s } => {
                if *s == 0.0 {
                    0.0
                } else {
                    w * (s * t).ln_1p()
                }
            }
            Expr::Power { a, b, alpha } => {
                if is_nonneg_int(*alpha) {
                    a * ((1.0 + b * t).powi(*alpha as i32) - 1.0)
                } else if 1.0 + b * t <= 0.0 {
                    f64::NAN
                } else {
                    a * (alpha * (b * t).ln_1p()).exp_m1()
                }
            }
            Expr::Exp { a, r } => a * (r * t).exp_m1(),
            Expr::Linnik { b, kappa, alpha, shift, dil } => {
                let x = shift + dil * t;
                if x > 0.0 {
                    return f64::NAN;
                }
                -b * (kappa * (-x).powf(*alpha)).ln_1p()
                    + b * (kappa * (-shift).powf(*alpha)).ln_1p()
            }
            Expr::Com { lambda, nu, base, dil, log_z0 } => {
                match com::log_normalizer(lambda * (base + dil * t), *nu) {
                    Ok(l) => l - log_z0,
                    Err(_) => f64::NAN,
                }
            }
            Expr::Sum(parts) => parts.iter().map(|p| p.eval(t)).sum(),
            Expr::Scaled(lambda, inner) => lambda * inner.eval(t),
            Expr::Composed { inner, map } => {
                inner.eval(map.apply(t)) - inner.eval(map.apply(0.0))
            }
        }
    }

    /// Taylor coefficients of `u -> C(t0 + u)`, orders `0..=order`.
    pub fn taylor(&self, t0: f64, order: usize) -> Result<PowerSeries> {
        if !self.extent().contains(t0) {
            return Err(domain(format!("t = {t0} is outside the analytic domain")));
        }
        let series = match self {
            Expr::Linear(mu) => {
                let mut c = vec![0.0; order + 1];
                c[0] = mu * t0;
                if order >= 1 {
                    c[1] = *mu;
                }
                PowerSeries::raw(c)
            }
            Expr::Poly(p) => {
                let mut c = taylor_shift(p, t0);
                c.resize(order.max(p.len() - 1) + 1, 0.0);
                c.truncate(order + 1);
                PowerSeries::raw(c)
            }
            Expr::Log { w, s } => {
                let z = 1.0 + s * t0;
                let rho = s / z;
                let mut c = vec![0.0; order + 1];
                c[0] = w * (s * t0).ln_1p();
                if *s != 0.0 {
                    let lr = rho.abs().ln();
                    for (k, coeff) in c.iter_mut().enumerate().skip(1) {
                        let sign = if k % 2 == 1 { 1.0 } else { -1.0 } * rho.signum().powi(k as i32);
                        *coeff = w * sign * (k as f64 * lr - (k as f64).ln()).exp();
                    }
                }
                PowerSeries::raw(c)
            }
            Expr::Power { a, b, alpha } => {
                let z = 1.0 + b * t0;
                let mut c = if is_nonneg_int(*alpha) {
                    let n = *alpha as usize;
                    let mut c = vec![0.0; order + 1];
                    let mut binom = 1.0;
                    for k in 0..=n.min(order) {
                        if k > 0 {
                            binom *= (n - k + 1) as f64 / k as f64;
                        }
                        c[k] = a * binom * z.powi((n - k) as i32) * b.powi(k as i32);
                    }
                    c
                } else {
                    let za = (alpha * (b * t0).ln_1p()).exp();
                    binomial_series(a * za, b / z, *alpha, order)
                };
                c[0] = self.eval(t0);
                PowerSeries::raw(c)
            }
            Expr::Exp { a, r } => {
                let mut c = vec![0.0; order + 1];
                c[0] = a * (r * t0).exp_m1();
                if *r != 0.0 && *a != 0.0 {
                    let la = a.abs().ln() + r * t0;
                    let lr = r.abs().ln();
                    for (k, coeff) in c.iter_mut().enumerate().skip(1) {
                        let sign = a.signum() * r.signum().powi(k as i32);
                        *coeff = sign * (la + k as f64 * lr - ln_fact(k)).exp();
                    }
                }
                PowerSeries::raw(c)
            }
            Expr::Linnik { b, kappa, alpha, shift, dil } => {
                let s = -(shift + dil * t0);
                let inner = binomial_series(kappa * s.powf(*alpha), -dil / s, *alpha, order);
                let mut y = inner;
                y[0] += 1.0;
                let mut h = log_series(&PowerSeries::raw(y))?.scaled(-b);
                h.coeffs_mut()[0] += b * (kappa * (-shift).powf(*alpha)).ln_1p();
                h
            }
            Expr::Com { lambda, nu, base, dil, log_z0 } => {
                let w = base + dil * t0;
                let t = com::normalizer_taylor(*lambda, *nu, w, *dil, order)?;
                if t[0].sign <= 0.0 {
                    return Err(domain("normalizer is not positive"));
                }
                let l0 = t[0].log_abs;
                let normalized: Vec<f64> = t
                    .iter()
                    .map(|v| LogValue { log_abs: v.log_abs - l0, sign: v.sign }.value())
                    .collect();
                let mut h = log_series(&PowerSeries::raw(normalized))?;
                h.coeffs_mut()[0] = l0 - log_z0;
                h
            }
            Expr::Sum(parts) => {
                let mut acc = PowerSeries::zeros(order);
                for p in parts {
                    acc.add_assign(&p.taylor(t0, order)?);
                }
                acc
            }
            Expr::Scaled(lambda, inner) => inner.taylor(t0, order)?.scaled(*lambda),
            Expr::Composed { inner, map } => {
                let y0 = map.apply(t0);
                let outer = inner.taylor(y0, order)?;
                let g = map.increment_series(t0, order);
                let mut r = outer.compose(&g)?;
                r.coeffs_mut()[0] = outer.coeff(0) - inner.eval(map.apply(0.0));
                r
            }
        };
        series.check_finite()
    }

    /// `lambda * C`.
    pub fn scale(self, lambda: f64) -> Expr {
        if lambda == 1.0 {
            return self;
        }
        match self {
            Expr::Linear(mu) => Expr::Linear(lambda * mu),
            Expr::Poly(p) => Expr::Poly(p.into_iter().map(|c| lambda * c).collect()),
            Expr::Log { w, s } => Expr::Log { w: lambda * w, s },
            Expr::Power { a, b, alpha } => Expr::Power { a: lambda * a, b, alpha },
            Expr::Exp { a, r } => Expr::Exp { a: lambda * a, r },
            Expr::Linnik { b, kappa, alpha, shift, dil } => {
                Expr::Linnik { b: lambda * b, kappa, alpha, shift, dil }
            }
            Expr::Sum(parts) => Expr::Sum(parts.into_iter().map(|p| p.scale(lambda)).collect()),
            Expr::Scaled(l2, inner) => Expr::Scaled(lambda * l2, inner),
            Expr::Composed { inner, map } => Expr::Composed { inner: Box::new(inner.scale(lambda)), map },
            com @ Expr::Com { .. } => Expr::Scaled(lambda, Box::new(com)),
        }
    }

    /// Sum of terms with like leaves merged.
    pub fn sum(parts: Vec<Expr>) -> Expr {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Expr::Sum(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        let mut linear = 0.0;
        let mut logs: Vec<(f64, f64)> = Vec::new();
        let mut rest = Vec::new();
        for p in flat {
            match p {
                Expr::Linear(mu) => linear += mu,
                Expr::Log { w, s } => {
                    if let Some(entry) = logs
                        .iter_mut()
                        .find(|(_, s2)| (s - *s2).abs() <= 1e-14 * s.abs().max(s2.abs()))
                    {
                        entry.0 += w;
                    } else {
                        logs.push((w, s));
                    }
                }
                other => rest.push(other),
            }
        }
        let scale = logs.iter().map(|(w, _)| w.abs()).fold(0.0, f64::max);
        let mut out = Vec::new();
        if linear != 0.0 {
            out.push(Expr::Linear(linear));
        }
        for (w, s) in logs {
            if s != 0.0 && w.abs() > 1e-13 * scale {
                out.push(Expr::Log { w, s });
            }
        }
        out.extend(rest);
        match out.len() {
            0 => Expr::Linear(0.0),
            1 => out.pop().expect("one element"),
            _ => Expr::Sum(out),
        }
    }

    /// `C(m(t)) - C(m(0))`, rewritten into leaves where possible.
    pub fn compose(self, m: &Mobius) -> Result<Expr> {
        if m.is_identity() {
            return Ok(self);
        }
        let y0 = m.apply(0.0);
        if !y0.is_finite() || !self.extent().contains(y0) {
            return Err(domain(format!("argument map sends 0 to {y0}, outside the domain")));
        }
        let Mobius { a, b, c, d } = *m;
        Ok(match self {
            Expr::Linear(mu) => {
                if m.is_affine() {
                    Expr::Linear(mu * a)
                } else {
                    let r = c / d;
                    let k = (a * d - b * c) / (d * d);
                    Expr::Power { a: -mu * k / r, b: r, alpha: -1.0 }
                }
            }
            Expr::Log { w, s } => {
                let q = d + s * b;
                Expr::sum(vec![
                    Expr::Log { w, s: (c + s * a) / q },
                    Expr::Log { w: -w, s: c / d },
                ])
            }
            Expr::Poly(p) if m.is_affine() => {
                let mut out = taylor_shift(&p, b);
                let mut scale = 1.0;
                for coef in out.iter_mut() {
                    *coef *= scale;
                    scale *= a;
                }
                out[0] = 0.0;
                Expr::Poly(out)
            }
            Expr::Power { a: pa, b: pb, alpha } if m.is_affine() => {
                let z = 1.0 + pb * b;
                if z == 0.0 || (z < 0.0 && !is_nonneg_int(alpha)) {
                    Expr::Composed { inner: Box::new(Expr::Power { a: pa, b: pb, alpha }), map: *m }
                } else {
                    let za = if is_nonneg_int(alpha) { z.powi(alpha as i32) } else { z.powf(alpha) };
                    Expr::Power { a: pa * za, b: pb * a / z, alpha }
                }
            }
            Expr::Exp { a: ea, r } if m.is_affine() => Expr::Exp { a: ea * (r * b).exp(), r: r * a },
            Expr::Linnik { b: lb, kappa, alpha, shift, dil } if m.is_affine() => {
                Expr::Linnik { b: lb, kappa, alpha, shift: shift + dil * b, dil: dil * a }
            }
            Expr::Com { lambda, nu, base, dil, .. } if m.is_affine() => {
                let base = base + dil * b;
                let log_z0 = com::log_normalizer(lambda * base, nu)?;
                Expr::Com { lambda, nu, base, dil: dil * a, log_z0 }
            }
            Expr::Sum(parts) => {
                Expr::sum(parts.into_iter().map(|p| p.compose(m)).collect::<Result<Vec<_>>>()?)
            }
            Expr::Scaled(lambda, inner) => inner.compose(m)?.scale(lambda),
            Expr::Composed { inner, map } => inner.compose(&map.after(m))?,
            leaf => Expr::Composed { inner: Box::new(leaf), map: *m },
        })
    }

    /// Top-level summands.
    pub fn terms(&self) -> Vec<&Expr> {
        match self {
            Expr::Sum(parts) => parts.iter().collect(),
            other => vec![other],
        }
    }

    /// PGF coefficients computed without going through `exp`, when the leaf
    /// is a binomial or a COM-Poisson law.
    pub fn direct_pgf(&self, order: usize) -> Option<Result<Vec<f64>>> {
        match self {
            Expr::Log { w, s } if is_pos_int_approx(*w) && *s > 0.0 && *s <= 1.0 => {
                let n = w.round() as u64;
                Some(Ok((0..=order as u64).map(|k| binomial_term(n, k, *s)).collect()))
            }
            Expr::Com { lambda, nu, base, dil, log_z0 } => {
                let w = base - dil;
                Some(com::normalizer_taylor(*lambda, *nu, w, *dil, order).map(|t| {
                    t.into_iter()
                        .map(|v| LogValue { log_abs: v.log_abs - log_z0, sign: v.sign }.value())
                        .collect()
                }))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn numeric_derivative(e: &Expr, t: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (e.eval(t + h) - e.eval(t - h)) / (2.0 * h)
    }

    fn leaves() -> Vec<Expr> {
        vec![
            Expr::Linear(1.3),
            Expr::Poly(vec![0.0, 2.0, 0.5]),
            Expr::Log { w: -2.0, s: -0.7 },
            Expr::Log { w: 3.0, s: 0.4 },
            Expr::Power { a: 1.5, b: -0.8, alpha: -1.5 },
            Expr::Power { a: -2.0, b: -1.2, alpha: 0.5 },
            Expr::Power { a: 0.7, b: 0.6, alpha: 3.0 },
            Expr::Exp { a: 2.0, r: 0.9 },
            Expr::Linnik { b: 1.0, kappa: 1.0, alpha: 0.5, shift: -0.8, dil: 1.0 },
            Expr::Com { lambda: 1.2, nu: 1.7, base: 1.0, dil: 1.0, log_z0: com::log_normalizer(1.2, 1.7).unwrap() },
        ]
    }

    #[test]
    fn leaves_vanish_at_zero_and_match_numeric_slopes() {
        for e in leaves() {
            assert!(e.eval(0.0).abs() < 1e-15, "{e:?}");
            for t0 in [-0.5, -0.1, 0.0, 0.2] {
                if !e.extent().contains(t0) {
                    continue;
                }
                let s = e.taylor(t0, 3).unwrap();
                assert_relative_eq!(s.coeff(0), e.eval(t0), max_relative = 1e-12, epsilon = 1e-14);
                assert_relative_eq!(s.coeff(1), numeric_derivative(&e, t0), max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn taylor_sum_reproduces_values_nearby() {
        for e in leaves() {
            let t0 = -0.2;
            let s = e.taylor(t0, 40).unwrap();
            let u = 0.05;
            assert_relative_eq!(s.eval(u), e.eval(t0 + u), max_relative = 1e-10, epsilon = 1e-13);
        }
    }

    #[test]
    fn affine_composition_is_pushed_into_leaves() {
        let m = Mobius::affine(0.6, 0.15);
        for e in leaves() {
            let composed = e.clone().compose(&m).unwrap();
            assert!(!matches!(composed, Expr::Composed { .. }), "{composed:?}");
            for t in [-0.4, 0.1, 0.3] {
                let want = e.eval(m.apply(t)) - e.eval(m.apply(0.0));
                assert_relative_eq!(composed.eval(t), want, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn mobius_composition_matches_pointwise() {
        let m = Mobius::new(1.0, 0.0, 0.4, 1.0);
        for e in leaves() {
            let composed = e.clone().compose(&m).unwrap();
            for t in [-0.3, 0.1, 0.25] {
                let want = e.eval(m.apply(t)) - e.eval(0.0);
                assert_relative_eq!(composed.eval(t), want, max_relative = 1e-12, epsilon = 1e-14);
                let s = composed.taylor(t, 2).unwrap();
                let h = 1e-5;
                let d = (composed.eval(t + h) - composed.eval(t - h)) / (2.0 * h);
                assert_relative_eq!(s.coeff(1), d, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn log_under_mobius_stays_symbolic() {
        // -n log(1 - mu t) under t / (1 + mu t) is n log(1 + mu t)
        let nb = Expr::Log { w: -3.0, s: -0.5 };
        let out = nb.compose(&Mobius::new(1.0, 0.0, 0.5, 1.0)).unwrap();
        assert_eq!(out, Expr::Log { w: 3.0, s: 0.5 });
    }

    #[test]
    fn preimage_of_reflection() {
        // t -> -t / (1 + t) on (-1, inf) maps onto (-inf, 1); the preimage of (-0.5, inf) is (-1, 1)
        let m = Mobius::new(-1.0, 0.0, 1.0, 1.0);
        let p = m.preimage(&Interval::new(-0.5, f64::INFINITY));
        assert_relative_eq!(p.lo, -1.0);
        assert_relative_eq!(p.hi, 1.0);
    }

    #[test]
    fn preimage_of_geometric_thinning() {
        // t -> c t / (1 - c t), branch (-inf, 1/c), increasing onto (-1, inf)
        let c = 0.5;
        let m = Mobius::new(c, 0.0, -c, 1.0);
        let p = m.preimage(&Interval::new(-0.5, 3.0));
        assert_relative_eq!(p.lo, -1.0 / c);
        assert_relative_eq!(p.hi, 1.5, max_relative = 1e-14);
        let q = m.preimage(&Interval::all());
        assert_eq!(q.lo, f64::NEG_INFINITY);
        assert_relative_eq!(q.hi, 2.0);
    }

    #[test]
    fn binomial_leaf_has_direct_pgf() {
        let e = Expr::Log { w: 3.0, s: 1.0 };
        let p = e.direct_pgf(5).unwrap().unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
