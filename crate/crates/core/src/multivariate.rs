//! Multivariate counts: dispersion matrices `Cov(X) - diag(E X)`, their
//! classification, zero-inflation indices, a Poisson-Tweedie sampler and the
//! multivariate thinned-average experiment.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::asymptotics::{ConvergenceRun, Skipped, TargetSpec};
use crate::error::{domain, invalid, Error, Result};
use crate::series::{compensated_sum, PmfTable};
use crate::tweedie::{poisson, TweedieParams, TweedieSampler};

/// Mean vector and dispersion matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvDispersion {
    pub mean: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionClass {
    Equi,
    Over,
    Under,
    Indefinite,
}

impl std::fmt::Display for DispersionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DispersionClass::Equi => "equi",
            DispersionClass::Over => "over",
            DispersionClass::Under => "under",
            DispersionClass::Indefinite => "indefinite",
        };
        f.write_str(s)
    }
}

impl MvDispersion {
    pub fn new(mean: Vec<f64>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let k = mean.len();
        if k == 0 {
            return Err(invalid("empty mean vector"));
        }
        if matrix.len() != k || matrix.iter().any(|r| r.len() != k) {
            return Err(invalid(format!("dispersion matrix must be {k}x{k}")));
        }
        if mean.iter().chain(matrix.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(invalid("non-finite entries"));
        }
        if mean.iter().any(|&m| m < 0.0) {
            return Err(invalid("mean entries must be >= 0"));
        }
        let scale = 1.0 + matrix.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..k {
            for j in 0..i {
                let d = (matrix[i][j] - matrix[j][i]).abs();
                if d > 1e-12 * scale {
                    return Err(Error::Asymmetric(d));
                }
            }
            if matrix[i][i] < -mean[i] * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "diagonal entry {} below -mean {} (negative variance)",
                    matrix[i][i], mean[i]
                )));
            }
        }
        Ok(Self { mean, matrix })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| self.matrix[i][j])
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_matrix()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn determinant(&self) -> f64 {
        self.to_matrix().determinant()
    }

    /// `[c] S [c]` with mean `c * mean`: the dispersion of a coordinatewise dilation.
    pub fn diag_dilated(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim() || c.iter().any(|x| !(*x >= 0.0)) {
            return Err(invalid("dilation vector must have k non-negative entries"));
        }
        let k = self.dim();
        let mean = (0..k).map(|i| c[i] * self.mean[i]).collect();
        let matrix = (0..k)
            .map(|i| (0..k).map(|j| c[i] * self.matrix[i][j] * c[j]).collect())
            .collect();
        Self::new(mean, matrix)
    }

    /// Mean `A mu` and dispersion `A S A^T` of a matrix dilation with `A >= 0`.
    pub fn matrix_dilated(&self, a: &[Vec<f64>]) -> Result<Self> {
        let k = self.dim();
        if a.iter().any(|r| r.len() != k) || a.iter().flatten().any(|x| !(*x >= 0.0)) {
            return Err(invalid("dilation matrix must have k non-negative columns"));
        }
        let s = self.to_matrix();
        let am = DMatrix::from_fn(a.len(), k, |i, j| a[i][j]);
        let prod = &am * s * am.transpose();
        let mean = a
            .iter()
            .map(|r| r.iter().zip(&self.mean).map(|(x, m)| x * m).sum())
            .collect();
        let matrix = (0..a.len())
            .map(|i| (0..a.len()).map(|j| prod[(i, j)]).collect())
            .collect();
        Self::new(mean, matrix)
    }
}

/// Equi iff all eigenvalues are zero; tolerance `1e-10 (1 + ||S||)`.
pub fn classify(d: &MvDispersion) -> DispersionClass {
    let ev = d.eigenvalues();
    let norm = ev.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-10 * (1.0 + norm);
    let pos = ev.iter().any(|&x| x > tol);
    let neg = ev.iter().any(|&x| x < -tol);
    match (pos, neg) {
        (false, false) => DispersionClass::Equi,
        (true, false) => DispersionClass::Over,
        (false, true) => DispersionClass::Under,
        (true, true) => DispersionClass::Indefinite,
    }
}

/// Scalar summary of `c . X = sum c_i . X_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Combination {
    pub mean: f64,
    pub dispersion: f64,
    /// Set when the dispersion vanishes for `c != 0`: then `S` must be singular.
    pub singular: bool,
    pub determinant: f64,
}

pub fn dilate_combination(d: &MvDispersion, c: &[f64]) -> Result<Combination> {
    let k = d.dim();
    if c.len() != k {
        return Err(invalid(format!("coefficient vector must have length {k}")));
    }
    if c.iter().any(|x| !(*x >= 0.0)) {
        return Err(invalid("dilation coefficients must be >= 0"));
    }
    let mean = c.iter().zip(&d.mean).map(|(a, m)| a * m).sum();
    let mut terms = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            terms.push(c[i] * d.matrix[i][j] * c[j]);
        }
    }
    let dispersion = compensated_sum(terms);
    let scale = 1.0 + d.matrix.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    let cnorm2: f64 = c.iter().map(|x| x * x).sum();
    let singular = cnorm2 > 0.0 && dispersion.abs() <= 1e-10 * scale * cnorm2;
    Ok(Combination { mean, dispersion, singular, determinant: d.determinant() })
}

/// Closed-form multivariate FCGFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MvFcgf {
    /// Independent Poisson coordinates.
    IndependentPoisson { mu: Vec<f64> },
    /// `X_1 = U_1 + U_2`, `X_2 = U_1 + U_3` with independent `U_i ~ Po(mu_i)`.
    BivariatePoisson { mu: [f64; 3] },
    /// `n log(1 + q . t)` with `sum q <= 1`.
    Multinomial { trials: u64, q: Vec<f64> },
    /// `mu . t + t^T S t / 2`.
    Hermite { mu: Vec<f64>, s: Vec<Vec<f64>> },
}

impl MvFcgf {
    pub fn validate(&self) -> Result<()> {
        match self {
            MvFcgf::IndependentPoisson { mu } if mu.iter().any(|m| !(*m >= 0.0)) => {
                Err(invalid("Poisson means must be >= 0"))
            }
            MvFcgf::BivariatePoisson { mu } if mu.iter().any(|m| !(*m >= 0.0)) => {
                Err(invalid("bivariate Poisson means must be >= 0"))
            }
            MvFcgf::Multinomial { trials, q } => {
                if *trials == 0 || q.iter().any(|x| !(*x >= 0.0)) || q.iter().sum::<f64>() > 1.0 + 1e-12 {
                    Err(invalid("multinomial needs trials >= 1, q >= 0 and sum q <= 1"))
                } else {
                    Ok(())
                }
            }
            MvFcgf::Hermite { mu, s } => {
                MvDispersion::new(mu.clone(), s.clone())?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MvFcgf::IndependentPoisson { mu } => mu.len(),
            MvFcgf::BivariatePoisson { .. } => 2,
            MvFcgf::Multinomial { q, .. } => q.len(),
            MvFcgf::Hermite { mu, .. } => mu.len(),
        }
    }

    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        if t.len() != self.dim() {
            return Err(invalid(format!("argument must have length {}", self.dim())));
        }
        Ok(match self {
            MvFcgf::IndependentPoisson { mu } => mu.iter().zip(t).map(|(m, x)| m * x).sum(),
            MvFcgf::BivariatePoisson { mu } => {
                mu[0] * ((1.0 + t[0]) * (1.0 + t[1]) - 1.0) + mu[1] * t[0] + mu[2] * t[1]
            }
            MvFcgf::Multinomial { trials, q } => {
                let z = 1.0 + q.iter().zip(t).map(|(a, x)| a * x).sum::<f64>();
                if !(z > 0.0) {
                    return Err(domain(format!("1 + q . t = {z} must be positive")));
                }
                *trials as f64 * z.ln()
            }
            MvFcgf::Hermite { mu, s } => {
                let lin: f64 = mu.iter().zip(t).map(|(m, x)| m * x).sum();
                let mut quad = 0.0;
                for i in 0..t.len() {
                    for j in 0..t.len() {
                        quad += t[i] * s[i][j] * t[j];
                    }
                }
                lin + 0.5 * quad
            }
        })
    }

    /// Gradient and Hessian at zero.
    pub fn dispersion(&self) -> Result<MvDispersion> {
        let k = self.dim();
        let (mean, matrix) = match self {
            MvFcgf::IndependentPoisson { mu } => (mu.clone(), vec![vec![0.0; k]; k]),
            MvFcgf::BivariatePoisson { mu } => (
                vec![mu[0] + mu[1], mu[0] + mu[2]],
                vec![vec![0.0, mu[0]], vec![mu[0], 0.0]],
            ),
            MvFcgf::Multinomial { trials, q } => {
                let n = *trials as f64;
                (
                    q.iter().map(|x| n * x).collect(),
                    (0..k).map(|i| (0..k).map(|j| -n * q[i] * q[j]).collect()).collect(),
                )
            }
            MvFcgf::Hermite { mu, s } => (mu.clone(), s.clone()),
        };
        MvDispersion::new(mean, matrix)
    }
}

/// `1 + C(-c) / (c . E X)`; `c = None` means the all-ones vector.
pub fn mv_zero_inflation(f: &MvFcgf, c: Option<&[f64]>) -> Result<f64> {
    let ones = vec![1.0; f.dim()];
    let c = c.unwrap_or(&ones);
    if c.len() != f.dim() || c.iter().any(|x| !(*x >= 0.0)) {
        return Err(invalid("direction must have k non-negative entries"));
    }
    let d = f.dispersion()?;
    let mean: f64 = c.iter().zip(&d.mean).map(|(a, m)| a * m).sum();
    if !(mean > 0.0) {
        return Err(domain("c . E(X) must be positive"));
    }
    let neg: Vec<f64> = c.iter().map(|x| -x).collect();
    Ok(1.0 + f.eval(&neg)? / mean)
}

/// `X | Y ~ independent Po(Y_i)` with Tweedie margins `Y_i ~ Tw_p(mu_i, sigma_ii)`
/// and `Cov(Y) = [mu]^(p/2) sigma [mu]^(p/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvPtParams {
    pub p: f64,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl MvPtParams {
    pub fn new(p: f64, mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(invalid(format!("multivariate Poisson-Tweedie needs p >= 1, got {p}")));
        }
        if mu.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(invalid("mean entries must be positive"));
        }
        let d = MvDispersion::new(mu.clone(), sigma.clone())?;
        let ev = d.eigenvalues();
        if ev[0] <= 0.0 {
            return Err(invalid(format!("sigma must be positive definite, smallest eigenvalue {}", ev[0])));
        }
        Ok(Self { p, mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `Cov(Y)_ij = sigma_ij mu_i^(p/2) mu_j^(p/2)`.
    pub fn mixing_covariance(&self) -> Vec<Vec<f64>> {
        let h: Vec<f64> = self.mu.iter().map(|m| m.powf(self.p / 2.0)).collect();
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.sigma[i][j] * h[i] * h[j]).collect())
            .collect()
    }

    /// Mean `mu` and dispersion `Cov(Y)` of the count vector.
    pub fn dispersion(&self) -> Result<MvDispersion> {
        MvDispersion::new(self.mu.clone(), self.mixing_covariance())
    }

    /// `[c] . X`: parameters `([c] mu, [c]^(1-p/2) sigma [c]^(1-p/2))`.
    pub fn dilated(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.dim() || c.iter().any(|x| !(*x > 0.0)) {
            return Err(invalid("dilation vector must have k positive entries"));
        }
        let e = 1.0 - self.p / 2.0;
        let mu = (0..self.dim()).map(|i| c[i] * self.mu[i]).collect();
        let sigma = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| c[i].powf(e) * self.sigma[i][j] * c[j].powf(e)).collect())
            .collect();
        Self::new(self.p, mu, sigma)
    }
}

/// Independent Tweedie pieces: a private component per coordinate and a
/// shared component, scaled per coordinate, for each positively correlated pair.
#[derive(Debug)]
struct CommonComponents {
    private: Vec<Option<TweedieSampler>>,
    shared: Vec<(usize, usize, f64, f64, TweedieSampler)>,
}

fn decompose(params: &MvPtParams) -> Result<CommonComponents> {
    let k = params.dim();
    let p = params.p;
    let cov = params.mixing_covariance();
    // Sums of Tweedie variables with equal mu^(1-p) / gamma are Tweedie.
    let r: Vec<f64> = (0..k).map(|i| params.mu[i].powf(1.0 - p) / params.sigma[i][i]).collect();
    let mut remaining = params.mu.clone();
    let mut shared = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let c = cov[i][j];
            if c == 0.0 {
                continue;
            }
            if c < 0.0 {
                return Err(Error::Infeasible(format!(
                    "negative covariance {c} between coordinates {i} and {j} needs a negative shared component"
                )));
            }
            let (ei, ej) = (r[j] * c, r[i] * c);
            let phi = 1.0 / (r[i] * ei);
            remaining[i] -= ei;
            remaining[j] -= ej;
            shared.push((i, j, ei, ej, TweedieSampler::new(TweedieParams::new(p, 1.0, phi)?)?));
        }
    }
    let mut private = Vec::with_capacity(k);
    for i in 0..k {
        let m = remaining[i];
        let tol = 1e-12 * params.mu[i];
        if m < -tol {
            return Err(Error::Infeasible(format!(
                "coordinate {i}: shared components need mean {} > mu = {}",
                params.mu[i] - m,
                params.mu[i]
            )));
        }
        private.push(if m > tol {
            Some(TweedieSampler::new(TweedieParams::new(p, m, m.powf(1.0 - p) / r[i])?)?)
        } else {
            None
        });
    }
    Ok(CommonComponents { private, shared })
}

/// `n` draws of the count vector.
pub fn sample_mv_pt<R: Rng + ?Sized>(params: &MvPtParams, n: usize, rng: &mut R) -> Result<Vec<Vec<u64>>> {
    let parts = decompose(params)?;
    let k = params.dim();
    let mut out = Vec::with_capacity(n);
    let mut y = vec![0.0; k];
    for _ in 0..n {
        for (i, s) in parts.private.iter().enumerate() {
            y[i] = s.as_ref().map_or(0.0, |s| s.sample(rng));
        }
        for (i, j, ei, ej, s) in &parts.shared {
            let w = s.sample(rng);
            y[*i] += ei * w;
            y[*j] += ej * w;
        }
        out.push(y.iter().map(|&m| poisson(m, rng) as u64).collect());
    }
    Ok(out)
}

/// Sample mean vector and covariance matrix (divisor `n - 1`).
pub fn sample_moments(xs: &[Vec<u64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = xs.len();
    let k = xs.first().map_or(0, |x| x.len());
    let mut mean = vec![0.0; k];
    for x in xs {
        for i in 0..k {
            mean[i] += x[i] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; k]; k];
    for x in xs {
        for i in 0..k {
            for j in 0..k {
                cov[i][j] += (x[i] as f64 - mean[i]) * (x[j] as f64 - mean[j]);
            }
        }
    }
    let d = (n as f64 - 1.0).max(1.0);
    cov.iter_mut().flatten().for_each(|c| *c /= d);
    (mean, cov)
}

/// Per-axis budget for multivariate lattice tables.
pub const DEFAULT_AXIS_BUDGET: usize = 64;

/// PMF on the lattice `{0..N}^k`, row-major, with the mass outside it bounded by `tail_bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MvPmf {
    k: usize,
    side: usize,
    probs: Vec<f64>,
    tail_bound: f64,
}

impl MvPmf {
    pub fn new(k: usize, side: usize, probs: Vec<f64>) -> Result<Self> {
        if k == 0 || k > 3 {
            return Err(Error::TruncationBudget(format!(
                "exact lattice tables support 1 <= k <= 3, got k = {k}"
            )));
        }
        if side == 0 || probs.len() != side.pow(k as u32) {
            return Err(invalid("probability array does not match the lattice"));
        }
        if probs.iter().any(|p| !(*p >= -1e-10) || !p.is_finite()) {
            return Err(invalid("lattice probabilities must be non-negative"));
        }
        let probs: Vec<f64> = probs.into_iter().map(|p| p.max(0.0)).collect();
        let tail_bound = (1.0 - compensated_sum(probs.iter().copied())).max(0.0);
        Ok(Self { k, side, probs, tail_bound })
    }

    /// Product of independent Poisson marginals.
    pub fn product_poisson(mu: &[f64], side: usize) -> Result<Self> {
        let marg = mu
            .iter()
            .map(|&m| PmfTable::poisson(m, side - 1))
            .collect::<Result<Vec<_>>>()?;
        let k = mu.len();
        let probs = (0..side.pow(k as u32))
            .map(|idx| {
                let mut p = 1.0;
                let mut r = idx;
                for a in (0..k).rev() {
                    p *= marg[a].prob(r % side);
                    r /= side;
                }
                p
            })
            .collect();
        Self::new(k, side, probs)
    }

    /// Lattice table of a closed-form law; Hermite laws have no direct table.
    pub fn from_fcgf(f: &MvFcgf, side: usize) -> Result<Self> {
        f.validate()?;
        let k = f.dim();
        if k == 0 || k > 3 {
            return Err(Error::TruncationBudget(format!(
                "exact lattice tables support 1 <= k <= 3, got k = {k}"
            )));
        }
        let axis = |idx: usize| {
            let mut x = vec![0usize; k];
            let mut r = idx;
            for a in (0..k).rev() {
                x[a] = r % side;
                r /= side;
            }
            x
        };
        let probs: Vec<f64> = match f {
            MvFcgf::IndependentPoisson { mu } => return Self::product_poisson(mu, side),
            MvFcgf::BivariatePoisson { mu } => {
                let marg = mu
                    .iter()
                    .map(|&m| PmfTable::poisson(m, side - 1))
                    .collect::<Result<Vec<_>>>()?;
                (0..side * side)
                    .map(|idx| {
                        let x = axis(idx);
                        compensated_sum(
                            (0..=x[0].min(x[1])).map(|u| marg[0].prob(u) * marg[1].prob(x[0] - u) * marg[2].prob(x[1] - u)),
                        )
                    })
                    .collect()
            }
            MvFcgf::Multinomial { trials, q } => {
                let n = *trials as usize;
                let rest = (1.0 - q.iter().sum::<f64>()).max(0.0);
                (0..side.pow(k as u32))
                    .map(|idx| {
                        let x = axis(idx);
                        let total: usize = x.iter().sum();
                        if total > n {
                            return 0.0;
                        }
                        let mut lp = ln_factorial(n as u64) - ln_factorial((n - total) as u64);
                        for (xi, qi) in x.iter().zip(q) {
                            if *xi > 0 {
                                lp += *xi as f64 * qi.ln() - ln_factorial(*xi as u64);
                            }
                        }
                        if n > total {
                            lp += (n - total) as f64 * rest.ln();
                        }
                        lp.exp()
                    })
                    .collect()
            }
            MvFcgf::Hermite { .. } => {
                return Err(Error::Unsupported("lattice tables of multivariate Hermite laws".into()))
            }
        };
        Self::new(k, side, probs)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    fn index(&self, x: &[usize]) -> usize {
        x.iter().fold(0, |acc, &v| acc * self.side + v)
    }

    fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut x = vec![0; self.k];
        for a in (0..self.k).rev() {
            x[a] = idx % self.side;
            idx /= self.side;
        }
        x
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        if x.len() != self.k || x.iter().any(|&v| v >= self.side) {
            return 0.0;
        }
        self.probs[self.index(x)]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for (idx, &p) in self.probs.iter().enumerate() {
            for (a, v) in self.coords(idx).into_iter().enumerate() {
                m[a] += v as f64 * p;
            }
        }
        m
    }

    fn convolve(&self, other: &MvPmf) -> MvPmf {
        let mut out = vec![0.0; self.probs.len()];
        let nz: Vec<(Vec<usize>, f64)> = other
            .probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p != 0.0)
            .map(|(i, p)| (other.coords(i), *p))
            .collect();
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let x = self.coords(i);
            'outer: for (y, b) in &nz {
                let mut idx = 0;
                for d in 0..self.k {
                    let s = x[d] + y[d];
                    if s >= self.side {
                        continue 'outer;
                    }
                    idx = idx * self.side + s;
                }
                out[idx] += a * b;
            }
        }
        let tail_bound = (1.0 - compensated_sum(out.iter().copied())).max(0.0);
        MvPmf { k: self.k, side: self.side, probs: out, tail_bound }
    }

    /// Coordinatewise binomial thinning by `c`.
    fn thinned(&self, c: f64) -> Result<MvPmf> {
        let mut probs = self.probs.clone();
        let side = self.side;
        for axis in 0..self.k {
            let stride = side.pow((self.k - 1 - axis) as u32);
            for base in 0..probs.len() {
                if (base / stride) % side != 0 {
                    continue;
                }
                let fiber: Vec<f64> = (0..side).map(|v| probs[base + v * stride]).collect();
                let t = crate::series::thin_pmf(&PmfTable::with_tail(fiber, 0.0, 1.0), c)?;
                for v in 0..side {
                    probs[base + v * stride] = t.prob(v);
                }
            }
        }
        Ok(MvPmf { k: self.k, side, probs, tail_bound: self.tail_bound })
    }

    fn power(&self, n: usize) -> MvPmf {
        let mut acc: Option<MvPmf> = None;
        let mut sq = self.clone();
        let mut k = n;
        loop {
            if k & 1 == 1 {
                acc = Some(match acc {
                    None => sq.clone(),
                    Some(a) => a.convolve(&sq),
                });
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            sq = sq.convolve(&sq);
        }
        acc.expect("n >= 1")
    }

    /// `n^-1 . (X_1 + .. + X_n)`, thinning each summand before convolving.
    pub fn dilation_average(&self, n: usize) -> Result<MvPmf> {
        if n == 0 {
            return Err(invalid("n must be >= 1"));
        }
        Ok(self.thinned(1.0 / n as f64)?.power(n))
    }
}

/// Upper bound on TV between lattice tables of equal shape.
pub fn mv_tv_bound(a: &MvPmf, b: &MvPmf) -> Result<f64> {
    if a.k != b.k || a.side != b.side {
        return Err(invalid("lattice shapes differ"));
    }
    let core = compensated_sum(a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()));
    Ok((0.5 * core + 0.5 * (a.tail_bound + b.tail_bound)).min(1.0))
}

/// Thinned averages of a lattice table against independent Poissons with mean `mu`.
pub fn mv_thin_numbers(base: &MvPmf, mu: &[f64], n_grid: &[usize]) -> Result<ConvergenceRun> {
    if mu.len() != base.dim() {
        return Err(invalid("mean vector length does not match the table"));
    }
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return Err(invalid("n grid must be positive and strictly increasing"));
    }
    let target = MvPmf::product_poisson(mu, base.side())?;
    let params: Vec<(String, f64)> = mu.iter().enumerate().map(|(i, m)| (format!("mu{}", i + 1), *m)).collect();
    let mut run = ConvergenceRun {
        experiment: "mv_thin_numbers".into(),
        control: "n".into(),
        control_values: Vec::new(),
        tv_distances: Vec::new(),
        tail_bounds: Vec::new(),
        target: TargetSpec {
            name: "product-poisson".into(),
            params: params.into_iter().collect(),
        },
        skipped: Vec::<Skipped>::new(),
    };
    for &n in n_grid {
        let avg = base.dilation_average(n)?;
        run.control_values.push(n as f64);
        run.tv_distances.push(mv_tv_bound(&avg, &target)?);
        run.tail_bounds.push(avg.tail_bound() + target.tail_bound());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bivariate_poisson(m: f64) -> MvFcgf {
        MvFcgf::BivariatePoisson { mu: [m, 1.0, 1.0] }
    }

    #[test]
    fn classification_examples() {
        let d = bivariate_poisson(1.0).dispersion().unwrap();
        assert_eq!(classify(&d), DispersionClass::Indefinite);
        let ev = d.eigenvalues();
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-14);
        let mn = MvFcgf::Multinomial { trials: 4, q: vec![0.2, 0.3, 0.1] };
        assert_eq!(classify(&mn.dispersion().unwrap()), DispersionClass::Under);
        let ip = MvFcgf::IndependentPoisson { mu: vec![1.0, 2.0] };
        assert_eq!(classify(&ip.dispersion().unwrap()), DispersionClass::Equi);
        let over = MvDispersion::new(vec![1.0, 1.0], vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert_eq!(classify(&over), DispersionClass::Over);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let r = MvDispersion::new(vec![1.0, 1.0], vec![vec![0.0, 1.0], vec![0.5, 0.0]]);
        assert!(matches!(r, Err(Error::Asymmetric(_))));
    }

    #[test]
    fn combinations() {
        let d = bivariate_poisson(0.7).dispersion().unwrap();
        let c = dilate_combination(&d, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(c.dispersion, 1.4, epsilon = 1e-15);
        let e1 = dilate_combination(&d, &[1.0, 0.0]).unwrap();
        assert_eq!((e1.mean, e1.dispersion), (1.7, 0.0));
        assert!(e1.singular);
        assert!(dilate_combination(&d, &[-1.0, 0.0]).is_err());
        let mn = MvFcgf::Multinomial { trials: 3, q: vec![0.2, 0.3] }.dispersion().unwrap();
        let c = dilate_combination(&mn, &[0.5, 2.0]).unwrap();
        assert_abs_diff_eq!(c.dispersion, -3.0 * (0.1 + 0.6f64).powi(2), epsilon = 1e-14);
    }

    #[test]
    fn zero_inflation() {
        let zi = mv_zero_inflation(&MvFcgf::BivariatePoisson { mu: [1.0, 1.0, 1.0] }, None).unwrap();
        assert_abs_diff_eq!(zi, 0.25, epsilon = 1e-15);
        let ip = MvFcgf::IndependentPoisson { mu: vec![1.0, 3.0] };
        assert_eq!(mv_zero_inflation(&ip, Some(&[0.3, 2.0])).unwrap(), 0.0);
        // directional index along 2 e_1 equals the univariate index of 2 . X_1
        let mn = MvFcgf::Multinomial { trials: 2, q: vec![0.3, 0.2] };
        let zi = mv_zero_inflation(&mn, Some(&[0.4, 0.0])).unwrap();
        let uni = 1.0 + 2.0 * (1.0 - 0.3 * 0.4f64).ln() / (0.4 * 0.6);
        assert_abs_diff_eq!(zi, uni, epsilon = 1e-14);
    }

    #[test]
    fn decomposition_matches_target_covariance() {
        let params = MvPtParams::new(2.0, vec![1.0, 2.0], vec![vec![0.5, 0.2], vec![0.2, 0.5]]).unwrap();
        let parts = decompose(&params).unwrap();
        let (_, _, ei, ej, s) = &parts.shared[0];
        let phi = s.params().gamma;
        assert_abs_diff_eq!(ei * ej * phi, 0.4, epsilon = 1e-14);
        let m0 = parts.private[0].as_ref().unwrap().params();
        assert_abs_diff_eq!(m0.mu + ei, 1.0, epsilon = 1e-14);
        // marginal variance gamma_1 mu_1^p = 0.5
        let var0 = m0.variance() + ei * ei * phi;
        assert_abs_diff_eq!(var0, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn infeasible_decompositions() {
        let neg = MvPtParams::new(2.0, vec![1.0, 1.0], vec![vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        assert!(matches!(decompose(&neg), Err(Error::Infeasible(_))));
        let big = MvPtParams::new(2.0, vec![1.0, 1.0], vec![vec![0.1, 0.3], vec![0.3, 10.0]]).unwrap();
        assert!(matches!(decompose(&big), Err(Error::Infeasible(_))));
    }

    #[test]
    fn dilated_parameters_match_moment_dilation() {
        let params = MvPtParams::new(1.5, vec![1.0, 2.0], vec![vec![0.5, 0.2], vec![0.2, 0.5]]).unwrap();
        let c = [0.5, 3.0];
        let lhs = params.dilated(&c).unwrap().dispersion().unwrap();
        let rhs = params.dispersion().unwrap().diag_dilated(&c).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(lhs.mean[i], rhs.mean[i], epsilon = 1e-14);
            for j in 0..2 {
                assert_abs_diff_eq!(lhs.matrix[i][j], rhs.matrix[i][j], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn matrix_dilation_of_product_poisson_is_equidispersed() {
        let d = MvFcgf::IndependentPoisson { mu: vec![1.0, 2.0] }.dispersion().unwrap();
        let a = vec![vec![0.5, 0.25], vec![0.0, 1.0], vec![1.0, 1.0]];
        let out = d.matrix_dilated(&a).unwrap();
        assert_eq!(out.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(classify(&out), DispersionClass::Equi);
    }

    #[test]
    fn lattice_tables_of_closed_forms() {
        let bp = MvPmf::from_fcgf(&MvFcgf::BivariatePoisson { mu: [0.5, 1.0, 1.5] }, 30).unwrap();
        assert_abs_diff_eq!(bp.prob(&[0, 0]), (-3.0f64).exp(), epsilon = 1e-16);
        let m = bp.mean();
        assert_abs_diff_eq!(m[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], 2.0, epsilon = 1e-12);
        let mn = MvPmf::from_fcgf(&MvFcgf::Multinomial { trials: 3, q: vec![0.2, 0.5] }, 4).unwrap();
        assert!(mn.tail_bound() < 1e-14);
        assert_abs_diff_eq!(mn.prob(&[1, 2]), 3.0 * 0.2 * 0.25, epsilon = 1e-15);
        let h = MvFcgf::Hermite { mu: vec![1.0], s: vec![vec![0.5]] };
        assert!(MvPmf::from_fcgf(&h, 10).is_err());
    }

    #[test]
    fn product_poisson_fixed_point() {
        let base = MvPmf::product_poisson(&[0.5, 1.0], 32).unwrap();
        let run = mv_thin_numbers(&base, &[0.5, 1.0], &[1, 2, 4]).unwrap();
        for tv in run.tv_distances {
            assert!(tv < 1e-12, "{tv}");
        }
    }

    #[test]
    fn bernoulli_pairs_approach_product_poisson() {
        let side = 32;
        let mut probs = vec![0.0; side * side];
        probs[0] = 0.5;
        probs[1] = 0.1;
        probs[side] = 0.2;
        probs[side + 1] = 0.2;
        let base = MvPmf::new(2, side, probs).unwrap();
        assert_eq!(base.mean(), vec![0.4, 0.30000000000000004]);
        let run = mv_thin_numbers(&base, &[0.4, 0.3], &[2, 4, 8, 16]).unwrap();
        assert!(run.is_strictly_decreasing());
        assert!(MvPmf::new(4, 2, vec![0.0; 16]).is_err());
    }
}
