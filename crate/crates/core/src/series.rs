//! Truncated power series and probability tables.
//!
//! The PMF of a count variable is the coefficient sequence of
//! `exp(C(u - 1))`, so everything here is plain series arithmetic on `f64`.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{domain, invalid, Error, Result};
use crate::fcgf::AnalyticFcgf;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Coefficients `c_0..c_N` of a truncated power series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("power series needs at least one coefficient"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Overflow(format!(
                "series coefficient {i} is not finite ({})",
                coeffs[i]
            )));
        }
        Ok(Self { coeffs })
    }

    /// Builds a series without the finiteness check; callers validate later.
    pub(crate) fn raw(coeffs: Vec<f64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zeros(order: usize) -> Self {
        Self { coeffs: vec![0.0; order + 1] }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub(crate) fn check_finite(self) -> Result<Self> {
        Self::new(self.coeffs)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for c in &mut self.coeffs {
            *c *= s;
        }
        self
    }

    pub fn add_assign(&mut self, other: &PowerSeries) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    /// Product truncated to the order of `self`.
    pub fn mul_trunc(&self, other: &PowerSeries) -> PowerSeries {
        let n = self.order();
        let mut out = vec![0.0; n + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().take(n + 1 - i).enumerate() {
                out[i + j] += a * b;
            }
        }
        PowerSeries { coeffs: out }
    }

    /// `self(inner(u))` for an inner series with zero constant term.
    pub fn compose(&self, inner: &PowerSeries) -> Result<PowerSeries> {
        if inner.coeff(0) != 0.0 {
            return Err(invalid("composition needs an inner series with zero constant term"));
        }
        let n = inner.order();
        let mut acc = PowerSeries::zeros(n);
        for k in (0..=self.order().min(n)).rev() {
            acc = acc.mul_trunc(inner);
            acc.coeffs[0] += self.coeffs[k];
        }
        Ok(acc)
    }
}

/// `exp` of a series: `g_0 = e^{h_0}`, `n g_n = sum_{k=1}^n k h_k g_{n-k}`.
pub fn exp_series(h: &PowerSeries) -> Result<PowerSeries> {
    let h0 = h.coeff(0);
    if !h0.is_finite() || h0 > f64::MAX.ln() {
        return Err(Error::Overflow(format!("exp of constant term {h0} overflows")));
    }
    let n = h.order();
    let mut g = vec![0.0; n + 1];
    g[0] = h0.exp();
    for m in 1..=n {
        let mut acc = CompensatedSum::new();
        for k in 1..=m {
            let hk = h.coeffs[k];
            if hk != 0.0 {
                acc.add(k as f64 * hk * g[m - k]);
            }
        }
        g[m] = acc.value() / m as f64;
    }
    PowerSeries::new(g)
}

/// `log` of a series with positive constant term.
pub fn log_series(g: &PowerSeries) -> Result<PowerSeries> {
    let g0 = g.coeff(0);
    if !(g0 > 0.0) {
        return Err(domain(format!("log of series with constant term {g0}")));
    }
    let n = g.order();
    let mut h = vec![0.0; n + 1];
    h[0] = g0.ln();
    for m in 1..=n {
        let mut acc = CompensatedSum::new();
        for k in 1..m {
            acc.add(k as f64 * h[k] * g.coeffs[m - k]);
        }
        h[m] = (g.coeffs[m] - acc.value() / m as f64) / g0;
    }
    PowerSeries::new(h)
}

/// Truncation order and tail tolerance for PMF extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfConfig {
    pub order: usize,
    pub tail_tol: f64,
}

impl Default for PmfConfig {
    fn default() -> Self {
        Self { order: 512, tail_tol: 1e-9 }
    }
}

impl PmfConfig {
    pub fn with_order(order: usize) -> Self {
        Self { order, ..Self::default() }
    }
}

/// Probability table on `{0, .., N}` with an upper bound on `P(X > N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfTable {
    probs: Vec<f64>,
    tail_bound: f64,
    #[serde(skip, default = "default_complete")]
    complete: bool,
}

fn default_complete() -> bool {
    true
}

const NEG_TOL: f64 = 1e-10;

impl PmfTable {
    /// Validates probabilities and derives the tail bound as `1 - sum`.
    pub fn from_probs(probs: Vec<f64>, tail_tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty probability table"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Overflow(format!("probability at k={i} is {p}")));
            }
            if p < -NEG_TOL {
                return Err(Error::NegativeProbability { index: i, value: p });
            }
            if p > 1.0 + 1e-9 {
                return Err(Error::NotAnFcgf(format!("probability {p} > 1 at k={i}")));
            }
        }
        // Round-off noise below the tolerance is clamped.
        let probs: Vec<f64> = probs.into_iter().map(|p| p.max(0.0)).collect();
        let total = compensated_sum(probs.iter().copied());
        if total > 1.0 + 1e-9 {
            return Err(Error::NotAnFcgf(format!("probabilities sum to {total}")));
        }
        let tail_bound = (1.0 - total).max(0.0);
        Ok(Self { probs, tail_bound, complete: tail_bound <= tail_tol })
    }

    pub(crate) fn with_tail(probs: Vec<f64>, tail_bound: f64, tail_tol: f64) -> Self {
        Self { probs, tail_bound, complete: tail_bound <= tail_tol }
    }

    pub fn poisson(mu: f64, order: usize) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(invalid(format!("Poisson mean must be >= 0, got {mu}")));
        }
        let probs = (0..=order)
            .map(|k| {
                if mu == 0.0 {
                    if k == 0 { 1.0 } else { 0.0 }
                } else {
                    (k as f64 * mu.ln() - mu - ln_factorial(k as u64)).exp()
                }
            })
            .collect();
        Self::from_probs(probs, PmfConfig::default().tail_tol)
    }

    /// Binomial with `n` trials and success probability `q`.
    pub fn binomial(n: u64, q: f64, order: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid(format!("binomial probability must lie in [0,1], got {q}")));
        }
        let probs = (0..=order as u64)
            .map(|k| binomial_term(n, k, q))
            .collect();
        Self::from_probs(probs, PmfConfig::default().tail_tol)
    }

    pub fn degenerate(value: usize, order: usize) -> Self {
        let mut probs = vec![0.0; order + 1];
        let tail_bound = if value <= order {
            probs[value] = 1.0;
            0.0
        } else {
            1.0
        };
        Self::with_tail(probs, tail_bound, PmfConfig::default().tail_tol)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn order(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    pub fn require_complete(&self, tol: f64) -> Result<()> {
        if self.tail_bound > tol {
            Err(Error::IncompleteTable { tail_bound: self.tail_bound, tol })
        } else {
            Ok(())
        }
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.probs.iter().enumerate().map(|(k, p)| k as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        compensated_sum(
            self.probs
                .iter()
                .enumerate()
                .map(|(k, p)| (k as f64 - m).powi(2) * p),
        )
    }

    /// Same table cut or zero-padded to `order`; cut mass moves into the tail.
    pub fn resized(&self, order: usize) -> PmfTable {
        let mut probs = self.probs.clone();
        let mut tail = self.tail_bound;
        if order + 1 < probs.len() {
            tail += compensated_sum(probs[order + 1..].iter().copied());
            probs.truncate(order + 1);
        } else {
            probs.resize(order + 1, 0.0);
        }
        Self { probs, tail_bound: tail, complete: self.complete && tail <= 1e-9 }
    }

    /// Drops trailing entries whose total mass is below `eps`, adding it to the tail.
    pub fn trimmed(&self, eps: f64) -> PmfTable {
        let mut cut = 0.0;
        let mut end = self.probs.len();
        while end > 1 && cut + self.probs[end - 1] < eps {
            cut += self.probs[end - 1];
            end -= 1;
        }
        Self {
            probs: self.probs[..end].to_vec(),
            tail_bound: self.tail_bound + cut,
            complete: self.complete,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,p_k\n");
        for (k, p) in self.probs.iter().enumerate() {
            out.push_str(&format!("{k},{}\n", fmt_f64(*p)));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let probs: Vec<String> = self.probs.iter().map(|p| fmt_f64(*p)).collect();
        format!(
            "{{\"probs\": [{}], \"tail_bound\": {}}}",
            probs.join(", "),
            fmt_f64(self.tail_bound)
        )
    }
}

/// Inverse-CDF sampler over a probability table.
#[derive(Debug, Clone)]
pub struct TableSampler {
    cdf: Vec<f64>,
}

impl TableSampler {
    pub fn new(table: &PmfTable) -> Self {
        let mut acc = CompensatedSum::new();
        let cdf = table
            .probs
            .iter()
            .map(|p| {
                acc.add(*p);
                acc.value()
            })
            .collect();
        Self { cdf }
    }

    /// Draws beyond the table's last cumulative value (the tail) return the last index.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0).max(1.0);
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u64
    }
}

/// Seventeen significant digits, locale independent.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub(crate) fn binomial_term(n: u64, k: u64, q: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if q == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + k as f64 * q.ln() + (n - k) as f64 * (-q).ln_1p()).exp()
}

/// Exact PMF from the Taylor data of the FCGF at `t = -1`.
pub fn pmf_from_fcgf(f: &AnalyticFcgf, cfg: &PmfConfig) -> Result<PmfTable> {
    let probs = f.pmf_coefficients(cfg.order)?;
    PmfTable::from_probs(probs, cfg.tail_tol)
}

/// Binomial thinning by `c` in `(0, 1]`, via `G(1 - c + c u)` in Horner form.
pub fn thin_pmf(f: &PmfTable, c: f64) -> Result<PmfTable> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(invalid(format!(
            "binomial thinning needs c in (0, 1], got {c}; use FCGF dilation instead"
        )));
    }
    let q = 1.0 - c;
    let n = f.probs.len();
    let mut acc = vec![0.0; n];
    let mut len = 1;
    acc[0] = f.probs[n - 1];
    for i in (0..n - 1).rev() {
        // acc <- acc * (q + c u) + f_i
        for j in (0..len).rev() {
            let v = acc[j];
            acc[j + 1] += c * v;
            acc[j] = q * v;
        }
        len += 1;
        acc[0] += f.probs[i];
    }
    Ok(PmfTable {
        probs: acc,
        tail_bound: f.tail_bound,
        complete: f.complete,
    })
}

/// Convolution truncated to the longer of the two supports.
pub fn convolve_pmf(f: &PmfTable, g: &PmfTable) -> PmfTable {
    let order = f.order().max(g.order());
    convolve_to(f, g, order)
}

/// Convolution truncated to `order`; dropped and unknown mass goes to the tail.
pub fn convolve_to(f: &PmfTable, g: &PmfTable, order: usize) -> PmfTable {
    let mut out = vec![0.0; order + 1];
    for (i, &a) in f.probs.iter().enumerate().take(order + 1) {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in g.probs.iter().take(order + 1 - i).enumerate() {
            out[i + j] += a * b;
        }
    }
    let total = compensated_sum(out.iter().copied());
    let tail_bound = (1.0 - total).max(0.0);
    PmfTable {
        probs: out,
        tail_bound,
        complete: f.complete && g.complete && tail_bound <= 1e-9,
    }
}

/// Upper bound on the total variation distance between two tables.
pub fn tv_bound(f: &PmfTable, g: &PmfTable) -> f64 {
    let n = f.probs.len().max(g.probs.len());
    let core = compensated_sum((0..n).map(|k| (f.prob(k) - g.prob(k)).abs()));
    (0.5 * core + 0.5 * (f.tail_bound + g.tail_bound)).min(1.0)
}

/// Total variation over the common truncated support, without tail terms.
pub fn tv_core(f: &PmfTable, g: &PmfTable) -> f64 {
    let n = f.probs.len().max(g.probs.len());
    0.5 * compensated_sum((0..n).map(|k| (f.prob(k) - g.prob(k)).abs()))
}
