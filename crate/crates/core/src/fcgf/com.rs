//! Normalizer of the COM-Poisson law, `Z(z) = sum_x z^x / (x!)^nu`, and its
//! Taylor coefficients in log space.

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::series::CompensatedSum;

const MAX_TERMS: usize = 2_000_000;
/// Terms this far (in log) below the running maximum are negligible.
const LOG_CUTOFF: f64 = 38.0;

/// Signed value stored as `sign * exp(log_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogValue {
    pub log_abs: f64,
    pub sign: f64,
}

impl LogValue {
    pub fn value(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_abs.exp()
        }
    }
}

fn ln_fact(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// `sum_j z^j ((k+j)!/k!)^(1-nu) / j!` for real `z`; needs `|z| < 1` when `z < 0`.
fn shifted_sum(z: f64, nu: f64, k: usize) -> Result<LogValue> {
    if z == 0.0 {
        return Ok(LogValue { log_abs: 0.0, sign: 1.0 });
    }
    if z <= -1.0 {
        return Err(domain(format!("normalizer argument {z} below -1")));
    }
    let lz = z.abs().ln();
    let base = ln_fact(k);
    let mut logs = Vec::with_capacity(64);
    let mut max = f64::NEG_INFINITY;
    for j in 0..MAX_TERMS {
        let l = j as f64 * lz + (1.0 - nu) * (ln_fact(k + j) - base) - ln_fact(j);
        logs.push(l);
        max = max.max(l);
        let ratio = z.abs() * ((k + j + 1) as f64).powf(1.0 - nu) / (j + 1) as f64;
        if ratio < 1.0 && l < max - LOG_CUTOFF {
            break;
        }
        if j + 1 == MAX_TERMS {
            return Err(Error::Overflow("normalizer series did not converge".into()));
        }
    }
    let mut acc = CompensatedSum::new();
    for (j, l) in logs.iter().enumerate() {
        let s = if z < 0.0 && j % 2 == 1 { -1.0 } else { 1.0 };
        acc.add(s * (l - max).exp());
    }
    let total = acc.value();
    if total == 0.0 {
        return Ok(LogValue { log_abs: f64::NEG_INFINITY, sign: 0.0 });
    }
    Ok(LogValue { log_abs: max + total.abs().ln(), sign: total.signum() })
}

/// `log Z(z)`.
pub(crate) fn log_normalizer(z: f64, nu: f64) -> Result<f64> {
    let v = shifted_sum(z, nu, 0)?;
    if v.sign <= 0.0 {
        return Err(domain(format!("normalizer is not positive at {z}")));
    }
    Ok(v.log_abs)
}

/// Taylor coefficients in `u` of `Z(lambda (w + d u))`, orders `0..=order`.
pub(crate) fn normalizer_taylor(
    lambda: f64,
    nu: f64,
    w: f64,
    d: f64,
    order: usize,
) -> Result<Vec<LogValue>> {
    let z = lambda * w;
    let ld = (lambda * d.abs()).ln();
    (0..=order)
        .map(|k| {
            let s = shifted_sum(z, nu, k)?;
            let dsign = if d < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
            Ok(LogValue {
                log_abs: k as f64 * ld - nu * ln_fact(k) + s.log_abs,
                sign: s.sign * dsign,
            })
        })
        .collect()
}
