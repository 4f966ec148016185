//! Restricted least-squares fit of the per-pixel change model
//! `c_p ~ a * c_k + b` with a penalty pulling the gain toward one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionParams {
    /// Strength of the `(a - 1)^2` penalty.
    pub gamma: f64,
    /// Fewer members than this take the degenerate path.
    pub min_points: usize,
    /// Minimum population variance of `c_k` for a full fit.
    pub variance_floor: f64,
    /// Inclusive bounds on an accepted gain.
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for RegressionParams {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            min_points: 5,
            variance_floor: 1e-8,
            a_min: 0.0,
            a_max: 3.0,
        }
    }
}

impl RegressionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if self.min_points < 2 {
            return Err(Error::Config("min_points must be >= 2".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config("variance_floor must be > 0".into()));
        }
        if !(self.a_min <= self.a_max) {
            return Err(Error::Config("a_min must not exceed a_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    pub a: f64,
    pub b: f64,
    pub n_used: usize,
    /// True when the gain was pinned to one.
    pub degenerate: bool,
    /// `mean(c_p - c_k)`, the offset of the degenerate path.
    pub mean_shift: f64,
}

impl RegressionCoefficients {
    pub fn degenerate(n_used: usize, mean_shift: f64) -> Self {
        Self {
            a: 1.0,
            b: mean_shift,
            n_used,
            degenerate: true,
            mean_shift,
        }
    }

    /// `1/2 |c_p - (a c_k + b)|^2 + 1/2 gamma (a - 1)^2`
    pub fn objective(a: f64, b: f64, c_k: &[f64], c_p: &[f64], gamma: f64) -> f64 {
        let rss: f64 = c_k
            .iter()
            .zip(c_p)
            .map(|(k, p)| {
                let r = p - (a * k + b);
                r * r
            })
            .sum();
        0.5 * rss + 0.5 * gamma * (a - 1.0) * (a - 1.0)
    }
}

/// Solves the penalised 2x2 normal equations
///
/// ```text
/// [ sum c_k^2 + gamma   sum c_k ] [a]   [ sum c_k c_p + gamma ]
/// [ sum c_k             n       ] [b] = [ sum c_p             ]
/// ```
///
/// falling back to `a = 1, b = mean(c_p - c_k)` when there are too few points
/// or `c_k` is (nearly) constant.
pub fn fit_restricted(
    c_k: &[f64],
    c_p: &[f64],
    params: &RegressionParams,
) -> Result<RegressionCoefficients> {
    if c_k.len() != c_p.len() {
        return Err(Error::Config(format!(
            "regression inputs differ in length: {} vs {}",
            c_k.len(),
            c_p.len()
        )));
    }
    if c_k.is_empty() {
        return Err(Error::Config("regression needs at least one point".into()));
    }
    if c_k.iter().chain(c_p).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite regression input".into()));
    }
    Ok(fit_unchecked(c_k, c_p, params))
}

pub(crate) fn fit_unchecked(
    c_k: &[f64],
    c_p: &[f64],
    params: &RegressionParams,
) -> RegressionCoefficients {
    let n = c_k.len();
    let nf = n as f64;
    let (mut sk, mut sp, mut skk, mut skp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&k, &p) in c_k.iter().zip(c_p) {
        sk += k;
        sp += p;
        skk += k * k;
        skp += k * p;
    }
    let mean_shift = (sp - sk) / nf;
    if n < params.min_points {
        return RegressionCoefficients::degenerate(n, mean_shift);
    }
    let mean_k = sk / nf;
    let var_k: f64 = c_k.iter().map(|k| (k - mean_k) * (k - mean_k)).sum::<f64>() / nf;
    if var_k < params.variance_floor {
        return RegressionCoefficients::degenerate(n, mean_shift);
    }
    let m00 = skk + params.gamma;
    let m01 = sk;
    let m11 = nf;
    let r0 = skp + params.gamma;
    let r1 = sp;
    let det = m00 * m11 - m01 * m01;
    if !(det.abs() > 0.0) {
        return RegressionCoefficients::degenerate(n, mean_shift);
    }
    let a = (r0 * m11 - m01 * r1) / det;
    let b = (m00 * r1 - m01 * r0) / det;
    if !a.is_finite() || !b.is_finite() {
        return RegressionCoefficients::degenerate(n, mean_shift);
    }
    RegressionCoefficients {
        a,
        b,
        n_used: n,
        degenerate: false,
        mean_shift,
    }
}

/// Replaces a gain outside `[a_min, a_max]` (inclusive) by the degenerate fit.
pub fn coefficient_limits_check(
    coeffs: RegressionCoefficients,
    params: &RegressionParams,
) -> RegressionCoefficients {
    if coeffs.a >= params.a_min && coeffs.a <= params.a_max {
        coeffs
    } else {
        RegressionCoefficients::degenerate(coeffs.n_used, coeffs.mean_shift)
    }
}
