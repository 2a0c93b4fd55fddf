//! Randomized TOP N sizing: the matrix-width formula, the space-optimal
//! row count, and the expected-unpruned bound on random-order streams.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::ConfigError;

/// Matrix width for `d` rows:
/// `w = floor(1.3 * ln(d/delta) / ln((d/(N*e)) * ln(d/delta)))`.
///
/// Defined whenever the inner logarithm argument exceeds 1; the success
/// guarantee additionally assumes `d >= N*e/ln(1/delta)`, which is enforced
/// where a matrix is actually configured (the width formula itself is also
/// quoted for smaller d, where it measures the blow-up).
pub fn topn_width(d: u64, n: u64, delta: f64) -> Result<u32, ConfigError> {
    if d == 0 || n == 0 {
        return Err(ConfigError::Invalid("d and N must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfigError::Invalid(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    let df = d as f64;
    let log_term = (df / delta).ln();
    let inner = df / (n as f64 * E) * log_term;
    if inner <= 1.0 {
        return Err(ConfigError::Invalid(format!(
            "width undefined: (d/(N e))*ln(d/delta) = {inner:.6} must exceed 1"
        )));
    }
    let w = (1.3 * log_term / inner.ln()).floor();
    if w < 1.0 {
        return Err(ConfigError::Invalid(format!(
            "width formula yields w = {w} < 1"
        )));
    }
    Ok(w as u32)
}

/// Smallest d satisfying the success-guarantee precondition
/// `d >= N*e/ln(1/delta)`.
fn min_rows(n: u64, delta: f64) -> u64 {
    (n as f64 * E / (1.0 / delta).ln()).ceil() as u64
}

/// The unfloored width, where defined.
fn width_real(d: f64, n: u64, delta: f64) -> Option<f64> {
    if d < 1.0 {
        return None;
    }
    let log_term = (d / delta).ln();
    let inner = d / (n as f64 * E) * log_term;
    if inner <= 1.0 {
        return None;
    }
    let w = 1.3 * log_term / inner.ln();
    (w >= 1.0).then_some(w)
}

/// Pick `(d, w)` minimizing the matrix size `w*d`, which simultaneously
/// optimizes space and the pruning-rate bound.
///
/// The scan minimizes the *unfloored* product `d * w(d)` over the region
/// where the success guarantee holds (flooring w first would make the
/// objective discontinuous), then refines to the real-valued minimizer and
/// rounds the row count up. The returned width is [`topn_width`] at that d.
pub fn topn_optimize(n: u64, delta: f64, d_max: Option<u64>) -> Result<(u64, u32), ConfigError> {
    if n == 0 {
        return Err(ConfigError::Invalid("N must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfigError::Invalid(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    let lower = min_rows(n, delta).max(1);
    if let Some(cap) = d_max {
        if cap < lower {
            return Err(ConfigError::Infeasible(format!(
                "row cap {cap} is below the guarantee threshold d >= {lower}"
            )));
        }
    }
    // Integer scan for the objective's neighborhood. Terminates because
    // f(d) >= d once the width formula is valid (w >= 1).
    let mut best: Option<(u64, f64)> = None;
    let mut d = lower;
    loop {
        if let Some(cap) = d_max {
            if d > cap {
                break;
            }
        }
        if let Some((_, f_best)) = best {
            if d as f64 > f_best {
                break;
            }
        }
        if let Some(w) = width_real(d as f64, n, delta) {
            let f = d as f64 * w;
            if best.map_or(true, |(_, fb)| f < fb) {
                best = Some((d, f));
            }
        }
        d += 1;
    }
    let Some((d0, _)) = best else {
        return Err(ConfigError::Infeasible(format!(
            "no feasible d at or above {lower} for N = {n}, delta = {delta}"
        )));
    };

    let interior = d0 > lower && d_max.map_or(true, |cap| d0 < cap);
    let chosen = if interior {
        // Ternary-search the real minimizer within the bracketing unit
        // interval, then round the row count up.
        let (mut lo, mut hi) = (d0 as f64 - 1.0, d0 as f64 + 1.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            let f1 = width_real(m1, n, delta).map(|w| m1 * w).unwrap_or(f64::MAX);
            let f2 = width_real(m2, n, delta).map(|w| m2 * w).unwrap_or(f64::MAX);
            if f1 <= f2 {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let d_star = (lo + hi) / 2.0;
        let mut d = d_star.ceil() as u64;
        d = d.max(lower);
        if let Some(cap) = d_max {
            d = d.min(cap);
        }
        d
    } else {
        d0
    };
    Ok((chosen, topn_width(chosen, n, delta)?))
}

/// Expected unpruned count on a random-order stream of `m` elements:
/// `w*d*ln(m*e/(w*d))`. Below `m = w*d` there is no guarantee regime and
/// the bound degenerates to `m` itself.
pub fn topn_expected_unpruned(m: u64, w: u32, d: u64) -> f64 {
    let wd = w as f64 * d as f64;
    let mf = m as f64;
    if mf < wd {
        return mf;
    }
    wd * (mf * E / wd).ln()
}

/// The closed-form row count `delta * exp(W(N*e^2/delta))` for the
/// space/pruning optimum.
///
/// This tracks the real-valued minimizer that [`topn_optimize`] refines to
/// (they agree to within a row); the scan remains authoritative because the
/// shipped configuration must be integral and carry the floored width.
pub fn topn_closed_form_rows(n: u64, delta: f64) -> Result<f64, ConfigError> {
    let x = n as f64 * E * E / delta;
    Ok(delta * lambert_w(x)?.exp())
}

/// Principal-branch Lambert W via Halley iteration, relative tolerance
/// 1e-12. Defined for `x >= -1/e`.
pub fn lambert_w(x: f64) -> Result<f64, ConfigError> {
    if !x.is_finite() {
        return Err(ConfigError::Invalid(format!("lambert_w({x})")));
    }
    if x < -1.0 / E {
        return Err(ConfigError::Invalid(format!(
            "lambert_w defined for x >= -1/e, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // Initial guess: asymptotic for large x, series near 0.
    let mut w = if x > E {
        let l = x.ln();
        l - l.ln()
    } else if x > 0.0 {
        x / (1.0 + x)
    } else {
        // x in [-1/e, 0): start near the branch point.
        let p = (2.0 * (1.0 + E * x)).sqrt();
        -1.0 + p - p * p / 3.0
    };
    for _ in 0..128 {
        let ew = w.exp();
        let f = w * ew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let next = w - f / denom;
        if (next - w).abs() <= 1e-12 * next.abs().max(1e-300) {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// A planned randomized TOP N matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopNConfig {
    pub n: u64,
    pub delta: f64,
    pub rows: u64,
    pub width: u32,
}

impl TopNConfig {
    /// Space-optimal plan (optionally capped rows).
    pub fn plan(n: u64, delta: f64, d_max: Option<u64>) -> Result<TopNConfig, ConfigError> {
        let (rows, width) = topn_optimize(n, delta, d_max)?;
        Ok(TopNConfig {
            n,
            delta,
            rows,
            width,
        })
    }

    /// Plan for a fixed row budget.
    pub fn for_rows(rows: u64, n: u64, delta: f64) -> Result<TopNConfig, ConfigError> {
        if rows < min_rows(n, delta) {
            return Err(ConfigError::Invalid(format!(
                "rows d = {rows} violates d >= N*e/ln(1/delta) = {}",
                min_rows(n, delta)
            )));
        }
        let width = topn_width(rows, n, delta)?;
        Ok(TopNConfig {
            n,
            delta,
            rows,
            width,
        })
    }

    pub fn expected_unpruned(&self, stream_len: u64) -> f64 {
        topn_expected_unpruned(stream_len, self.width, self.rows)
    }
}
