//! DISTINCT sizing: per-row maximum-load bound, fingerprint width, and the
//! expected duplicate-prune fraction on random-order streams.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::ConfigError;

/// Bound `M` on the number of distinct keys a single row sees (holds with
/// probability 1 - delta/2), by load regime:
///
/// * heavy, `D > d*ln(2d/delta)`: `e*D/d`
/// * middle, `d*ln(1/delta)/e <= D <= d*ln(2d/delta)`: `e*ln(2d/delta)`
/// * light, otherwise: `1.3*ln(2d/delta) / ln((d/(D*e))*ln(2d/delta))`
pub fn distinct_max_load(distinct: u64, d: u64, delta: f64) -> Result<f64, ConfigError> {
    if distinct == 0 || d == 0 {
        return Err(ConfigError::Invalid("D and d must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfigError::Invalid(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    let big_d = distinct as f64;
    let df = d as f64;
    let log_term = (2.0 * df / delta).ln();
    let heavy_boundary = df * log_term;
    let light_boundary = df * (1.0 / delta).ln() / E;
    let m = if big_d > heavy_boundary {
        E * big_d / df
    } else if big_d >= light_boundary {
        E * log_term
    } else {
        let inner = df / (big_d * E) * log_term;
        if inner <= 1.0 {
            return Err(ConfigError::Invalid(format!(
                "light-load bound undefined: (d/(D e))*ln(2d/delta) = {inner:.6} <= 1"
            )));
        }
        1.3 * log_term / inner.ln()
    };
    Ok(m)
}

/// Fingerprint width `f = ceil(log2(d * M^2 / delta))` bits; with this many
/// bits there are no same-row fingerprint collisions with probability
/// `1 - delta`. Base-2 log: the bound counts bits.
pub fn fingerprint_bits(distinct: u64, d: u64, delta: f64) -> Result<u32, ConfigError> {
    let m = distinct_max_load(distinct, d, delta)?;
    let bits = (d as f64 * m * m / delta).log2().ceil();
    if bits < 1.0 {
        return Ok(1);
    }
    Ok(bits as u32)
}

/// Expected fraction of duplicate entries pruned on a random-order stream:
/// `0.99 * min(w*d/(D*e), 1)`. The bound is stated for the heavy regime
/// `D > d*ln(200d)`; outside it there is no bound (`None`).
pub fn distinct_expected_prune_fraction(distinct: u64, d: u64, w: u32) -> Option<f64> {
    let big_d = distinct as f64;
    let df = d as f64;
    if big_d <= df * (200.0 * df).ln() {
        return None;
    }
    Some(0.99 * (w as f64 * df / (big_d * E)).min(1.0))
}

/// Planned DISTINCT bounds for a (D, d, delta) working point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinctBounds {
    pub distinct: u64,
    pub rows: u64,
    pub delta: f64,
    pub max_load: f64,
    pub fingerprint_bits: u32,
}

impl DistinctBounds {
    pub fn compute(distinct: u64, rows: u64, delta: f64) -> Result<DistinctBounds, ConfigError> {
        let max_load = distinct_max_load(distinct, rows, delta)?;
        let fingerprint_bits = fingerprint_bits(distinct, rows, delta)?;
        Ok(DistinctBounds {
            distinct,
            rows,
            delta,
            max_load,
            fingerprint_bits,
        })
    }

    /// Feasible on a 64-bit datapath?
    pub fn fits_64_bits(&self) -> bool {
        self.fingerprint_bits <= 64
    }

    pub fn expected_duplicate_prune(&self, width: u32) -> Option<f64> {
        distinct_expected_prune_fraction(self.distinct, self.rows, width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_billion_distinct_fit_in_64_bits_at_d_1000() {
        // Largest D with f <= 64 at (d=1000, delta=1e-4), by bisection.
        let (mut lo, mut hi) = (1u64, 10_000_000_000u64);
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if fingerprint_bits(mid, 1000, 1e-4).unwrap() <= 64 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(
            (490_000_000..=510_000_000).contains(&lo),
            "largest feasible D = {lo}"
        );
    }

    #[test]
    fn heavy_boundary_case_formulas_agree() {
        let d = 1000u64;
        let delta = 1e-4;
        let boundary = (d as f64 * (2.0 * d as f64 / delta).ln()) as u64;
        let below = fingerprint_bits(boundary, d, delta).unwrap();
        let above = fingerprint_bits(boundary + 1, d, delta).unwrap();
        assert!(below.abs_diff(above) <= 1, "{below} vs {above}");
    }

    #[test]
    fn single_row_degenerates_to_e_times_d() {
        let delta = 1e-2;
        for distinct in [100u64, 10_000, 1_000_000] {
            let m = distinct_max_load(distinct, 1, delta).unwrap();
            assert!((m - E * distinct as f64).abs() < 1e-6);
            let f = fingerprint_bits(distinct, 1, delta).unwrap();
            let want = (E * E * (distinct as f64).powi(2) / delta).log2().ceil() as u32;
            assert_eq!(f, want);
        }
    }

    #[test]
    fn prune_fraction_reproduces_worked_example() {
        let f = distinct_expected_prune_fraction(15_000, 1000, 24).unwrap();
        assert!((f - 0.583).abs() < 1e-3, "{f}");
    }

    #[test]
    fn prune_fraction_saturates_at_099() {
        // In-regime (D > d*ln(200d)) with w*d >= e*D.
        let f = distinct_expected_prune_fraction(400_000, 20_000, 60).unwrap();
        assert_eq!(f, 0.99);
    }

    #[test]
    fn prune_fraction_outside_regime_has_no_bound() {
        // D = 5000 <= 1000 * ln(200_000) ~ 12_206: no bound.
        assert!(distinct_expected_prune_fraction(5_000, 1000, 24).is_none());
    }

    #[test]
    fn fingerprint_bits_monotone_in_distinct_heavy_regime() {
        let d = 1000;
        let delta = 1e-4;
        let mut prev = 0;
        for distinct in (20_000_000u64..=620_000_000).step_by(20_000_000) {
            let f = fingerprint_bits(distinct, d, delta).unwrap();
            assert!(f >= prev, "f regressed at D={distinct}");
            prev = f;
        }
    }

    #[test]
    fn fingerprint_bits_nonincreasing_in_delta() {
        for &(distinct, d) in &[(1_000_000u64, 1000u64), (50_000, 256), (500, 64)] {
            let mut prev = u32::MAX;
            for &delta in &[1e-6, 1e-4, 1e-2, 0.1, 0.5] {
                let f = fingerprint_bits(distinct, d, delta).unwrap();
                assert!(f <= prev, "f grew as delta loosened at {distinct}/{d}");
                prev = f;
            }
        }
    }
}
