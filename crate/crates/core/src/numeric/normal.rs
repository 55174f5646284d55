//! Standard normal distribution function and its inverse.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Φ(x). Saturates to 0 / 1 for large |x| and accepts ±∞.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ⁻¹(p) for p in the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile needs 0 < p < 1, got {p}"
        )));
    }
    Ok(quantile_unchecked(p))
}

/// Φ⁻¹ without the domain check; returns ±∞ at the endpoints.
pub(crate) fn quantile_unchecked(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    // one Newton step on the cdf tightens the tails
    let pdf = std_normal_pdf(x);
    if pdf > 1e-300 {
        x - (std_normal_cdf(x) - p) / pdf
    } else {
        x
    }
}

/// Two-sided p-value 2[1 − Φ(|z|)].
pub fn two_sided_p_value(z: f64) -> f64 {
    2.0 * std_normal_cdf(-z.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from a 50-digit erfc evaluation
    const CDF_REF: &[(f64, f64)] = &[
        (0.0, 0.5),
        (1.96, 0.975_002_104_851_779_6),
        (-1.96, 0.024_997_895_148_220_435),
        (1.0, 0.841_344_746_068_542_9),
        (-3.0, 0.001_349_898_031_630_094_6),
        (-8.0, 6.220_960_574_271_784e-16),
        (2.2365, 0.987_340_481_346_633_9),
    ];

    #[test]
    fn cdf_matches_reference() {
        for &(x, want) in CDF_REF {
            let got = std_normal_cdf(x);
            assert!((got - want).abs() <= 1e-12, "Φ({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn cdf_is_monotone_and_saturates() {
        let mut prev = 0.0;
        for i in -4000..=4000 {
            let p = std_normal_cdf(i as f64 * 0.01);
            assert!(p >= prev);
            prev = p;
        }
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(std_normal_cdf(60.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((std_normal_quantile(0.024_997_9).unwrap() + 1.96).abs() < 1e-5);
    }

    #[test]
    fn quantile_round_trip() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x) - p).abs() <= 1e-10);
        }
        for &p in &[1e-12, 1e-8, 1e-4, 1.0 - 1e-6] {
            let x = std_normal_quantile(p).unwrap();
            assert!(((std_normal_cdf(x) - p) / p.min(1.0 - p)).abs() <= 1e-8);
        }
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Domain(_))));
        }
    }
}
