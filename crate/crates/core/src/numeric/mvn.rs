//! Randomized quasi-Monte Carlo rectangle probabilities for the multivariate
//! normal distribution (Genz separation of variables).
//!
//! The integrand is evaluated on a rank-1 Richtmyer lattice with
//! √prime generators, randomized by independent uniform shifts and
//! symmetrized with the baker's (tent) transform. The spread of the
//! per-shift means gives the reported standard error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bvn::bvn_rectangle;
use super::linalg::CorrelationMatrix;
use super::normal::{quantile_unchecked, std_normal_cdf};
use super::sampling::stream_rng;
use crate::error::{Error, Result};

/// Default target standard error for randomized rectangle probabilities.
pub const DEFAULT_PRECISION: f64 = 1e-4;

const SHIFTS: usize = 12;
const INITIAL_POINTS: usize = 512;
const MAX_EVALUATIONS: usize = 20_000_000;

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

/// Integration box with its correlation matrix.
#[derive(Debug, Clone)]
pub struct RectangleSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub correlation: CorrelationMatrix,
}

impl RectangleSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, correlation: CorrelationMatrix) -> Result<Self> {
        let d = correlation.dim();
        if lower.len() != d || upper.len() != d {
            return Err(Error::domain(format!(
                "rectangle bounds have lengths {}/{} but correlation dim is {d}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..d {
            if lower[i].is_nan() || upper[i].is_nan() || !(lower[i] < upper[i]) {
                return Err(Error::domain(format!(
                    "rectangle needs lower < upper in coordinate {i}"
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            correlation,
        })
    }

    /// Symmetric box [−c, c]^d.
    pub fn symmetric(c: f64, correlation: CorrelationMatrix) -> Result<Self> {
        let d = correlation.dim();
        Self::new(vec![-c; d], vec![c; d], correlation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub evaluations: usize,
}

/// Rectangle probability with a standard error no larger than `precision`.
///
/// Dimension 1 and 2 are computed deterministically (error 0).
pub fn mvn_rectangle(spec: &RectangleSpec, precision: f64, seed: u64) -> Result<ProbabilityEstimate> {
    if !(precision > 0.0) {
        return Err(Error::domain("precision must be positive"));
    }
    let d = spec.correlation.dim();
    if spec.lower.iter().all(|v| *v == f64::NEG_INFINITY) && spec.upper.iter().all(|v| *v == f64::INFINITY) {
        return Ok(exact(1.0));
    }
    match d {
        1 => Ok(exact(std_normal_cdf(spec.upper[0]) - std_normal_cdf(spec.lower[0]))),
        2 => Ok(exact(bvn_rectangle(
            [spec.lower[0], spec.lower[1]],
            [spec.upper[0], spec.upper[1]],
            spec.correlation.get(0, 1),
        )?)),
        _ => genz_qmc(spec, precision, seed),
    }
}

fn exact(value: f64) -> ProbabilityEstimate {
    ProbabilityEstimate {
        value,
        std_error: 0.0,
        evaluations: 0,
    }
}

fn genz_qmc(spec: &RectangleSpec, precision: f64, seed: u64) -> Result<ProbabilityEstimate> {
    let d = spec.correlation.dim();
    if d - 1 > PRIMES.len() {
        return Err(Error::domain(format!("dimension {d} too large for the lattice rule")));
    }
    let l = spec.correlation.factor()?.lower;
    let generators: Vec<f64> = PRIMES[..d - 1].iter().map(|p| (*p as f64).sqrt().fract()).collect();

    let mut rng = stream_rng(seed, 0x6d76_6e00);
    let shifts: Vec<Vec<f64>> = (0..SHIFTS)
        .map(|_| (0..d - 1).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut points = INITIAL_POINTS;
    let mut evaluations = 0;
    let mut y = vec![0.0; d];
    let mut w = vec![0.0; d - 1];
    loop {
        let mut means = [0.0; SHIFTS];
        for (s, shift) in shifts.iter().enumerate() {
            let mut acc = 0.0;
            for k in 1..=points {
                for j in 0..d - 1 {
                    let u = (k as f64 * generators[j] + shift[j]).fract();
                    w[j] = (2.0 * u - 1.0).abs();
                }
                acc += integrand(&spec.lower, &spec.upper, &l, &w, &mut y);
            }
            means[s] = acc / points as f64;
        }
        evaluations += points * SHIFTS;
        let mean = means.iter().sum::<f64>() / SHIFTS as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / ((SHIFTS - 1) * SHIFTS) as f64;
        let std_error = var.sqrt();
        if std_error <= precision {
            return Ok(ProbabilityEstimate {
                value: mean.clamp(0.0, 1.0),
                std_error,
                evaluations,
            });
        }
        if evaluations + 2 * points * SHIFTS > MAX_EVALUATIONS {
            return Err(Error::PrecisionUnreachable {
                requested: precision,
                achieved: std_error,
                evaluations,
            });
        }
        points *= 2;
    }
}

/// Product of conditional interval probabilities along one lattice point.
fn integrand(a: &[f64], b: &[f64], l: &nalgebra::DMatrix<f64>, w: &[f64], y: &mut [f64]) -> f64 {
    let d = a.len();
    let mut f = 1.0;
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..i {
            s += l[(i, j)] * y[j];
        }
        let lii = l[(i, i)];
        let di = std_normal_cdf((a[i] - s) / lii);
        let ei = std_normal_cdf((b[i] - s) / lii);
        let width = ei - di;
        f *= width;
        if f <= 0.0 {
            return 0.0;
        }
        if i + 1 < d {
            let t = (di + w[i] * width).clamp(1e-300, 1.0 - 1e-16);
            y[i] = quantile_unchecked(t);
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn independent_product_four_dims() {
        let spec = RectangleSpec::symmetric(1.96, CorrelationMatrix::identity(4)).unwrap();
        let est = mvn_rectangle(&spec, 1e-4, 1).unwrap();
        let want = (2.0 * std_normal_cdf(1.96) - 1.0).powi(4);
        assert!(est.std_error <= 1e-4);
        assert!((est.value - want).abs() <= 3.0 * est.std_error.max(1e-12));
        assert!((want - 0.81450625).abs() < 1e-4);
    }

    #[test]
    fn whole_space_is_one() {
        let spec = RectangleSpec::new(
            vec![f64::NEG_INFINITY; 3],
            vec![f64::INFINITY; 3],
            CorrelationMatrix::equicorrelated(3, 0.4).unwrap(),
        )
        .unwrap();
        assert_eq!(mvn_rectangle(&spec, 1e-4, 1).unwrap().value, 1.0);
    }

    #[test]
    fn qmc_matches_bvn_in_two_dims() {
        // force the randomized path on a 2-d problem via a dummy independent third coordinate
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let spec = RectangleSpec::new(
            vec![-1.96, -1.96, f64::NEG_INFINITY],
            vec![1.96, 1.96, f64::INFINITY],
            CorrelationMatrix::new(m).unwrap(),
        )
        .unwrap();
        let est = mvn_rectangle(&spec, 1e-5, 9).unwrap();
        let want = bvn_rectangle([-1.96, -1.96], [1.96, 1.96], 0.5).unwrap();
        assert!((est.value - want).abs() <= 3.0 * est.std_error.max(1e-9));
    }

    #[test]
    fn equicorrelated_half_matches_closed_form() {
        // P(all X_i < 0) for ρ = 1/2 equals 1/(d+1)
        for d in 3..6 {
            let spec = RectangleSpec::new(
                vec![f64::NEG_INFINITY; d],
                vec![0.0; d],
                CorrelationMatrix::equicorrelated(d, 0.5).unwrap(),
            )
            .unwrap();
            let est = mvn_rectangle(&spec, 1e-5, 3).unwrap();
            assert!((est.value - 1.0 / (d as f64 + 1.0)).abs() <= 4.0 * est.std_error.max(1e-7));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = RectangleSpec::symmetric(2.0, CorrelationMatrix::equicorrelated(4, 0.3).unwrap()).unwrap();
        let a = mvn_rectangle(&spec, 1e-4, 77).unwrap();
        let b = mvn_rectangle(&spec, 1e-4, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nested_rectangles_are_monotone() {
        let corr = CorrelationMatrix::equicorrelated(4, 0.5).unwrap();
        let mut prev = 0.0;
        for c in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
            let est = mvn_rectangle(&RectangleSpec::symmetric(c, corr.clone()).unwrap(), 1e-4, 5).unwrap();
            assert!(est.value >= prev);
            assert!((0.0..=1.0).contains(&est.value));
            prev = est.value;
        }
    }

    #[test]
    fn unreachable_precision_is_reported() {
        let spec = RectangleSpec::symmetric(1.0, CorrelationMatrix::equicorrelated(5, 0.3).unwrap()).unwrap();
        assert!(matches!(
            mvn_rectangle(&spec, 1e-13, 1),
            Err(Error::PrecisionUnreachable { .. })
        ));
    }
}
