//! Error metrics and critical-value solvers.

use serde::{Deserialize, Serialize};

use crate::correlation::{classical_dunnett_correlation, SingleStudyArms};
use crate::error::{Error, Result};
use crate::numeric::sampling::{chunked, correlated_normal};
use crate::numeric::{bvn_rectangle, bvn_upper, mvn_rectangle, two_sided_p_value, CorrelationMatrix, RectangleSpec};

const C_LOWER: f64 = 0.0;
const C_UPPER: f64 = 10.0;
const PROB_TOL: f64 = 1e-6;
const MAX_MC_DRAWS: usize = 50_000_000;
const MIN_MC_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Fwer,
    Fmer,
    Msfp,
    #[serde(rename = "mfwer")]
    MFwer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    TwoSided,
    OneSidedUpper,
}

/// False-positive quantity to control and its target level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetric {
    pub kind: MetricKind,
    /// Number of false rejections that counts as an error (mFWER only).
    pub m: usize,
    pub alpha: f64,
    pub sidedness: Sidedness,
}

impl ErrorMetric {
    pub fn fwer(alpha: f64) -> Self {
        Self {
            kind: MetricKind::Fwer,
            m: 1,
            alpha,
            sidedness: Sidedness::TwoSided,
        }
    }

    pub fn fmer(alpha: f64) -> Self {
        Self {
            kind: MetricKind::Fmer,
            m: 2,
            alpha,
            sidedness: Sidedness::TwoSided,
        }
    }

    pub fn msfp(alpha: f64) -> Self {
        Self {
            kind: MetricKind::Msfp,
            m: 2,
            alpha,
            sidedness: Sidedness::OneSidedUpper,
        }
    }

    pub fn m_fwer(m: usize, alpha: f64, sidedness: Sidedness) -> Self {
        Self {
            kind: MetricKind::MFwer,
            m,
            alpha,
            sidedness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        let (m, side) = match self.kind {
            MetricKind::Fwer => (1, Sidedness::TwoSided),
            MetricKind::Fmer => (2, Sidedness::TwoSided),
            MetricKind::Msfp => (2, Sidedness::OneSidedUpper),
            MetricKind::MFwer => {
                if self.m == 0 {
                    return Err(Error::domain("m-FWER needs m >= 1"));
                }
                return Ok(());
            }
        };
        if self.m != m || self.sidedness != side {
            return Err(Error::domain(format!(
                "{:?} is defined with m = {m} and {side:?} exceedances",
                self.kind
            )));
        }
        Ok(())
    }

    /// Exceedance count and sidedness that define the error event.
    fn event(&self) -> (usize, Sidedness) {
        (self.m, self.sidedness)
    }
}

/// Solved critical value with its adjusted two-sided p-value threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub critical_value: f64,
    /// `2[1 − Φ(c*)]`.
    pub p_threshold: f64,
    pub metric: ErrorMetric,
    pub z_correlation: CorrelationMatrix,
    /// Defining probability re-evaluated at `critical_value`.
    pub achieved_level: f64,
    /// Monte Carlo standard error of `achieved_level` (0 when exact).
    pub std_error: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha = {alpha} outside (0, 1)")))
    }
}

/// Per-comparison level `alpha / num_tests`.
pub fn bonferroni_threshold(num_tests: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if num_tests == 0 {
        return Err(Error::domain("need at least one test"));
    }
    Ok(alpha / num_tests as f64)
}

/// Holm step-down decisions in input order (`true` = reject).
pub fn holm_reject(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_alpha(alpha)?;
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::domain(format!("p-value {p} outside [0, 1]")));
    }
    let mut reject = vec![false; p_values.len()];
    holm_into(p_values, alpha, &mut reject);
    Ok(reject)
}

/// Two-test probability of the error event at critical value `c`.
fn bivariate_tail(c: f64, rho: f64, m: usize, side: Sidedness) -> Result<f64> {
    let inf = f64::INFINITY;
    if c <= 0.0 && side == Sidedness::TwoSided {
        return Ok(1.0);
    }
    Ok(match (m, side) {
        (1, Sidedness::TwoSided) => 1.0 - bvn_rectangle([-c, -c], [c, c], rho)?,
        (1, Sidedness::OneSidedUpper) => 1.0 - bvn_rectangle([-inf, -inf], [c, c], rho)?,
        (2, Sidedness::TwoSided) => 2.0 * (bvn_upper(c, c, rho) + bvn_upper(c, c, -rho)),
        (2, Sidedness::OneSidedUpper) => bvn_upper(c, c, rho),
        _ => return Err(Error::domain(format!("m = {m} exceeds the number of tests (2)"))),
    })
}

/// Bisection for `f(c) = alpha` with `f` nonincreasing on [0, 10].
fn solve_decreasing<F: FnMut(f64) -> Result<f64>>(mut f: F, alpha: f64) -> Result<f64> {
    let (mut lo, mut hi) = (C_LOWER, C_UPPER);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if f_lo < alpha || f_hi > alpha {
        return Err(Error::RootBracket {
            lower: lo,
            upper: hi,
            f_lower: f_lo - alpha,
            f_upper: f_hi - alpha,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if (v - alpha).abs() <= PROB_TOL * 1e-3 || hi - lo < 1e-13 {
            return Ok(mid);
        }
        if v > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn bivariate_threshold(rho: f64, metric: &ErrorMetric) -> Result<ThresholdResult> {
    metric.validate()?;
    if !(rho.abs() <= 1.0) {
        return Err(Error::domain(format!("correlation {rho} outside [-1, 1]")));
    }
    let (m, side) = metric.event();
    let c = solve_decreasing(|c| bivariate_tail(c, rho, m, side), metric.alpha)?;
    let achieved = bivariate_tail(c, rho, m, side)?;
    if (achieved - metric.alpha).abs() > PROB_TOL {
        return Err(Error::Convergence(format!(
            "threshold search ended at level {achieved} for target {}",
            metric.alpha
        )));
    }
    Ok(ThresholdResult {
        critical_value: c,
        p_threshold: two_sided_p_value(c),
        metric: *metric,
        z_correlation: CorrelationMatrix::bivariate(rho)?,
        achieved_level: achieved,
        std_error: 0.0,
    })
}

/// Critical value for two tests with correlation `rho`.
pub fn generalized_dunnett_threshold(rho: f64, metric: &ErrorMetric) -> Result<ThresholdResult> {
    bivariate_threshold(rho, metric)
}

/// Conventional Dunnett FWER threshold using the shared-control correlation
/// only.
pub fn classical_dunnett_threshold(arms: &SingleStudyArms, alpha: f64) -> Result<ThresholdResult> {
    check_alpha(alpha)?;
    let rho = classical_dunnett_correlation(arms)?;
    bivariate_threshold(rho, &ErrorMetric::fwer(alpha))
}

/// Common critical value for all 2K statistics.
///
/// FWER uses randomized rectangle probabilities (exact for two tests).
/// Multi-error metrics with more than two tests use common random numbers:
/// the root of `P(#exceedances ≥ m) = α` over one fixed set of null draws is
/// the empirical `1 − α` quantile of the m-th largest exceedance statistic.
pub fn platform_threshold(
    z_corr: &CorrelationMatrix,
    metric: &ErrorMetric,
    precision: f64,
    seed: u64,
) -> Result<ThresholdResult> {
    metric.validate()?;
    if !(precision > 0.0) {
        return Err(Error::domain("precision must be positive"));
    }
    let d = z_corr.dim();
    let (m, side) = metric.event();
    if m > d {
        return Err(Error::domain(format!("m = {m} exceeds the number of tests ({d})")));
    }
    if d == 1 {
        let q = match side {
            Sidedness::TwoSided => 1.0 - metric.alpha / 2.0,
            Sidedness::OneSidedUpper => 1.0 - metric.alpha,
        };
        let c = crate::numeric::std_normal_quantile(q)?;
        return Ok(ThresholdResult {
            critical_value: c,
            p_threshold: two_sided_p_value(c),
            metric: *metric,
            z_correlation: z_corr.clone(),
            achieved_level: metric.alpha,
            std_error: 0.0,
        });
    }
    if d == 2 {
        let mut r = bivariate_threshold(z_corr.get(0, 1), metric)?;
        r.z_correlation = z_corr.clone();
        return Ok(r);
    }
    if m == 1 && side == Sidedness::TwoSided {
        fwer_qmc_threshold(z_corr, metric, precision, seed)
    } else {
        order_statistic_threshold(z_corr, metric, precision, seed)
    }
}

fn fwer_qmc_threshold(z_corr: &CorrelationMatrix, metric: &ErrorMetric, precision: f64, seed: u64) -> Result<ThresholdResult> {
    let level = |c: f64| -> Result<(f64, f64)> {
        if c <= 0.0 {
            return Ok((1.0, 0.0));
        }
        let est = mvn_rectangle(&RectangleSpec::symmetric(c, z_corr.clone())?, precision, seed)?;
        Ok((1.0 - est.value, est.std_error))
    };
    let c = solve_decreasing(|c| level(c).map(|v| v.0), metric.alpha)?;
    let (achieved, se) = level(c)?;
    Ok(ThresholdResult {
        critical_value: c,
        p_threshold: two_sided_p_value(c),
        metric: *metric,
        z_correlation: z_corr.clone(),
        achieved_level: achieved,
        std_error: se,
    })
}

fn order_statistic_threshold(
    z_corr: &CorrelationMatrix,
    metric: &ErrorMetric,
    precision: f64,
    seed: u64,
) -> Result<ThresholdResult> {
    let alpha = metric.alpha;
    let needed = (alpha * (1.0 - alpha) / (precision * precision)).ceil();
    if needed > MAX_MC_DRAWS as f64 {
        return Err(Error::PrecisionUnreachable {
            requested: precision,
            achieved: (alpha * (1.0 - alpha) / MAX_MC_DRAWS as f64).sqrt(),
            evaluations: MAX_MC_DRAWS,
        });
    }
    let draws = (needed as usize).max(MIN_MC_DRAWS);
    let (m, side) = metric.event();
    let stats = order_statistics(z_corr, m, side, draws, seed)?;

    let mut sorted = stats.clone();
    sorted.sort_by(f64::total_cmp);
    // smallest c with #{T > c} ≤ α·n
    let allowed = (alpha * draws as f64).floor() as usize;
    let c = sorted[draws - 1 - allowed.min(draws - 1)].max(0.0);
    let exceed = stats.iter().filter(|t| **t > c).count() as f64 / draws as f64;
    Ok(ThresholdResult {
        critical_value: c,
        p_threshold: two_sided_p_value(c),
        metric: *metric,
        z_correlation: z_corr.clone(),
        achieved_level: exceed,
        std_error: (exceed * (1.0 - exceed) / draws as f64).sqrt(),
    })
}

/// m-th largest of `|Z_i|` (two-sided) or `Z_i` (one-sided) per null draw.
fn order_statistics(z_corr: &CorrelationMatrix, m: usize, side: Sidedness, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let l = z_corr.factor()?.lower;
    let d = z_corr.dim();
    Ok(chunked(
        draws,
        seed,
        0x6d66_7765_0000,
        |rng, n| {
            let mut z = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                correlated_normal(rng, &l, &mut z, &mut x);
                if side == Sidedness::TwoSided {
                    x.iter_mut().for_each(|v| *v = v.abs());
                }
                x.sort_by(|a, b| b.total_cmp(a));
                out.push(x[m - 1]);
            }
            out
        },
        Vec::with_capacity(draws),
        |mut acc, part| {
            acc.extend(part);
            acc
        },
    ))
}

/// How rejections are decided in a simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum RejectionRule {
    /// Reject when `|Z| > c`.
    CriticalValue { c: f64 },
    /// Holm step-down on two-sided p-values.
    Holm { alpha: f64 },
}

/// Simulated false-positive rates under the global null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub fwer: f64,
    pub fmer: f64,
    pub msfp: f64,
    pub fwer_se: f64,
    pub fmer_se: f64,
    pub msfp_se: f64,
    pub replications: usize,
}

/// FWER (any rejection), FMER (two or more rejections) and MSFP (two or
/// more rejections in the upper direction) under `|Z| > c`.
pub fn empirical_error_rates(z_corr: &CorrelationMatrix, critical_value: f64, replications: usize, seed: u64) -> Result<ErrorRates> {
    empirical_error_rates_with(z_corr, RejectionRule::CriticalValue { c: critical_value }, replications, seed)
}

pub fn empirical_error_rates_with(
    z_corr: &CorrelationMatrix,
    rule: RejectionRule,
    replications: usize,
    seed: u64,
) -> Result<ErrorRates> {
    if replications == 0 {
        return Err(Error::domain("need at least one replication"));
    }
    match rule {
        RejectionRule::CriticalValue { c } if c.is_nan() => return Err(Error::domain("critical value is NaN")),
        RejectionRule::Holm { alpha } => check_alpha(alpha)?,
        _ => {}
    }
    let l = z_corr.factor()?.lower;
    let d = z_corr.dim();
    let counts = chunked(
        replications,
        seed,
        0x6e75_6c6c_0000,
        |rng, n| {
            let mut z = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut p = vec![0.0; d];
            let mut reject = vec![false; d];
            let mut c = [0u64; 3];
            for _ in 0..n {
                correlated_normal(rng, &l, &mut z, &mut x);
                match rule {
                    RejectionRule::CriticalValue { c } => {
                        for i in 0..d {
                            reject[i] = x[i].abs() > c;
                        }
                    }
                    RejectionRule::Holm { alpha } => {
                        for i in 0..d {
                            p[i] = two_sided_p_value(x[i]);
                        }
                        holm_into(&p, alpha, &mut reject);
                    }
                }
                let any = reject.iter().filter(|r| **r).count();
                let up = reject.iter().zip(&x).filter(|(r, v)| **r && **v > 0.0).count();
                c[0] += (any >= 1) as u64;
                c[1] += (any >= 2) as u64;
                c[2] += (up >= 2) as u64;
            }
            c
        },
        [0u64; 3],
        |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
    );
    let n = replications as f64;
    let rate = |k: u64| k as f64 / n;
    let se = |p: f64| (p * (1.0 - p) / n).sqrt();
    let (fwer, fmer, msfp) = (rate(counts[0]), rate(counts[1]), rate(counts[2]));
    Ok(ErrorRates {
        fwer,
        fmer,
        msfp,
        fwer_se: se(fwer),
        fmer_se: se(fmer),
        msfp_se: se(msfp),
        replications,
    })
}

fn holm_into(p: &[f64], alpha: f64, reject: &mut [bool]) {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    reject.iter_mut().for_each(|r| *r = false);
    for (i, &idx) in order.iter().enumerate() {
        if p[idx] <= alpha / (n - i) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{std_normal_cdf, std_normal_quantile};

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni_threshold(2, 0.05).unwrap(), 0.025);
        assert_eq!(bonferroni_threshold(1, 0.05).unwrap(), 0.05);
        assert_eq!(bonferroni_threshold(4, 0.05).unwrap(), 0.0125);
        assert!(bonferroni_threshold(0, 0.05).is_err());
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm_reject(&[0.01, 0.04], 0.05).unwrap(), vec![true, true]);
        assert_eq!(holm_reject(&[0.03, 0.60], 0.05).unwrap(), vec![false, false]);
        assert_eq!(holm_reject(&[0.04, 0.01], 0.05).unwrap(), vec![true, true]);
        assert_eq!(holm_reject(&[0.0, 0.9], 0.05).unwrap(), vec![true, false]);
        assert!(holm_reject(&[1.5], 0.05).is_err());
    }

    #[test]
    fn sidak_and_degenerate_limits() {
        let r = generalized_dunnett_threshold(0.0, &ErrorMetric::fwer(0.05)).unwrap();
        let sidak = std_normal_quantile((1.0 + 0.95f64.sqrt()) / 2.0).unwrap();
        assert!((r.critical_value - sidak).abs() < 1e-6);
        assert!((r.critical_value - 2.2365).abs() < 1e-3);
        let r = generalized_dunnett_threshold(1.0, &ErrorMetric::fwer(0.05)).unwrap();
        assert!((r.critical_value - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn independent_baselines_at_196() {
        let r = generalized_dunnett_threshold(0.0, &ErrorMetric::fmer(0.0025)).unwrap();
        assert!((r.critical_value - 1.959964).abs() < 1e-5);
        let r = generalized_dunnett_threshold(0.0, &ErrorMetric::msfp(0.000625)).unwrap();
        assert!((r.critical_value - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn classical_equal_allocation() {
        let arms = SingleStudyArms::equal(50.0, 0.0, 0.0).unwrap();
        let r = classical_dunnett_threshold(&arms, 0.05).unwrap();
        assert!((r.critical_value - 2.2121).abs() < 1e-3);
        let check = 1.0 - bvn_rectangle([-r.critical_value; 2], [r.critical_value; 2], 0.5).unwrap();
        assert!((check - 0.05).abs() < 1e-6);
    }

    #[test]
    fn round_trip_grid() {
        for rho in [0.0, 0.3, 0.461, 0.7, 0.95] {
            for metric in [ErrorMetric::fwer(0.05), ErrorMetric::fmer(0.0025), ErrorMetric::msfp(0.000625)] {
                let r = generalized_dunnett_threshold(rho, &metric).unwrap();
                let (m, side) = metric.event();
                let v = bivariate_tail(r.critical_value, rho, m, side).unwrap();
                assert!((v - metric.alpha).abs() < 1e-6, "rho {rho} {metric:?}: {v}");
                assert!(r.p_threshold > 0.0 && r.p_threshold < 1.0);
            }
        }
    }

    #[test]
    fn smaller_alpha_larger_threshold() {
        for metric in [ErrorMetric::fwer as fn(f64) -> ErrorMetric, ErrorMetric::fmer, ErrorMetric::msfp] {
            let mut prev = 0.0;
            for alpha in [0.1, 0.05, 0.01, 0.001] {
                let c = generalized_dunnett_threshold(0.4, &metric(alpha)).unwrap().critical_value;
                assert!(c > prev);
                prev = c;
            }
        }
    }

    #[test]
    fn unattainable_target_is_bracket_error() {
        // P(Z1 > 0, Z2 > 0) = 1/4 at rho 0, so alpha 0.3 has no root
        assert!(matches!(
            generalized_dunnett_threshold(0.0, &ErrorMetric::msfp(0.3)),
            Err(Error::RootBracket { .. })
        ));
        assert!(matches!(
            generalized_dunnett_threshold(0.0, &ErrorMetric::fwer(1.2)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn k2_independent_sidak() {
        let r = platform_threshold(&CorrelationMatrix::identity(4), &ErrorMetric::fwer(0.05), 1e-5, 3).unwrap();
        let want = std_normal_quantile((1.0 + 0.95f64.powf(0.25)) / 2.0).unwrap();
        assert!((want - 2.4909).abs() < 1e-3);
        assert!((r.critical_value - want).abs() < 2e-3, "{}", r.critical_value);
    }

    #[test]
    fn k1_platform_matches_bivariate() {
        let corr = CorrelationMatrix::bivariate(0.461).unwrap();
        let a = platform_threshold(&corr, &ErrorMetric::fwer(0.05), 1e-4, 1).unwrap();
        let b = generalized_dunnett_threshold(0.461, &ErrorMetric::fwer(0.05)).unwrap();
        assert!((a.critical_value - b.critical_value).abs() < 1e-9);
    }

    #[test]
    fn m_fwer_matches_binomial_oracle() {
        // 4 independent two-sided tests: P(at least 2 of 4 exceed c) = α
        let tail = |c: f64| {
            let q = 2.0 * (1.0 - std_normal_cdf(c));
            1.0 - (1.0 - q).powi(4) - 4.0 * q * (1.0 - q).powi(3)
        };
        let want = solve_decreasing(|c| Ok(tail(c)), 0.05).unwrap();
        let metric = ErrorMetric::m_fwer(2, 0.05, Sidedness::TwoSided);
        let r = platform_threshold(&CorrelationMatrix::identity(4), &metric, 3e-4, 11).unwrap();
        // convert the level error into a c error via the slope of the tail
        let slope = (tail(want - 1e-4) - tail(want + 1e-4)) / 2e-4;
        assert!((tail(r.critical_value) - 0.05).abs() <= 3.0 * r.std_error, "{} vs {want}", r.critical_value);
        assert!((r.critical_value - want).abs() <= 3.0 * r.std_error / slope);
    }

    #[test]
    fn m_fwer_one_is_fwer() {
        let corr = CorrelationMatrix::equicorrelated(4, 0.3).unwrap();
        let a = platform_threshold(&corr, &ErrorMetric::m_fwer(1, 0.05, Sidedness::TwoSided), 2e-4, 5).unwrap();
        let b = platform_threshold(&corr, &ErrorMetric::fwer(0.05), 1e-5, 5).unwrap();
        assert!((a.critical_value - b.critical_value).abs() < 0.01);
    }

    #[test]
    fn empirical_rates_at_independence() {
        let r = empirical_error_rates(&CorrelationMatrix::identity(2), 1.959964, 100_000, 42).unwrap();
        assert!((r.fwer - 0.0975).abs() < 0.003);
        assert!((r.fmer - 0.0025).abs() < 0.0006);
        assert!((r.msfp - 0.000625).abs() < 0.0003);
        // independent tests: upper-upper is one of four equally likely sign patterns
        assert!((r.msfp - r.fmer / 4.0).abs() < 3.0 * (r.msfp_se + r.fmer_se / 4.0));
    }

    #[test]
    fn empirical_rates_deterministic_and_perfect_correlation() {
        let corr = CorrelationMatrix::bivariate(1.0).unwrap();
        let a = empirical_error_rates(&corr, 1.96, 100_000, 8).unwrap();
        let b = empirical_error_rates(&corr, 1.96, 100_000, 8).unwrap();
        assert_eq!(a, b);
        assert!((a.fwer - 0.05).abs() < 0.004);
        assert!((a.fmer - 0.05).abs() < 0.004);
        assert!((a.msfp - 0.025).abs() < 0.003);
    }

    #[test]
    fn conventional_methods_conservative() {
        for rho in [0.0, 0.2, 0.4, 0.6, 0.8] {
            let corr = CorrelationMatrix::bivariate(rho).unwrap();
            let bonf = std_normal_quantile(1.0 - bonferroni_threshold(2, 0.05).unwrap() / 2.0).unwrap();
            let b = empirical_error_rates(&corr, bonf, 50_000, 1).unwrap();
            let h = empirical_error_rates_with(&corr, RejectionRule::Holm { alpha: 0.05 }, 50_000, 1).unwrap();
            assert!(b.fwer <= 0.05 + 3.0 * b.fwer_se);
            assert!(h.fwer <= 0.05 + 3.0 * h.fwer_se);
            assert!(h.fwer >= b.fwer);
        }
    }
}
