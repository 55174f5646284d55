//! Test-statistic correlations and arm-mean covariances.
//!
//! Arms are indexed control first, then `(B_k, A+B_k)` per substudy:
//! `(A, B_1, AB_1, …, B_K, AB_K)`. Test statistics are ordered
//! `(Z_{1,1}, Z_{1,2}, …, Z_{K,1}, Z_{K,2})` where `Z_{k,1}` compares the
//! combination `A+B_k` with control and `Z_{k,2}` the monotherapy `B_k`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, DesignScenario};
use crate::error::{Error, Result};
use crate::numeric::CorrelationMatrix;

/// One arm of a (platform) trial. Substudy indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Mono(usize),
    Combo(usize),
}

impl Arm {
    /// Position in the `(A, B_1, AB_1, …)` arm vector.
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Mono(k) => 1 + 2 * k,
            Arm::Combo(k) => 2 + 2 * k,
        }
    }

    pub fn from_index(i: usize) -> Arm {
        match i {
            0 => Arm::Control,
            i if i % 2 == 1 => Arm::Mono((i - 1) / 2),
            i => Arm::Combo((i - 2) / 2),
        }
    }
}

/// Sparse symmetric table of endpoint correlations between arms; missing
/// pairs are 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmCorrelations {
    entries: BTreeMap<(Arm, Arm), f64>,
}

impl ArmCorrelations {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(a: Arm, b: Arm) -> (Arm, Arm) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn set(&mut self, a: Arm, b: Arm, rho: f64) -> Result<()> {
        if a == b {
            return Err(Error::domain("an arm's correlation with itself is fixed at 1"));
        }
        if !(rho.abs() <= 1.0) {
            return Err(Error::domain(format!("arm correlation {rho} outside [-1, 1]")));
        }
        self.entries.insert(Self::key(a, b), rho);
        Ok(())
    }

    pub fn with(mut self, a: Arm, b: Arm, rho: f64) -> Result<Self> {
        self.set(a, b, rho)?;
        Ok(self)
    }

    pub(crate) fn insert(&mut self, a: Arm, b: Arm, rho: f64) {
        self.entries.insert(Self::key(a, b), rho);
    }

    pub fn get(&self, a: Arm, b: Arm) -> f64 {
        if a == b {
            return 1.0;
        }
        self.entries.get(&Self::key(a, b)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Arm, Arm, f64)> + '_ {
        self.entries.iter().map(|(&(a, b), &r)| (a, b, r))
    }

    /// Entries of `other` override entries of `self`.
    pub fn merged(&self, other: &ArmCorrelations) -> ArmCorrelations {
        let mut out = self.clone();
        out.entries.extend(other.entries.iter().map(|(k, v)| (*k, *v)));
        out
    }
}

/// Counts and endpoint correlations of a single substudy.
///
/// Counts are real-valued so that `p_j · N` can be used without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleStudyArms {
    pub n_a: f64,
    pub n_b: f64,
    pub n_ab: f64,
    pub rho_ab_a: f64,
    pub rho_ab_b: f64,
    #[serde(default)]
    pub rho_a_b: f64,
    pub sigma2: f64,
}

impl SingleStudyArms {
    pub fn new(n_a: f64, n_b: f64, n_ab: f64, rho_ab_a: f64, rho_ab_b: f64) -> Result<Self> {
        let arms = Self {
            n_a,
            n_b,
            n_ab,
            rho_ab_a,
            rho_ab_b,
            rho_a_b: 0.0,
            sigma2: 1.0,
        };
        arms.validate()?;
        Ok(arms)
    }

    pub fn equal(n: f64, rho_ab_a: f64, rho_ab_b: f64) -> Result<Self> {
        Self::new(n, n, n, rho_ab_a, rho_ab_b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_a", self.n_a), ("n_b", self.n_b), ("n_ab", self.n_ab)] {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {n}")));
            }
        }
        for (name, r) in [
            ("rho_ab_a", self.rho_ab_a),
            ("rho_ab_b", self.rho_ab_b),
            ("rho_a_b", self.rho_a_b),
        ] {
            if !(r.abs() <= 1.0) {
                return Err(Error::domain(format!("{name} = {r} outside [-1, 1]")));
            }
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::domain("sigma2 must be positive"));
        }
        Ok(())
    }

    pub fn to_platform(&self) -> PlatformArms {
        let mut corr = ArmCorrelations::new();
        corr.entries.insert(ArmCorrelations::key(Arm::Combo(0), Arm::Control), self.rho_ab_a);
        corr.entries.insert(ArmCorrelations::key(Arm::Combo(0), Arm::Mono(0)), self.rho_ab_b);
        corr.entries.insert(ArmCorrelations::key(Arm::Mono(0), Arm::Control), self.rho_a_b);
        PlatformArms {
            n_a: self.n_a,
            n_b: vec![self.n_b],
            n_ab: vec![self.n_ab],
            correlations: corr,
            sigma2: self.sigma2,
        }
    }
}

/// Correlation of `(Z_1, Z_2)` from arm correlations and counts, including
/// a non-zero control–monotherapy correlation when given.
pub fn test_stat_correlation(arms: &SingleStudyArms) -> Result<f64> {
    arms.validate()?;
    let SingleStudyArms {
        n_a,
        n_b,
        n_ab,
        rho_ab_a,
        rho_ab_b,
        rho_a_b,
        ..
    } = *arms;
    let num = rho_ab_b / (n_ab * n_b).sqrt() - rho_ab_a / (n_ab * n_a).sqrt() - rho_a_b / (n_a * n_b).sqrt()
        + 1.0 / n_a;
    let v1 = 1.0 / n_ab + 1.0 / n_a - 2.0 * rho_ab_a / (n_ab * n_a).sqrt();
    let v2 = 1.0 / n_a + 1.0 / n_b - 2.0 * rho_a_b / (n_a * n_b).sqrt();
    if !(v1 > 0.0 && v2 > 0.0) {
        return Err(Error::domain(format!(
            "contrast variance is not positive ({v1:e}, {v2:e}); arm correlations are inconsistent"
        )));
    }
    Ok((num / (v1 * v2).sqrt()).clamp(-1.0, 1.0))
}

/// Shared-control correlation used by the classical Dunnett comparator,
/// `1/√((n_A/n_AB + 1)(n_B/n_AB + 1))`.
pub fn classical_dunnett_correlation(arms: &SingleStudyArms) -> Result<f64> {
    arms.validate()?;
    Ok(1.0 / ((arms.n_a / arms.n_ab + 1.0) * (arms.n_b / arms.n_ab + 1.0)).sqrt())
}

/// Counts and arm correlations for a K-substudy platform trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformArms {
    pub n_a: f64,
    pub n_b: Vec<f64>,
    pub n_ab: Vec<f64>,
    pub correlations: ArmCorrelations,
    pub sigma2: f64,
}

impl PlatformArms {
    pub fn k(&self) -> usize {
        self.n_b.len()
    }

    /// Arms sized `p_j · N` with correlations taken from the scenario.
    pub fn from_design(scenario: &DesignScenario, alloc: &Allocation, n_total: f64) -> Result<Self> {
        if alloc.k() != scenario.k() {
            return Err(Error::domain("allocation and scenario have different K"));
        }
        Ok(Self {
            n_a: alloc.p_a() * n_total,
            n_b: (0..scenario.k()).map(|k| alloc.p_b(k) * n_total).collect(),
            n_ab: (0..scenario.k()).map(|k| alloc.p_ab(k) * n_total).collect(),
            correlations: scenario.arm_correlations(),
            sigma2: scenario.sigma2,
        })
    }

    fn count(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.n_a,
            Arm::Mono(k) => self.n_b[k],
            Arm::Combo(k) => self.n_ab[k],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_b.is_empty() || self.n_b.len() != self.n_ab.len() {
            return Err(Error::domain("need K >= 1 substudies with both arms sized"));
        }
        let k = self.k();
        if !(self.sigma2 > 0.0) {
            return Err(Error::domain("sigma2 must be positive"));
        }
        for i in 0..=2 * k {
            let n = self.count(Arm::from_index(i));
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::domain(format!("arm {:?} has non-positive size {n}", Arm::from_index(i))));
            }
        }
        for (a, b, _) in self.correlations.iter() {
            for arm in [a, b] {
                if arm.index() > 2 * k {
                    return Err(Error::domain(format!("correlation refers to arm {arm:?} beyond K = {k}")));
                }
            }
        }
        Ok(())
    }
}

/// Investigational arm behind statistic `Z_{k,i}` in the fixed ordering.
pub fn statistic_arm(index: usize) -> Arm {
    let k = index / 2;
    if index % 2 == 0 {
        Arm::Combo(k)
    } else {
        Arm::Mono(k)
    }
}

/// 2K×2K correlation matrix of the test statistics.
pub fn platform_z_correlation_matrix(arms: &PlatformArms) -> Result<CorrelationMatrix> {
    arms.validate()?;
    let dim = 2 * arms.k();
    let n_a = arms.n_a;
    let rho = &arms.correlations;
    let mut var = vec![0.0; dim];
    for (i, v) in var.iter_mut().enumerate() {
        let arm = statistic_arm(i);
        let n = arms.count(arm);
        *v = 1.0 / n + 1.0 / n_a - 2.0 * rho.get(arm, Arm::Control) / (n * n_a).sqrt();
        if !(*v > 0.0) {
            return Err(Error::domain(format!(
                "contrast variance for {arm:?} is not positive; arm correlations are inconsistent"
            )));
        }
    }
    let mut m = DMatrix::identity(dim, dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let (ai, aj) = (statistic_arm(i), statistic_arm(j));
            let (ni, nj) = (arms.count(ai), arms.count(aj));
            let num = rho.get(ai, aj) / (ni * nj).sqrt() - rho.get(ai, Arm::Control) / (ni * n_a).sqrt()
                - rho.get(aj, Arm::Control) / (nj * n_a).sqrt()
                + 1.0 / n_a;
            let c = (num / (var[i] * var[j]).sqrt()).clamp(-1.0, 1.0);
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    CorrelationMatrix::new(m)
}

/// Mean vector and covariance of the arm means `(Ȳ_A, Ȳ_B1, Ȳ_AB1, …)`
/// under the alternative for total size `n_total`.
pub fn alternative_mean_covariance(
    scenario: &DesignScenario,
    alloc: &Allocation,
    n_total: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    scenario.validate()?;
    alloc.validate()?;
    if alloc.k() != scenario.k() {
        return Err(Error::domain("allocation and scenario have different K"));
    }
    if !(n_total >= 1.0) {
        return Err(Error::domain(format!("total sample size must be >= 1, got {n_total}")));
    }
    let dim = alloc.ratios().len();
    let mut mean = DVector::zeros(dim);
    for k in 0..scenario.k() {
        mean[Arm::Mono(k).index()] = scenario.delta[k];
        mean[Arm::Combo(k).index()] = scenario.synergy[k] * scenario.delta[k];
    }
    let rho = scenario.arm_correlations();
    let p = alloc.ratios();
    let s2 = scenario.sigma2;
    let cov = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            s2 / (p[i] * n_total)
        } else {
            rho.get(Arm::from_index(i), Arm::from_index(j)) * s2 / ((p[i] * p[j]).sqrt() * n_total)
        }
    });
    Ok((mean, cov))
}

/// Standard deviations of the contrasts `Ȳ_{k,i} − Ȳ_A` in statistic order.
pub fn contrast_std_devs(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = (cov.nrows() - 1) / 2;
    (0..2 * k)
        .map(|i| {
            let a = statistic_arm(i).index();
            let v = cov[(a, a)] + cov[(0, 0)] - 2.0 * cov[(a, 0)];
            if v > 0.0 {
                Ok(v.sqrt())
            } else {
                Err(Error::domain("contrast variance is not positive"))
            }
        })
        .collect()
}

/// Writes `Z_{k,i} = (Ȳ_{k,i} − Ȳ_A) / sd_{k,i}` into `out`.
pub fn z_statistics(arm_means: &[f64], sds: &[f64], out: &mut [f64]) {
    for (i, (z, sd)) in out.iter_mut().zip(sds).enumerate() {
        *z = (arm_means[statistic_arm(i).index()] - arm_means[0]) / sd;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::MvnSampler;

    #[test]
    fn equal_counts_zero_correlation() {
        let arms = SingleStudyArms::equal(50.0, 0.0, 0.0).unwrap();
        assert!((test_stat_correlation(&arms).unwrap() - 0.5).abs() < 1e-15);
        assert!((classical_dunnett_correlation(&arms).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unequal_counts_reduction() {
        let arms = SingleStudyArms::new(200.0, 100.0, 50.0, 0.0, 0.0).unwrap();
        let want = 1.0 / 15f64.sqrt();
        assert!((test_stat_correlation(&arms).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.258199).abs() < 1e-6);
        assert!((classical_dunnett_correlation(&arms).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn classical_formula_limit() {
        let arms = SingleStudyArms::new(10.0, 10.0, 1e9, 0.0, 0.0).unwrap();
        assert!(classical_dunnett_correlation(&arms).unwrap() > 0.9999);
    }

    #[test]
    fn inconsistent_correlation_is_domain_error() {
        // n_a = n_ab and rho_ab_a = 1 makes Var(Ȳ_AB − Ȳ_A) zero
        let arms = SingleStudyArms::new(10.0, 10.0, 10.0, 1.0, 0.0).unwrap();
        assert!(matches!(test_stat_correlation(&arms), Err(Error::Domain(_))));
    }

    #[test]
    fn general_form_honours_rho_a_b() {
        let mut arms = SingleStudyArms::equal(30.0, 0.2, 0.4).unwrap();
        let base = test_stat_correlation(&arms).unwrap();
        arms.rho_a_b = 0.3;
        let with = test_stat_correlation(&arms).unwrap();
        assert!((base - with).abs() > 1e-3);
        let m = platform_z_correlation_matrix(&arms.to_platform()).unwrap();
        assert!((m.get(0, 1) - with).abs() < 1e-14);
    }

    #[test]
    fn platform_k1_is_eq2() {
        let arms = SingleStudyArms::new(40.0, 25.0, 35.0, 0.3, 0.5).unwrap();
        let m = platform_z_correlation_matrix(&arms.to_platform()).unwrap();
        assert_eq!(m.dim(), 2);
        assert!((m.get(0, 1) - test_stat_correlation(&arms).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn platform_k2_shared_control_only() {
        let arms = PlatformArms {
            n_a: 20.0,
            n_b: vec![20.0, 20.0],
            n_ab: vec![20.0, 20.0],
            correlations: ArmCorrelations::new(),
            sigma2: 1.0,
        };
        let m = platform_z_correlation_matrix(&arms).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.5 };
                assert!((m.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn arm_index_round_trip() {
        for i in 0..9 {
            assert_eq!(Arm::from_index(i).index(), i);
        }
        assert_eq!(statistic_arm(0), Arm::Combo(0));
        assert_eq!(statistic_arm(3), Arm::Mono(1));
    }

    #[test]
    fn alternative_distribution_examples() {
        let sc = DesignScenario::single(0.3, 1.0, 1.0, 0.0, 0.0).unwrap();
        let alloc = Allocation::new(vec![1.0 / 3.0; 3]).unwrap();
        let (mean, cov) = alternative_mean_covariance(&sc, &alloc, 300.0).unwrap();
        assert_eq!(mean.as_slice(), &[0.0, 0.3, 0.3]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.01 } else { 0.0 };
                assert!((cov[(i, j)] - want).abs() < 1e-15);
            }
        }

        let sc = DesignScenario::single(0.3, 1.0, 1.0, 0.5, 0.0).unwrap();
        let alloc = Allocation::new(vec![0.25, 0.5, 0.25]).unwrap();
        let (_, cov) = alternative_mean_covariance(&sc, &alloc, 400.0).unwrap();
        assert!((cov[(2, 0)] - 0.005).abs() < 1e-15);
        assert!((cov[(0, 2)] - 0.005).abs() < 1e-15);
        assert_eq!(cov[(0, 1)], 0.0);
    }

    #[test]
    fn simulated_z_correlation_matches() {
        let sc = DesignScenario::single(0.3, 1.2, 1.0, 0.3, 0.3).unwrap();
        let alloc = Allocation::new(vec![1.0 / 3.0; 3]).unwrap();
        let (mean, cov) = alternative_mean_covariance(&sc, &alloc, 300.0).unwrap();
        let sds = contrast_std_devs(&cov).unwrap();
        let draws = MvnSampler::new(mean, cov, 21).unwrap().sample(100_000);
        let mut z = [0.0; 2];
        let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..draws.nrows() {
            let row: Vec<f64> = draws.row(r).iter().copied().collect();
            z_statistics(&row, &sds, &mut z);
            s1 += z[0];
            s2 += z[1];
            s11 += z[0] * z[0];
            s22 += z[1] * z[1];
            s12 += z[0] * z[1];
        }
        let n = draws.nrows() as f64;
        let c = (s12 / n - s1 * s2 / n / n) / ((s11 / n - (s1 / n).powi(2)) * (s22 / n - (s2 / n).powi(2))).sqrt();
        let arms = SingleStudyArms::equal(100.0, 0.3, 0.3).unwrap();
        assert!((c - test_stat_correlation(&arms).unwrap()).abs() < 0.01);
    }
}
