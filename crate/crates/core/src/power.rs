//! Monte Carlo power and the doubling / binary-search sample-size procedure.
//!
//! The arm-mean covariance at counts `n_j` is `D R D` with
//! `D = diag(σ/√n_j)` and `R` the arm correlation matrix, so
//! `Ȳ = μ + D L_R w`. One pool of `L_R w` vectors per seed therefore serves
//! every candidate N (and any rounding of the counts) with common random
//! numbers.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, DesignScenario};
use crate::correlation::{statistic_arm, Arm};
use crate::error::{Error, Result};
use crate::multiplicity::ThresholdResult;
use crate::numeric::sampling::{chunked, correlated_normal};
use crate::numeric::{cholesky, std_normal_cdf, DEFAULT_JITTER_TOL};

pub const DEFAULT_N_SIM: usize = 10_000;
pub const DEFAULT_N0: u64 = 20;
pub const DEFAULT_CAP: u64 = 1_000_000;
const MIN_N_SIM: usize = 1_000;
const POOL_STREAM: u64 = 0x706f_7765_7200_0000;

/// Inputs of a single power evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRequest {
    pub scenario: DesignScenario,
    pub alloc: Allocation,
    pub critical_value: f64,
    pub n_total: f64,
    pub n_sim: usize,
    pub seed: u64,
}

impl PowerRequest {
    pub fn new(
        scenario: DesignScenario,
        alloc: Allocation,
        threshold: &ThresholdResult,
        n_total: f64,
        n_sim: usize,
        seed: u64,
    ) -> Self {
        Self {
            scenario,
            alloc,
            critical_value: threshold.critical_value,
            n_total,
            n_sim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.alloc.validate()?;
        if self.alloc.k() != self.scenario.k() {
            return Err(Error::domain("allocation and scenario have different K"));
        }
        check_n_sim(self.n_sim)?;
        let min_n = (2 * self.scenario.k() + 1) as f64;
        if !(self.n_total >= min_n) {
            return Err(Error::domain(format!("N = {} is below one subject per arm ({min_n})", self.n_total)));
        }
        if !(self.critical_value > 0.0) {
            return Err(Error::domain("critical value must be positive"));
        }
        Ok(())
    }
}

fn check_n_sim(n_sim: usize) -> Result<()> {
    if n_sim < MIN_N_SIM {
        return Err(Error::domain(format!("n_sim = {n_sim} is below the minimum of {MIN_N_SIM}")));
    }
    Ok(())
}

/// Per-comparison and joint rejection proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    /// Minimum over comparisons of the rejection proportion.
    pub power: f64,
    /// Rejection proportion of each statistic in `(Z_11, Z_12, …)` order.
    pub per_comparison: Vec<f64>,
    /// Proportion of trials rejecting every hypothesis.
    pub reject_all: f64,
}

/// Correlated standard-normal draws shared across candidate sample sizes.
#[derive(Debug, Clone)]
pub struct PowerPool {
    draws: Vec<f64>,
    dim: usize,
    n_sim: usize,
    rho_with_control: Vec<f64>,
    sigma: f64,
}

impl PowerPool {
    pub fn new(scenario: &DesignScenario, n_sim: usize, seed: u64) -> Result<Self> {
        scenario.validate()?;
        check_n_sim(n_sim)?;
        let dim = 2 * scenario.k() + 1;
        let rho = scenario.arm_correlations();
        let r = DMatrix::from_fn(dim, dim, |i, j| rho.get(Arm::from_index(i), Arm::from_index(j)));
        let l = cholesky(&r, DEFAULT_JITTER_TOL)?.lower;
        let draws = chunked(
            n_sim,
            seed,
            POOL_STREAM,
            |rng, n| {
                let mut z = vec![0.0; dim];
                let mut x = vec![0.0; dim];
                let mut out = Vec::with_capacity(n * dim);
                for _ in 0..n {
                    correlated_normal(rng, &l, &mut z, &mut x);
                    out.extend_from_slice(&x);
                }
                out
            },
            Vec::with_capacity(n_sim * dim),
            |mut acc, part| {
                acc.extend(part);
                acc
            },
        );
        let rho_with_control = (0..dim).map(|j| rho.get(Arm::from_index(j), Arm::Control)).collect();
        Ok(Self {
            draws,
            dim,
            n_sim,
            rho_with_control,
            sigma: scenario.sigma2.sqrt(),
        })
    }

    pub fn n_sim(&self) -> usize {
        self.n_sim
    }

    /// Rejection proportions for arm means `means` and real-valued arm
    /// counts `counts`, both in `(A, B1, AB1, …)` order.
    pub fn estimate(&self, means: &[f64], counts: &[f64], critical_value: f64) -> Result<PowerEstimate> {
        let d = self.dim;
        if means.len() != d || counts.len() != d {
            return Err(Error::domain(format!("expected {d} arm means and counts")));
        }
        if let Some(n) = counts.iter().find(|n| !(**n > 0.0)) {
            return Err(Error::domain(format!("arm count {n} is not positive")));
        }
        let tests = d - 1;
        let scale: Vec<f64> = counts.iter().map(|n| self.sigma / n.sqrt()).collect();
        let mut sd = vec![0.0; tests];
        for (i, s) in sd.iter_mut().enumerate() {
            let a = statistic_arm(i).index();
            let v = scale[a] * scale[a] + scale[0] * scale[0] - 2.0 * self.rho_with_control[a] * scale[a] * scale[0];
            if !(v > 0.0) {
                return Err(Error::domain("contrast variance is not positive; arm correlations are inconsistent"));
            }
            *s = v.sqrt();
        }
        let mut hits = vec![0u64; tests];
        let mut all = 0u64;
        for row in self.draws.chunks_exact(d) {
            let y_a = means[0] + scale[0] * row[0];
            let mut every = true;
            for i in 0..tests {
                let a = statistic_arm(i).index();
                let z = (means[a] + scale[a] * row[a] - y_a) / sd[i];
                if z.abs() > critical_value {
                    hits[i] += 1;
                } else {
                    every = false;
                }
            }
            all += every as u64;
        }
        let n = self.n_sim as f64;
        let per_comparison: Vec<f64> = hits.iter().map(|h| *h as f64 / n).collect();
        Ok(PowerEstimate {
            power: per_comparison.iter().copied().fold(f64::INFINITY, f64::min),
            per_comparison,
            reject_all: all as f64 / n,
        })
    }

    /// Power of `scenario` at real-valued counts `p_j · N`.
    pub fn power_at(&self, scenario: &DesignScenario, alloc: &Allocation, n_total: f64, c: f64) -> Result<PowerEstimate> {
        let counts: Vec<f64> = alloc.ratios().iter().map(|p| p * n_total).collect();
        self.estimate(&arm_means(scenario), &counts, c)
    }
}

/// `(0, δ_1, s_1 δ_1, …)`.
pub fn arm_means(scenario: &DesignScenario) -> Vec<f64> {
    let mut m = vec![0.0; 2 * scenario.k() + 1];
    for k in 0..scenario.k() {
        m[Arm::Mono(k).index()] = scenario.delta[k];
        m[Arm::Combo(k).index()] = scenario.synergy[k] * scenario.delta[k];
    }
    m
}

pub fn mc_power(request: &PowerRequest) -> Result<f64> {
    Ok(mc_power_detail(request)?.power)
}

pub fn mc_power_detail(request: &PowerRequest) -> Result<PowerEstimate> {
    request.validate()?;
    let pool = PowerPool::new(&request.scenario, request.n_sim, request.seed)?;
    pool.power_at(&request.scenario, &request.alloc, request.n_total, request.critical_value)
}

/// `P(|Z| > c)` for `Z ~ N(√W, 1)`.
pub fn marginal_power_oracle(w: f64, c: f64) -> Result<f64> {
    if !(w >= 0.0) || !(c > 0.0) {
        return Err(Error::domain(format!("need W >= 0 and c > 0, got W = {w}, c = {c}")));
    }
    let m = w.sqrt();
    Ok(1.0 - std_normal_cdf(c - m) + std_normal_cdf(-c - m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n0: u64,
    pub n_sim: usize,
    pub seed: u64,
    pub cap: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n0: DEFAULT_N0,
            n_sim: DEFAULT_N_SIM,
            seed: 1,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeResult {
    pub n_star: u64,
    /// Power re-evaluated at the rounded per-arm counts.
    pub achieved_power: f64,
    /// Power at `n_star` with real-valued counts, as seen by the search.
    pub search_power: f64,
    pub arm_counts: Vec<u64>,
    /// Joint reject-all proportion at the rounded design.
    pub reject_all: f64,
    /// Every `(N, power)` evaluated, in order.
    pub search_trace: Vec<(u64, f64)>,
}

/// Generic search over a power curve; returns `(N*, power(N*), trace)`.
///
/// When `n0` already meets the target the binary search runs over
/// `[min_n, n0]`.
pub fn search_minimal_n<F>(mut power: F, target: f64, n0: u64, min_n: u64, cap: u64) -> Result<(u64, f64, Vec<(u64, f64)>)>
where
    F: FnMut(u64) -> Result<f64>,
{
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::domain(format!("target power {target} outside (0, 1)")));
    }
    if n0 < min_n {
        return Err(Error::domain(format!("N0 = {n0} is below the minimum N = {min_n}")));
    }
    if cap < n0 {
        return Err(Error::domain(format!("cap {cap} is below N0 = {n0}")));
    }
    let mut trace = Vec::new();
    let mut seen = BTreeMap::new();
    let mut eval = |n: u64, trace: &mut Vec<(u64, f64)>| -> Result<f64> {
        if let Some(p) = seen.get(&n) {
            return Ok(*p);
        }
        let p = power(n)?;
        seen.insert(n, p);
        trace.push((n, p));
        Ok(p)
    };

    let mut n = n0;
    let mut p = eval(n, &mut trace)?;
    let mut n_min = min_n;
    while p < target {
        if n >= cap {
            return Err(Error::BudgetExceeded {
                n,
                cap,
                power: p,
                target,
            });
        }
        n_min = n;
        n = (2 * n).min(cap);
        p = eval(n, &mut trace)?;
    }
    let n_max = n;

    let (mut low, mut high) = (n_min, n_max);
    while low < high {
        let mid = (low + high) / 2;
        if eval(mid, &mut trace)? >= target {
            high = mid;
        } else {
            low = mid + 1;
        }
    }
    let p_star = eval(low, &mut trace)?;
    Ok((low, p_star, trace))
}

/// Minimal total N whose Monte Carlo power reaches `target_power`.
pub fn find_sample_size(
    scenario: &DesignScenario,
    alloc: &Allocation,
    threshold: &ThresholdResult,
    target_power: f64,
    opts: &SearchOptions,
) -> Result<SampleSizeResult> {
    find_sample_size_at(scenario, alloc, threshold.critical_value, target_power, opts)
}

pub fn find_sample_size_at(
    scenario: &DesignScenario,
    alloc: &Allocation,
    critical_value: f64,
    target_power: f64,
    opts: &SearchOptions,
) -> Result<SampleSizeResult> {
    scenario.validate()?;
    alloc.validate()?;
    if alloc.k() != scenario.k() {
        return Err(Error::domain("allocation and scenario have different K"));
    }
    if !(critical_value > 0.0) {
        return Err(Error::domain("critical value must be positive"));
    }
    let pool = PowerPool::new(scenario, opts.n_sim, opts.seed)?;
    let means = arm_means(scenario);
    let min_n = (2 * scenario.k() + 1) as u64;
    let (n_star, search_power, search_trace) = search_minimal_n(
        |n| Ok(pool.power_at(scenario, alloc, n as f64, critical_value)?.power),
        target_power,
        opts.n0,
        min_n,
        opts.cap,
    )?;

    let arm_counts = alloc.arm_counts(n_star);
    let rounded = if arm_counts.iter().all(|c| *c > 0) {
        let counts: Vec<f64> = arm_counts.iter().map(|c| *c as f64).collect();
        pool.estimate(&means, &counts, critical_value)?
    } else {
        pool.power_at(scenario, alloc, n_star as f64, critical_value)?
    };
    Ok(SampleSizeResult {
        n_star,
        achieved_power: rounded.power,
        search_power,
        arm_counts,
        reject_all: rounded.reject_all,
        search_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::wald_noncentrality;

    fn thirds() -> Allocation {
        Allocation::equal(1).unwrap()
    }

    #[test]
    fn oracle_examples() {
        assert!((marginal_power_oracle(0.0, 1.959964).unwrap() - 0.05).abs() < 1e-6);
        assert!((marginal_power_oracle(4.5, 2.2365).unwrap() - 0.4541).abs() < 1e-4);
        assert!(marginal_power_oracle(400.0, 2.0).unwrap() > 0.999_999);
        assert!(marginal_power_oracle(-1.0, 2.0).is_err());
    }

    #[test]
    fn mc_matches_oracle_example() {
        let sc = DesignScenario::single(0.3, 1.0, 1.0, 0.0, 0.0).unwrap();
        let req = PowerRequest {
            scenario: sc,
            alloc: thirds(),
            critical_value: 2.2365,
            n_total: 300.0,
            n_sim: 100_000,
            seed: 5,
        };
        let p = mc_power(&req).unwrap();
        assert!((p - 0.454).abs() < 0.005, "{p}");
        assert_eq!(p, mc_power(&req).unwrap());
    }

    #[test]
    fn null_calibration() {
        let sc = DesignScenario::single(0.3, 1.0, 1.0, 0.4, 0.4).unwrap();
        let pool = PowerPool::new(&sc, 100_000, 2).unwrap();
        let est = pool.estimate(&[0.0; 3], &[100.0, 100.0, 100.0], 2.2365).unwrap();
        for p in &est.per_comparison {
            assert!((p - 0.02532).abs() < 0.003, "{p}");
        }
        assert!(est.power <= 0.05);
    }

    #[test]
    fn doubling_n_raises_power() {
        for (i, s) in [0.7, 0.9, 1.0, 1.2, 1.5].iter().enumerate() {
            for rho in [0.0, 0.5] {
                let sc = DesignScenario::single(0.25, *s, 1.0, rho, rho).unwrap();
                let pool = PowerPool::new(&sc, 10_000, i as u64).unwrap();
                let a = pool.power_at(&sc, &thirds(), 150.0, 2.2).unwrap().power;
                let b = pool.power_at(&sc, &thirds(), 300.0, 2.2).unwrap().power;
                assert!(b > a);
            }
        }
    }

    #[test]
    fn search_with_surrogate_is_exact() {
        let sc = DesignScenario::single(0.3, 1.1, 1.0, 0.0, 0.0).unwrap();
        let alloc = thirds();
        let curve = |n: u64| {
            let w = wald_noncentrality(&sc, &alloc, n as f64).unwrap()[0];
            Ok(marginal_power_oracle(w.0.min(w.1), 2.2).unwrap())
        };
        let (n, p, _) = search_minimal_n(curve, 0.8, 20, 3, 1_000_000).unwrap();
        assert!(p >= 0.8);
        assert!(curve(n - 1).unwrap() < 0.8);
    }

    #[test]
    fn n0_sufficient_and_one_doubling() {
        let curve = |n: u64| Ok(if n >= 25 { 0.9 } else { 0.1 });
        let (n, _, trace) = search_minimal_n(curve, 0.8, 40, 3, 1000).unwrap();
        assert_eq!(n, 25);
        assert_eq!(trace[0].0, 40);
        let (n, _, trace) = search_minimal_n(curve, 0.8, 20, 3, 1000).unwrap();
        assert_eq!(n, 25);
        assert_eq!(&trace[..2], &[(20, 0.1), (40, 0.9)]);
    }

    #[test]
    fn budget_exceeded() {
        let r = search_minimal_n(|_| Ok(0.5), 0.8, 20, 3, 1000);
        assert!(matches!(r, Err(Error::BudgetExceeded { n: 1000, .. })));
    }

    #[test]
    fn sample_size_reproducible() {
        let sc = DesignScenario::single(0.663, 1.161, 1.0, 0.626, 0.66).unwrap();
        let alloc = Allocation::new(vec![0.445, 0.450, 0.105]).unwrap();
        let opts = SearchOptions::default();
        let a = find_sample_size_at(&sc, &alloc, 2.2163, 0.8, &opts).unwrap();
        let b = find_sample_size_at(&sc, &alloc, 2.2163, 0.8, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.arm_counts.iter().sum::<u64>(), a.n_star);
        assert!((a.n_star as f64 - 97.0).abs() <= 9.7, "{}", a.n_star);
    }
}
