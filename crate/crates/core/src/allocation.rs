//! Wald noncentrality, allocation ratios and the max–min allocation search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{Arm, ArmCorrelations};
use crate::error::{Error, Result};
use crate::numeric::sampling::{standard_normal, stream_rng};
use crate::simplex::{nelder_mead, NelderMeadOptions};

/// Effect sizes, synergy and correlations of a K-substudy design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignScenario {
    /// Monotherapy effect δ_k per substudy (endpoint units).
    pub delta: Vec<f64>,
    /// Synergy s_k: the combination effect is `s_k · δ_k`.
    pub synergy: Vec<f64>,
    pub sigma2: f64,
    /// Combination–control endpoint correlation per substudy.
    pub rho_ab_a: Vec<f64>,
    /// Combination–monotherapy endpoint correlation per substudy.
    pub rho_ab_b: Vec<f64>,
    /// Any further arm correlations (cross-substudy, control–monotherapy).
    #[serde(default)]
    pub extra_correlations: ArmCorrelations,
}

impl DesignScenario {
    pub fn single(delta: f64, synergy: f64, sigma2: f64, rho_ab_a: f64, rho_ab_b: f64) -> Result<Self> {
        let sc = Self {
            delta: vec![delta],
            synergy: vec![synergy],
            sigma2,
            rho_ab_a: vec![rho_ab_a],
            rho_ab_b: vec![rho_ab_b],
            extra_correlations: ArmCorrelations::new(),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn k(&self) -> usize {
        self.delta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::domain("scenario needs at least one substudy"));
        }
        if self.synergy.len() != k || self.rho_ab_a.len() != k || self.rho_ab_b.len() != k {
            return Err(Error::domain(format!(
                "per-substudy vectors must all have length K = {k}"
            )));
        }
        for i in 0..k {
            if !(self.delta[i] > 0.0 && self.delta[i].is_finite()) {
                return Err(Error::domain(format!("delta[{i}] = {} must be positive", self.delta[i])));
            }
            if !(self.synergy[i] > 0.0 && self.synergy[i].is_finite()) {
                return Err(Error::domain(format!("synergy[{i}] = {} must be positive", self.synergy[i])));
            }
            for (name, r) in [("rho_ab_a", self.rho_ab_a[i]), ("rho_ab_b", self.rho_ab_b[i])] {
                if !(r.abs() <= 1.0) {
                    return Err(Error::domain(format!("{name}[{i}] = {r} outside [-1, 1]")));
                }
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::domain("sigma2 must be positive"));
        }
        for (a, b, _) in self.extra_correlations.iter() {
            if a.index() > 2 * k || b.index() > 2 * k {
                return Err(Error::domain(format!("correlation between {a:?} and {b:?} is beyond K = {k}")));
            }
        }
        Ok(())
    }

    /// Full arm correlation table; `extra_correlations` override the
    /// per-substudy vectors.
    pub fn arm_correlations(&self) -> ArmCorrelations {
        let mut c = ArmCorrelations::new();
        for k in 0..self.k() {
            c.insert(Arm::Combo(k), Arm::Control, self.rho_ab_a[k]);
            c.insert(Arm::Combo(k), Arm::Mono(k), self.rho_ab_b[k]);
        }
        c.merged(&self.extra_correlations)
    }
}

/// Allocation ratios `(p_A, p_B1, p_AB1, …, p_BK, p_ABK)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_total: Option<u64>,
}

impl Allocation {
    pub fn new(ratios: Vec<f64>) -> Result<Self> {
        let a = Self { ratios, n_total: None };
        a.validate()?;
        Ok(a)
    }

    pub fn equal(k: usize) -> Result<Self> {
        let d = 2 * k + 1;
        Self::new(vec![1.0 / d as f64; d])
    }

    pub fn with_total(mut self, n: u64) -> Self {
        self.n_total = Some(n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.ratios.len();
        if d < 3 || d % 2 == 0 {
            return Err(Error::domain(format!("allocation needs 2K+1 ratios, got {d}")));
        }
        if let Some(p) = self.ratios.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::domain(format!("allocation ratio {p} outside (0, 1)")));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("allocation ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.ratios.len() / 2
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn p_a(&self) -> f64 {
        self.ratios[0]
    }

    pub fn p_b(&self, k: usize) -> f64 {
        self.ratios[Arm::Mono(k).index()]
    }

    pub fn p_ab(&self, k: usize) -> f64 {
        self.ratios[Arm::Combo(k).index()]
    }

    /// Integer arm sizes summing to `n` by largest remainder.
    pub fn arm_counts(&self, n: u64) -> Vec<u64> {
        let exact: Vec<f64> = self.ratios.iter().map(|p| p * n as f64).collect();
        let mut counts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
        let assigned: u64 = counts.iter().sum();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
            counts[i] += 1;
        }
        counts
    }
}

/// Unconstrained parameters mapped onto the simplex by softmax, in the same
/// arm order as [`Allocation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams {
    pub theta: Vec<f64>,
}

pub fn softmax_to_allocation(params: &SoftmaxParams) -> Result<Allocation> {
    let t = &params.theta;
    if t.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("softmax parameters must be finite"));
    }
    Allocation::new(softmax(t))
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `(W_k1, W_k2)` for combination and monotherapy comparisons.
pub fn wald_noncentrality(scenario: &DesignScenario, alloc: &Allocation, n: f64) -> Result<Vec<(f64, f64)>> {
    scenario.validate()?;
    alloc.validate()?;
    if alloc.k() != scenario.k() {
        return Err(Error::domain("allocation and scenario have different K"));
    }
    if !(n >= 1.0) {
        return Err(Error::domain(format!("total sample size must be >= 1, got {n}")));
    }
    let w = wald_per_unit(&scenario.delta, &scenario.synergy, &scenario.rho_ab_a, alloc.ratios())?;
    Ok(w.into_iter().map(|(a, b)| (a * n / scenario.sigma2, b * n / scenario.sigma2)).collect())
}

/// Noncentralities with `N = σ² = 1`.
fn wald_per_unit(delta: &[f64], synergy: &[f64], rho_ab_a: &[f64], p: &[f64]) -> Result<Vec<(f64, f64)>> {
    let p_a = p[0];
    (0..delta.len())
        .map(|k| {
            let (p_b, p_ab) = (p[Arm::Mono(k).index()], p[Arm::Combo(k).index()]);
            let d1 = 1.0 / p_ab + 1.0 / p_a - 2.0 * rho_ab_a[k] / (p_ab * p_a).sqrt();
            if !(d1 > 0.0) {
                return Err(Error::domain(format!(
                    "combination contrast variance {d1:e} is not positive in substudy {k}"
                )));
            }
            let d2 = 1.0 / p_a + 1.0 / p_b;
            let dd = delta[k] * delta[k];
            Ok((synergy[k] * synergy[k] * dd / d1, dd / d2))
        })
        .collect()
}

/// `min_{k,i} W_{k,i}` per subject (`N = 1`).
pub fn allocation_objective(scenario: &DesignScenario, alloc: &Allocation) -> Result<f64> {
    let w = wald_noncentrality(scenario, alloc, 1.0)?;
    Ok(w.iter().flat_map(|(a, b)| [*a, *b]).fold(f64::INFINITY, f64::min))
}

/// Exact optimum for one substudy with no combination–control correlation.
pub fn closed_form_allocation(s: f64) -> Result<Allocation> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::domain(format!("synergy must be positive, got {s}")));
    }
    let r = (s + 1.0).sqrt();
    let p_a = (r - 1.0) / s;
    let p_b = (s + 1.0 - r) / (s + 1.0);
    let p_ab = (s + 1.0 - r) / (s * (s + 1.0));
    Allocation::new(vec![p_a, p_b, p_ab])
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub starts: usize,
    pub seed: u64,
    pub simplex: NelderMeadOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 20_240_917,
            simplex: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizedAllocation {
    pub allocation: Allocation,
    /// `min_{k,i} W_{k,i}` per subject at the optimum.
    pub objective: f64,
    /// Start that produced the winner; `None` when the closed form won.
    pub start: Option<usize>,
    /// Per-unit objective reached by each start (NaN if it failed).
    pub start_objectives: Vec<f64>,
}

pub fn optimize_allocation(scenario: &DesignScenario) -> Result<Allocation> {
    Ok(optimize_allocation_with(scenario, &OptimizeOptions::default())?.allocation)
}

pub fn optimize_allocation_with(scenario: &DesignScenario, opts: &OptimizeOptions) -> Result<OptimizedAllocation> {
    scenario.validate()?;
    if opts.starts == 0 {
        return Err(Error::domain("need at least one optimizer start"));
    }

    // δ is rescaled by its maximum so that the search is independent of the
    // units of δ, σ² and N.
    let dmax = scenario.delta.iter().copied().fold(0.0, f64::max);
    let delta: Vec<f64> = scenario.delta.iter().map(|d| d / dmax).collect();
    let dim = 2 * scenario.k() + 1;
    // θ_A is pinned to 0; softmax is shift invariant so nothing is lost.
    let objective = |free: &[f64]| -> f64 {
        let mut theta = Vec::with_capacity(dim);
        theta.push(0.0);
        theta.extend_from_slice(free);
        let p = softmax(&theta);
        if p.iter().any(|x| *x <= 0.0) {
            return f64::INFINITY;
        }
        match wald_per_unit(&delta, &scenario.synergy, &scenario.rho_ab_a, &p) {
            Ok(w) => -w.iter().flat_map(|(a, b)| [*a, *b]).fold(f64::INFINITY, f64::min),
            Err(_) => f64::INFINITY,
        }
    };

    let mut rng = stream_rng(opts.seed, 0x616c_6c6f);
    let starts: Vec<Vec<f64>> = (0..opts.starts)
        .map(|_| {
            let t: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
            t[1..].iter().map(|x| x - t[0]).collect()
        })
        .collect();

    let runs: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|x0| {
            let mut best = nelder_mead(objective, x0, &opts.simplex);
            // restart from the best vertex until a fresh simplex stops improving
            for _ in 0..20 {
                if !best.converged {
                    break;
                }
                let next = nelder_mead(objective, &best.x, &opts.simplex);
                let gained = best.f - next.f;
                let converged = next.converged;
                if next.f <= best.f {
                    best = next;
                }
                if !converged || gained <= opts.simplex.f_tol {
                    break;
                }
            }
            (best.converged && best.f.is_finite()).then_some((best.f, best.x))
        })
        .collect();

    let winner = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|(f, x)| (i, *f, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::Convergence(format!("all {} optimizer starts failed", opts.starts)))?;

    let mut theta = vec![0.0];
    theta.extend_from_slice(winner.2);
    let scale = dmax * dmax / scenario.sigma2;
    let mut out = OptimizedAllocation {
        allocation: Allocation::new(softmax(&theta))?,
        objective: 0.0,
        start: Some(winner.0),
        start_objectives: runs
            .iter()
            .map(|r| r.as_ref().map_or(f64::NAN, |(f, _)| -f * scale))
            .collect(),
    };
    out.objective = allocation_objective(scenario, &out.allocation)?;

    // The closed form is kept only if it is at least as good as the search.
    if scenario.k() == 1 && scenario.rho_ab_a[0] == 0.0 {
        let cf = closed_form_allocation(scenario.synergy[0])?;
        let cf_obj = allocation_objective(scenario, &cf)?;
        if cf_obj >= out.objective {
            out.allocation = cf;
            out.objective = cf_obj;
            out.start = None;
        }
    }
    Ok(out)
}
