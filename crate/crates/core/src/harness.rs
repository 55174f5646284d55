//! Parameter-grid studies producing tidy result tables.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{optimize_allocation, Allocation, DesignScenario};
use crate::correlation::{platform_z_correlation_matrix, test_stat_correlation, PlatformArms, SingleStudyArms};
use crate::error::{Error, Result};
use crate::estimation::{FMER_TARGET, FWER_TARGET, MSFP_TARGET};
use crate::multiplicity::{
    bonferroni_threshold, classical_dunnett_threshold, empirical_error_rates, empirical_error_rates_with,
    generalized_dunnett_threshold, platform_threshold, ErrorMetric, ErrorRates, RejectionRule,
};
use crate::numeric::{std_normal_pdf, std_normal_quantile, CorrelationMatrix, DEFAULT_PRECISION};
use crate::power::{find_sample_size_at, SearchOptions, DEFAULT_N0};

/// Independent-trial rates at the unadjusted 0.05 level.
pub const BASELINE_FWER: f64 = 0.0975;
pub const BASELINE_FMER: f64 = 0.0025;
pub const BASELINE_MSFP: f64 = 0.000625;

pub const DEFAULT_ERROR_REPLICATIONS: usize = 100_000;
pub const DEFAULT_POWER_REPLICATIONS: usize = 10_000;

const PARAMETERS: [&str; 7] = ["rho_AB_A", "rho_AB_B", "rho", "synergy", "delta", "sigma2", "target_power"];

/// Inclusive arithmetic range of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn new(parameter: &str, start: f64, stop: f64, step: f64) -> Self {
        Self {
            parameter: parameter.into(),
            start,
            stop,
            step,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e10).round() / 1e10)
            .collect()
    }
}

/// Cartesian grid of swept parameters over a list of allocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Swept parameters; the first one varies fastest within a curve.
    pub sweeps: Vec<Sweep>,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    /// Allocation ratios `(p_A, p_B, p_AB)`; design surfaces optimize
    /// instead and ignore this list.
    #[serde(default)]
    pub allocations: Vec<[f64; 3]>,
    pub replications: usize,
    pub seed: u64,
}

/// Equal thirds, then control-, monotherapy- and combination-heavy.
pub fn default_allocations() -> Vec<[f64; 3]> {
    vec![
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [0.5, 0.25, 0.25],
        [0.25, 0.5, 0.25],
        [0.25, 0.25, 0.5],
    ]
}

impl GridSpec {
    /// `rho_AB_B` from 0.05 to 0.95 by 0.01 with `rho_AB_A` = 0.3.
    pub fn error_curves_default() -> Self {
        Self {
            sweeps: vec![Sweep::new("rho_AB_B", 0.05, 0.95, 0.01)],
            fixed: BTreeMap::from([("rho_AB_A".to_string(), 0.3)]),
            allocations: default_allocations(),
            replications: DEFAULT_ERROR_REPLICATIONS,
            seed: 1,
        }
    }

    /// `s` in 0.7..1.3 by 0.1 and `ρ_AB,A = ρ_AB,B` in {0.1, 0.3, 0.5, 0.7}
    /// at δ = 0.3, σ² = 1 and 80% power.
    pub fn design_surface_default() -> Self {
        Self {
            sweeps: vec![Sweep::new("synergy", 0.7, 1.3, 0.1), Sweep::new("rho", 0.1, 0.7, 0.2)],
            fixed: BTreeMap::from([
                ("delta".to_string(), 0.3),
                ("sigma2".to_string(), 1.0),
                ("target_power".to_string(), 0.8),
            ]),
            allocations: Vec::new(),
            replications: DEFAULT_POWER_REPLICATIONS,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::domain("replications must be positive"));
        }
        for s in &self.sweeps {
            if !PARAMETERS.contains(&s.parameter.as_str()) {
                return Err(Error::domain(format!("unknown grid parameter `{}`", s.parameter)));
            }
            if !(s.step > 0.0) || !(s.stop >= s.start) || !s.start.is_finite() || !s.stop.is_finite() {
                return Err(Error::domain(format!("sweep of `{}` is empty or has step <= 0", s.parameter)));
            }
            if self.fixed.contains_key(&s.parameter) {
                return Err(Error::domain(format!("`{}` is both swept and fixed", s.parameter)));
            }
        }
        for (name, v) in &self.fixed {
            if !PARAMETERS.contains(&name.as_str()) {
                return Err(Error::domain(format!("unknown grid parameter `{name}`")));
            }
            check_value(name, *v)?;
        }
        for s in &self.sweeps {
            for v in s.values() {
                check_value(&s.parameter, v)?;
            }
        }
        for a in &self.allocations {
            Allocation::new(a.to_vec())?;
        }
        Ok(())
    }

    /// Grid points in emission order; the first sweep varies fastest.
    fn points(&self) -> Vec<Point> {
        let mut points = vec![Point {
            values: self.fixed.clone(),
            curve: 0,
        }];
        for (d, sweep) in self.sweeps.iter().enumerate().rev() {
            let vals = sweep.values();
            let mut next = Vec::with_capacity(points.len() * vals.len());
            for p in &points {
                for (i, v) in vals.iter().enumerate() {
                    let mut q = p.clone();
                    q.values.insert(sweep.parameter.clone(), *v);
                    if d > 0 {
                        q.curve = q.curve * vals.len() + i;
                    }
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}

fn check_value(name: &str, v: f64) -> Result<()> {
    let ok = match name {
        "rho_AB_A" | "rho_AB_B" | "rho" => (-1.0..=1.0).contains(&v),
        "target_power" => v > 0.0 && v < 1.0,
        _ => v > 0.0 && v.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!("`{name}` = {v} is outside its domain")))
    }
}

#[derive(Debug, Clone)]
struct Point {
    values: BTreeMap<String, f64>,
    /// Index of the curve this point lies on (all sweeps but the first).
    curve: usize,
}

impl Point {
    fn get(&self, name: &str, default: f64) -> f64 {
        self.values.get(name).copied().unwrap_or(default)
    }

    fn rho_pair(&self) -> (f64, f64) {
        let common = self.values.get("rho").copied();
        (
            self.values.get("rho_AB_A").copied().or(common).unwrap_or(0.0),
            self.values.get("rho_AB_B").copied().or(common).unwrap_or(0.0),
        )
    }
}

/// Seeds are shared along a curve so neighbouring points use common random
/// numbers, and differ between curves and allocations.
fn point_seed(seed: u64, curve: usize, alloc: usize) -> u64 {
    let key = ((curve as u64) << 16) ^ alloc as u64;
    seed ^ key.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// Aligned with [`ResultTable::columns`].
    pub params: Vec<f64>,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub mc_stderr: f64,
}

/// Tidy table: parameter columns, then `method, metric, value, mc_stderr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub study: String,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    fn new(study: &str, columns: &[&str]) -> Self {
        Self {
            study: study.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, params: &[f64], method: &str, metric: &str, value: f64, mc_stderr: f64) {
        self.rows.push(ResultRow {
            params: params.to_vec(),
            method: method.into(),
            metric: metric.into(),
            value,
            mc_stderr,
        });
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = self.columns.clone();
        h.extend(["method", "metric", "value", "mc_stderr"].map(String::from));
        h
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Rows with the given method and metric, in table order.
    pub fn select<'a>(&'a self, method: &'a str, metric: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(csv_io)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.params.iter().map(|v| format_float(*v)).collect();
            rec.push(r.method.clone());
            rec.push(r.metric.clone());
            rec.push(format_float(r.value));
            rec.push(format_float(r.mc_stderr));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One JSON object per row, keys in header order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rows {
            let mut obj = serde_json::Map::new();
            for (c, v) in self.columns.iter().zip(&r.params) {
                obj.insert(c.clone(), serde_json::json!(v));
            }
            obj.insert("method".into(), r.method.clone().into());
            obj.insert("metric".into(), r.metric.clone().into());
            obj.insert("value".into(), serde_json::json!(r.value));
            obj.insert("mc_stderr".into(), serde_json::json!(r.mc_stderr));
            serde_json::to_writer(&mut out, &obj)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Shortest representation that round-trips.
fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Single-study arm sizes proportional to an allocation.
fn ratio_arms(a: &[f64; 3], rho_ab_a: f64, rho_ab_b: f64) -> Result<SingleStudyArms> {
    SingleStudyArms::new(a[0], a[1], a[2], rho_ab_a, rho_ab_b)
}

const CURVE_COLUMNS: [&str; 7] = ["p_A", "p_B", "p_AB", "rho_AB_A", "rho_AB_B", "rho", "baseline"];

fn push_rates(table: &mut ResultTable, params: &mut [f64; 7], method: &str, r: &ErrorRates) {
    for (metric, value, se, base) in [
        ("fwer", r.fwer, r.fwer_se, BASELINE_FWER),
        ("fmer", r.fmer, r.fmer_se, BASELINE_FMER),
        ("msfp", r.msfp, r.msfp_se, BASELINE_MSFP),
    ] {
        params[6] = base;
        table.push(params, method, metric, value, se);
    }
}

/// Runs `f` over every (point, allocation) pair in parallel and keeps the
/// emission order of [`GridSpec::points`].
fn per_allocation<F>(grid: &GridSpec, f: F) -> Result<Vec<Vec<ResultRow>>>
where
    F: Fn(&Point, usize, &[f64; 3]) -> Result<Vec<ResultRow>> + Sync,
{
    grid.validate()?;
    let allocations = if grid.allocations.is_empty() {
        default_allocations()
    } else {
        grid.allocations.clone()
    };
    let points = grid.points();
    let jobs: Vec<(usize, &Point)> = (0..allocations.len())
        .flat_map(|a| points.iter().map(move |p| (a, p)))
        .collect();
    jobs.par_iter().map(|(a, p)| f(p, *a, &allocations[*a])).collect()
}

fn assemble(study: &str, columns: &[&str], chunks: Vec<Vec<ResultRow>>) -> ResultTable {
    let mut t = ResultTable::new(study, columns);
    t.rows = chunks.into_iter().flatten().collect();
    t
}

fn curve_params(a: &[f64; 3], ra: f64, rb: f64, rho: f64) -> [f64; 7] {
    [a[0], a[1], a[2], ra, rb, rho, 0.0]
}

/// Unadjusted null FWER / FMER / MSFP at c = Φ⁻¹(0.975) along the grid.
pub fn run_error_curves(grid: &GridSpec) -> Result<ResultTable> {
    let c = std_normal_quantile(1.0 - FWER_TARGET / 2.0)?;
    let chunks = per_allocation(grid, |p, ai, a| {
        let (ra, rb) = p.rho_pair();
        let rho = test_stat_correlation(&ratio_arms(a, ra, rb)?)?;
        let rates = empirical_error_rates(
            &CorrelationMatrix::bivariate(rho)?,
            c,
            grid.replications,
            point_seed(grid.seed, p.curve, ai),
        )?;
        let mut t = ResultTable::new("", &CURVE_COLUMNS);
        push_rates(&mut t, &mut curve_params(a, ra, rb, rho), "unadjusted", &rates);
        Ok(t.rows)
    })?;
    Ok(assemble("error_curves", &CURVE_COLUMNS, chunks))
}

/// Null error rates under no adjustment, Bonferroni, Holm, classical
/// Dunnett and the generalized (exact-correlation) FWER threshold.
pub fn run_adjustment_comparison(grid: &GridSpec) -> Result<ResultTable> {
    let alpha = FWER_TARGET;
    let c_unadj = std_normal_quantile(1.0 - alpha / 2.0)?;
    let c_bonf = std_normal_quantile(1.0 - bonferroni_threshold(2, alpha)? / 2.0)?;
    let chunks = per_allocation(grid, |p, ai, a| {
        let (ra, rb) = p.rho_pair();
        let arms = ratio_arms(a, ra, rb)?;
        let rho = test_stat_correlation(&arms)?;
        let corr = CorrelationMatrix::bivariate(rho)?;
        let seed = point_seed(grid.seed, p.curve, ai);
        let n = grid.replications;
        let c_dunnett = classical_dunnett_threshold(&arms, alpha)?.critical_value;
        let c_general = generalized_dunnett_threshold(rho, &ErrorMetric::fwer(alpha))?.critical_value;
        let mut t = ResultTable::new("", &CURVE_COLUMNS);
        let mut params = curve_params(a, ra, rb, rho);
        // one seed for every method: common random numbers across rules
        for (method, rule) in [
            ("unadjusted", RejectionRule::CriticalValue { c: c_unadj }),
            ("bonferroni", RejectionRule::CriticalValue { c: c_bonf }),
            ("holm", RejectionRule::Holm { alpha }),
            ("classical_dunnett", RejectionRule::CriticalValue { c: c_dunnett }),
            ("generalized_dunnett", RejectionRule::CriticalValue { c: c_general }),
        ] {
            let rates = empirical_error_rates_with(&corr, rule, n, seed)?;
            push_rates(&mut t, &mut params, method, &rates);
        }
        Ok(t.rows)
    })?;
    Ok(assemble("adjustments", &CURVE_COLUMNS, chunks))
}

/// Generalized Dunnett p-value thresholds per metric target, plus the rate
/// each threshold achieves when re-applied in a null simulation.
pub fn run_threshold_curves(grid: &GridSpec) -> Result<ResultTable> {
    let chunks = per_allocation(grid, |p, ai, a| {
        let (ra, rb) = p.rho_pair();
        let rho = test_stat_correlation(&ratio_arms(a, ra, rb)?)?;
        let corr = CorrelationMatrix::bivariate(rho)?;
        let seed = point_seed(grid.seed, p.curve, ai);
        let mut t = ResultTable::new("", &CURVE_COLUMNS);
        let mut params = curve_params(a, ra, rb, rho);
        for (name, metric) in [
            ("fwer", ErrorMetric::fwer(FWER_TARGET)),
            ("fmer", ErrorMetric::fmer(FMER_TARGET)),
            ("msfp", ErrorMetric::msfp(MSFP_TARGET)),
        ] {
            let th = generalized_dunnett_threshold(rho, &metric)?;
            params[6] = metric.alpha;
            t.push(&params, "generalized_dunnett", &format!("{name}_p_threshold"), th.p_threshold, 0.0);
            t.push(&params, "generalized_dunnett", &format!("{name}_critical_value"), th.critical_value, 0.0);
            let r = empirical_error_rates(&corr, th.critical_value, grid.replications, seed)?;
            let (v, se) = match name {
                "fwer" => (r.fwer, r.fwer_se),
                "fmer" => (r.fmer, r.fmer_se),
                _ => (r.msfp, r.msfp_se),
            };
            t.push(&params, "generalized_dunnett", &format!("{name}_achieved"), v, se);
        }
        Ok(t.rows)
    })?;
    Ok(assemble("thresholds", &CURVE_COLUMNS, chunks))
}

const SURFACE_COLUMNS: [&str; 14] = [
    "synergy",
    "rho_AB_A",
    "rho_AB_B",
    "delta",
    "sigma2",
    "target_power",
    "p_A",
    "p_B",
    "p_AB",
    "rho",
    "critical_value",
    "p_threshold",
    "achieved_power",
    "search_evaluations",
];

/// Optimal allocation and minimal total N for each grid point and each of
/// the FWER / FMER / MSFP targets. `value` is N*, `mc_stderr` its
/// delta-method standard error.
pub fn run_design_surface(grid: &GridSpec) -> Result<ResultTable> {
    run_design_surface_with(grid, |_, _| {})
}

/// As [`run_design_surface`], calling `progress(done, total)` as points finish.
pub fn run_design_surface_with<P>(grid: &GridSpec, progress: P) -> Result<ResultTable>
where
    P: Fn(usize, usize) + Sync,
{
    grid.validate()?;
    let points = grid.points();
    let total = points.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let chunks: Vec<Vec<ResultRow>> = points
        .par_iter()
        .map(|p| {
            let rows = design_point(grid, p)?;
            let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress(k, total);
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(assemble("design_surface", &SURFACE_COLUMNS, chunks))
}

fn design_point(grid: &GridSpec, p: &Point) -> Result<Vec<ResultRow>> {
    let (ra, rb) = p.rho_pair();
    let s = p.get("synergy", 1.0);
    let delta = p.get("delta", 0.3);
    let sigma2 = p.get("sigma2", 1.0);
    let target = p.get("target_power", 0.8);
    let scenario = DesignScenario::single(delta, s, sigma2, ra, rb)?;
    let alloc = optimize_allocation(&scenario)?;
    let z = platform_z_correlation_matrix(&PlatformArms::from_design(&scenario, &alloc, 1.0)?)?;
    let opts = SearchOptions {
        n0: DEFAULT_N0,
        n_sim: grid.replications,
        seed: point_seed(grid.seed, p.curve, 0),
        ..SearchOptions::default()
    };
    let r = alloc.ratios();
    let mut t = ResultTable::new("", &SURFACE_COLUMNS);
    for (name, metric) in [
        ("fwer", ErrorMetric::fwer(FWER_TARGET)),
        ("fmer", ErrorMetric::fmer(FMER_TARGET)),
        ("msfp", ErrorMetric::msfp(MSFP_TARGET)),
    ] {
        let th = platform_threshold(&z, &metric, DEFAULT_PRECISION, opts.seed)?;
        let res = find_sample_size_at(&scenario, &alloc, th.critical_value, target, &opts)?;
        let se = n_star_stderr(&scenario, &alloc, th.critical_value, res.n_star, res.search_power, opts.n_sim)?;
        let params = [
            s,
            ra,
            rb,
            delta,
            sigma2,
            target,
            r[0],
            r[1],
            r[2],
            z.get(0, 1),
            th.critical_value,
            th.p_threshold,
            res.achieved_power,
            res.search_trace.len() as f64,
        ];
        t.push(&params, name, "n_star", res.n_star as f64, se);
    }
    Ok(t.rows)
}

/// Delta-method standard error of N*: the binomial standard error of the
/// power at N* divided by the slope of the power curve, the slope taken
/// from the weaker comparison's marginal normal approximation.
pub fn n_star_stderr(
    scenario: &DesignScenario,
    alloc: &Allocation,
    critical_value: f64,
    n_star: u64,
    power: f64,
    n_sim: usize,
) -> Result<f64> {
    let n = n_star as f64;
    let w_per_n = crate::allocation::allocation_objective(scenario, alloc)?;
    let m = (w_per_n * n).sqrt();
    // d/dN of 1 - Φ(c - √(wN)) + Φ(-c - √(wN))
    let slope = (std_normal_pdf(critical_value - m) + std_normal_pdf(critical_value + m)) * w_per_n / (2.0 * m);
    let p = power.clamp(0.0, 1.0);
    let se_power = (p * (1.0 - p) / n_sim as f64).sqrt();
    Ok(if slope > 0.0 { se_power / slope } else { f64::INFINITY })
}

/// True when no step of `values` rises by more than `k` pooled standard
/// errors `√(se_i² + se_{i+1}²)`.
pub fn is_nonincreasing(values: &[f64], stderrs: &[f64], k: f64) -> bool {
    values.windows(2).zip(stderrs.windows(2)).all(|(v, s)| {
        let tol = k * (s[0] * s[0] + s[1] * s[1]).sqrt();
        v[1] - v[0] <= tol + 1e-12
    })
}

pub fn is_nondecreasing(values: &[f64], stderrs: &[f64], k: f64) -> bool {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    is_nonincreasing(&neg, stderrs, k)
}
