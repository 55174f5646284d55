use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use platform_design::estimation::{self, EstimateOptions, IngestOptions};
use platform_design::multiplicity::{self, Sidedness};
use platform_design::power::{self, PowerRequest, SearchOptions};
use platform_design::{allocation, correlation, ArmCorrelations, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotPositiveDefinite { .. }
        | Error::PrecisionUnreachable { .. }
        | Error::RootBracket { .. }
        | Error::Convergence(_)
        | Error::BudgetExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn metric(name: &str, alpha: Option<f64>, m: usize, one_sided: bool) -> PyResult<multiplicity::ErrorMetric> {
    use multiplicity::ErrorMetric as M;
    Ok(match name {
        "fwer" => M::fwer(alpha.unwrap_or(0.05)),
        "fmer" => M::fmer(alpha.unwrap_or(0.0025)),
        "msfp" => M::msfp(alpha.unwrap_or(0.000625)),
        "mfwer" => {
            let side = if one_sided {
                Sidedness::OneSidedUpper
            } else {
                Sidedness::TwoSided
            };
            M::m_fwer(m, alpha.unwrap_or(0.05), side)
        }
        other => return Err(PyValueError::new_err(format!("unknown metric `{other}`"))),
    })
}

/// Effect sizes, synergy and endpoint correlations, one entry per substudy.
#[pyclass(name = "DesignScenario", module = "platform_design_py")]
#[derive(Clone)]
struct PyDesignScenario {
    inner: allocation::DesignScenario,
}

#[pymethods]
impl PyDesignScenario {
    #[new]
    #[pyo3(signature = (delta, synergy, rho_ab_a, rho_ab_b, sigma2 = 1.0))]
    fn new(delta: Vec<f64>, synergy: Vec<f64>, rho_ab_a: Vec<f64>, rho_ab_b: Vec<f64>, sigma2: f64) -> PyResult<Self> {
        let inner = allocation::DesignScenario {
            delta,
            synergy,
            sigma2,
            rho_ab_a,
            rho_ab_b,
            extra_correlations: ArmCorrelations::new(),
        };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// One-substudy scenario.
    #[staticmethod]
    #[pyo3(signature = (delta, synergy, rho_ab_a, rho_ab_b, sigma2 = 1.0))]
    fn single(delta: f64, synergy: f64, rho_ab_a: f64, rho_ab_b: f64, sigma2: f64) -> PyResult<Self> {
        allocation::DesignScenario::single(delta, synergy, sigma2, rho_ab_a, rho_ab_b)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn __repr__(&self) -> String {
        format!(
            "DesignScenario(delta={:?}, synergy={:?}, rho_ab_a={:?}, rho_ab_b={:?}, sigma2={})",
            self.inner.delta, self.inner.synergy, self.inner.rho_ab_a, self.inner.rho_ab_b, self.inner.sigma2
        )
    }
}

/// Allocation ratios `(p_A, p_B1, p_AB1, …)`.
#[pyclass(name = "Allocation", module = "platform_design_py")]
#[derive(Clone)]
struct PyAllocation {
    inner: allocation::Allocation,
}

#[pymethods]
impl PyAllocation {
    #[new]
    fn new(ratios: Vec<f64>) -> PyResult<Self> {
        allocation::Allocation::new(ratios).map(|inner| Self { inner }).map_err(py_err)
    }

    #[getter]
    fn ratios(&self) -> Vec<f64> {
        self.inner.ratios().to_vec()
    }

    /// Per-arm integer counts summing to `n` (largest remainder).
    fn arm_counts(&self, n: u64) -> Vec<u64> {
        self.inner.arm_counts(n)
    }

    fn __repr__(&self) -> String {
        format!("Allocation({:?})", self.inner.ratios())
    }
}

#[pyclass(name = "ThresholdResult", module = "platform_design_py", get_all)]
struct PyThresholdResult {
    critical_value: f64,
    p_threshold: f64,
    achieved_level: f64,
    std_error: f64,
}

impl From<multiplicity::ThresholdResult> for PyThresholdResult {
    fn from(t: multiplicity::ThresholdResult) -> Self {
        Self {
            critical_value: t.critical_value,
            p_threshold: t.p_threshold,
            achieved_level: t.achieved_level,
            std_error: t.std_error,
        }
    }
}

#[pymethods]
impl PyThresholdResult {
    fn __repr__(&self) -> String {
        format!(
            "ThresholdResult(critical_value={}, p_threshold={})",
            self.critical_value, self.p_threshold
        )
    }
}

#[pyclass(name = "SampleSizeResult", module = "platform_design_py", get_all)]
struct PySampleSizeResult {
    n_star: u64,
    achieved_power: f64,
    search_power: f64,
    arm_counts: Vec<u64>,
}

#[pymethods]
impl PySampleSizeResult {
    fn __repr__(&self) -> String {
        format!("SampleSizeResult(n_star={}, arm_counts={:?})", self.n_star, self.arm_counts)
    }
}

#[pyclass(name = "TrialEstimates", module = "platform_design_py", get_all)]
struct PyTrialEstimates {
    drug_a: String,
    drug_b: String,
    combo: String,
    rho_ab_a: f64,
    rho_ab_b: f64,
    delta_b: f64,
    delta_ab: f64,
    s_hat: Option<f64>,
    n_a: usize,
    n_b: usize,
    n_ab: usize,
    screened_out: bool,
}

#[pymethods]
impl PyTrialEstimates {
    fn __repr__(&self) -> String {
        format!(
            "TrialEstimates({}/{}/{}, s_hat={:?}, screened_out={})",
            self.drug_a, self.drug_b, self.combo, self.s_hat, self.screened_out
        )
    }
}

/// Correlation of the two test statistics of one substudy.
#[pyfunction]
#[pyo3(signature = (n_a, n_b, n_ab, rho_ab_a, rho_ab_b))]
fn test_stat_correlation(n_a: f64, n_b: f64, n_ab: f64, rho_ab_a: f64, rho_ab_b: f64) -> PyResult<f64> {
    let arms = correlation::SingleStudyArms::new(n_a, n_b, n_ab, rho_ab_a, rho_ab_b).map_err(py_err)?;
    correlation::test_stat_correlation(&arms).map_err(py_err)
}

/// Common critical value for two statistics with correlation `rho`.
#[pyfunction]
#[pyo3(signature = (rho, metric = "fwer", alpha = None, m = 2, one_sided = false))]
fn generalized_dunnett_threshold(
    rho: f64,
    metric: &str,
    alpha: Option<f64>,
    m: usize,
    one_sided: bool,
) -> PyResult<PyThresholdResult> {
    let metric = self::metric(metric, alpha, m, one_sided)?;
    multiplicity::generalized_dunnett_threshold(rho, &metric)
        .map(Into::into)
        .map_err(py_err)
}

/// Threshold for the design's own test statistics at its allocation.
#[pyfunction]
#[pyo3(signature = (scenario, allocation, metric = "fwer", alpha = None, m = 2, one_sided = false, seed = 1))]
fn design_threshold(
    scenario: &PyDesignScenario,
    allocation: &PyAllocation,
    metric: &str,
    alpha: Option<f64>,
    m: usize,
    one_sided: bool,
    seed: u64,
) -> PyResult<PyThresholdResult> {
    let metric = self::metric(metric, alpha, m, one_sided)?;
    let arms = correlation::PlatformArms::from_design(&scenario.inner, &allocation.inner, 1.0).map_err(py_err)?;
    let z = correlation::platform_z_correlation_matrix(&arms).map_err(py_err)?;
    multiplicity::platform_threshold(&z, &metric, platform_design::numeric::DEFAULT_PRECISION, seed)
        .map(Into::into)
        .map_err(py_err)
}

#[pyfunction]
fn closed_form_allocation(s: f64) -> PyResult<PyAllocation> {
    allocation::closed_form_allocation(s)
        .map(|inner| PyAllocation { inner })
        .map_err(py_err)
}

/// Allocation maximizing the smallest Wald noncentrality per subject.
#[pyfunction]
fn optimize_allocation(scenario: &PyDesignScenario) -> PyResult<PyAllocation> {
    allocation::optimize_allocation(&scenario.inner)
        .map(|inner| PyAllocation { inner })
        .map_err(py_err)
}

/// Wald noncentralities `(combination, monotherapy)` per substudy at total `n`.
#[pyfunction]
fn wald_noncentrality(scenario: &PyDesignScenario, allocation: &PyAllocation, n: f64) -> PyResult<Vec<(f64, f64)>> {
    allocation::wald_noncentrality(&scenario.inner, &allocation.inner, n).map_err(py_err)
}

/// Monte Carlo power: the smallest rejection rate over all comparisons.
#[pyfunction]
#[pyo3(signature = (scenario, allocation, critical_value, n_total, n_sim = 10_000, seed = 1))]
fn mc_power(
    scenario: &PyDesignScenario,
    allocation: &PyAllocation,
    critical_value: f64,
    n_total: f64,
    n_sim: usize,
    seed: u64,
) -> PyResult<f64> {
    let req = PowerRequest {
        scenario: scenario.inner.clone(),
        alloc: allocation.inner.clone(),
        critical_value,
        n_total,
        n_sim,
        seed,
    };
    power::mc_power(&req).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (scenario, allocation, critical_value, target_power = 0.8, n_sim = 10_000, seed = 1, n0 = 20))]
fn find_sample_size(
    scenario: &PyDesignScenario,
    allocation: &PyAllocation,
    critical_value: f64,
    target_power: f64,
    n_sim: usize,
    seed: u64,
    n0: u64,
) -> PyResult<PySampleSizeResult> {
    let opts = SearchOptions {
        n0,
        n_sim,
        seed,
        ..SearchOptions::default()
    };
    let r = power::find_sample_size_at(&scenario.inner, &allocation.inner, critical_value, target_power, &opts)
        .map_err(py_err)?;
    Ok(PySampleSizeResult {
        n_star: r.n_star,
        achieved_power: r.achieved_power,
        search_power: r.search_power,
        arm_counts: r.arm_counts,
    })
}

#[pyfunction]
fn pooled_sd(sd1: f64, n1: usize, sd2: f64, n2: usize) -> PyResult<f64> {
    estimation::pooled_sd(sd1, n1, sd2, n2).map_err(py_err)
}

/// Reads a `model_id, treatment, response` CSV and estimates one trial.
#[pyfunction]
#[pyo3(signature = (path, drug_a, drug_b, combo, flip_sign = false, min_triples = 3))]
fn estimate_trial(
    path: &str,
    drug_a: &str,
    drug_b: &str,
    combo: &str,
    flip_sign: bool,
    min_triples: usize,
) -> PyResult<PyTrialEstimates> {
    let table = estimation::ingest_csv(path, &IngestOptions::default()).map_err(py_err)?;
    let e = estimation::estimate_trial(&table, drug_a, drug_b, combo, &EstimateOptions { min_triples, flip_sign })
        .map_err(py_err)?;
    Ok(PyTrialEstimates {
        drug_a: e.drug_a,
        drug_b: e.drug_b,
        combo: e.combo,
        rho_ab_a: e.rho_ab_a,
        rho_ab_b: e.rho_ab_b,
        delta_b: e.delta_b,
        delta_ab: e.delta_ab,
        s_hat: e.s_hat,
        n_a: e.n_a,
        n_b: e.n_b,
        n_ab: e.n_ab,
        screened_out: e.screened_out,
    })
}

/// Null FWER, FMER and MSFP at critical value `c` for two statistics.
#[pyfunction]
#[pyo3(signature = (rho, c, replications = 100_000, seed = 1))]
fn empirical_error_rates(rho: f64, c: f64, replications: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let corr = platform_design::CorrelationMatrix::bivariate(rho).map_err(py_err)?;
    let r = multiplicity::empirical_error_rates(&corr, c, replications, seed).map_err(py_err)?;
    Ok((r.fwer, r.fmer, r.msfp))
}

#[pymodule]
fn platform_design_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesignScenario>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PyThresholdResult>()?;
    m.add_class::<PySampleSizeResult>()?;
    m.add_class::<PyTrialEstimates>()?;
    m.add_function(wrap_pyfunction!(test_stat_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(generalized_dunnett_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(design_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(wald_noncentrality, m)?)?;
    m.add_function(wrap_pyfunction!(mc_power, m)?)?;
    m.add_function(wrap_pyfunction!(find_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(pooled_sd, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_trial, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_error_rates, m)?)?;
    Ok(())
}
