//! Multiplicity control, allocation and sample-size design for platform
//! trials that test combination therapies against a shared control.

pub mod allocation;
pub mod correlation;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod multiplicity;
pub mod numeric;
pub mod power;
pub mod simplex;

pub use allocation::{
    allocation_objective, closed_form_allocation, optimize_allocation, optimize_allocation_with, wald_noncentrality,
    Allocation, DesignScenario, OptimizeOptions,
};
pub use correlation::{test_stat_correlation, Arm, ArmCorrelations, PlatformArms, SingleStudyArms};
pub use error::{Error, Result};
pub use estimation::{estimate_trial, ingest_csv, pooled_sd, PairedEndpointTable, TrialEstimates};
pub use harness::{GridSpec, ResultTable, Sweep};
pub use multiplicity::{
    empirical_error_rates, generalized_dunnett_threshold, platform_threshold, ErrorMetric, ErrorRates, MetricKind,
    ThresholdResult,
};
pub use numeric::CorrelationMatrix;
pub use power::{find_sample_size, mc_power, PowerRequest, SampleSizeResult, SearchOptions};
