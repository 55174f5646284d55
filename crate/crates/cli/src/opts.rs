//! Flag definitions. Every subcommand struct doubles as its config-file
//! schema, so flags and JSON keys share names (`--rho-ab-a` ↔ `rho_ab_a`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "platform-design",
    version,
    about = "Multiplicity thresholds, allocation and sample size for combination-therapy platform trials",
    after_help = "Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 sample-size budget exceeded.\n\
                  Settings resolve as: flag, then --config file, then defaults. The seed additionally falls \
                  back to PLATFORM_DESIGN_SEED before its default of 1."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalOpts {
    /// 64-bit random seed [default: $PLATFORM_DESIGN_SEED, else 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file of settings keyed like the flags (snake_case); unknown keys are rejected
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output format [default: human]
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write output to this file instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print progress to stderr
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Global keys accepted in a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub verbose: Option<u8>,
}

pub const GLOBAL_KEYS: [&str; 4] = ["seed", "format", "out", "verbose"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Aligned `key: value` lines, 6 significant digits
    Human,
    Csv,
    /// Full precision; JSON lines for simulation tables
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical value and p-value threshold controlling FWER, FMER, MSFP or m-FWER
    Adjust(AdjustOpts),
    /// Optimal allocation, thresholds and minimal total sample size
    Design(DesignOpts),
    /// Correlations, effect sizes and synergy from paired per-model responses
    Estimate(EstimateOpts),
    /// Reproduce a simulation study as a result table
    Simulate(SimulateOpts),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Adjust(_) => "adjust",
            Command::Design(_) => "design",
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fwer,
    Fmer,
    Msfp,
    Mfwer,
}

impl Metric {
    pub fn default_alpha(self) -> f64 {
        match self {
            Metric::Fwer | Metric::Mfwer => 0.05,
            Metric::Fmer => 0.0025,
            Metric::Msfp => 0.000625,
        }
    }
}

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),* ; $($flag:ident),*) => {
        Self {
            $($f: $a.$f.or($b.$f),)*
            $($flag: $a.$flag || $b.$flag,)*
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjustOpts {
    /// Error metric to control [default: fwer]
    #[arg(long, value_enum)]
    pub metric: Option<Metric>,
    /// Target level in (0, 1) [default: 0.05 fwer/mfwer, 0.0025 fmer, 0.000625 msfp]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of false rejections for mfwer [default: 2]
    #[arg(long)]
    pub m: Option<usize>,
    /// Count only upper-tail exceedances for mfwer
    #[arg(long)]
    pub one_sided: bool,
    /// Correlation of the two test statistics, in [-1, 1]; excludes the arm-level flags
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Endpoint correlation between combination and control arms [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub rho_ab_a: Option<f64>,
    /// Endpoint correlation between combination and monotherapy arms [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub rho_ab_b: Option<f64>,
    /// Control arm size (subjects, or any common unit) [default: 1]
    #[arg(long)]
    pub n_a: Option<f64>,
    /// Monotherapy arm size per substudy [default: 1]
    #[arg(long)]
    pub n_b: Option<f64>,
    /// Combination arm size per substudy [default: 1]
    #[arg(long)]
    pub n_ab: Option<f64>,
    /// Number of substudies sharing the control [default: 1]
    #[arg(long)]
    pub k: Option<usize>,
    /// Absolute error target for simulated probabilities [default: 1e-4]
    #[arg(long)]
    pub precision: Option<f64>,
}

impl AdjustOpts {
    pub fn merge(self, c: Self) -> Self {
        merge_fields!(self, c; metric, alpha, m, rho, rho_ab_a, rho_ab_b, n_a, n_b, n_ab, k, precision; one_sided)
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOpts {
    /// Number of substudies [default: 1]
    #[arg(long)]
    pub k: Option<usize>,
    /// Monotherapy effect per substudy in endpoint units; one value is reused for every substudy (required)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub delta: Option<Vec<f64>>,
    /// Synergy: combination effect over monotherapy effect [default: 1]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub synergy: Option<Vec<f64>>,
    /// Combination-control endpoint correlation [default: 0]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub rho_ab_a: Option<Vec<f64>>,
    /// Combination-monotherapy endpoint correlation [default: 0]
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub rho_ab_b: Option<Vec<f64>>,
    /// Endpoint variance, common to all arms [default: 1]
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Target power, the minimum over comparisons [default: 0.8]
    #[arg(long)]
    pub power: Option<f64>,
    /// Error metric to control [default: fwer]
    #[arg(long, value_enum)]
    pub metric: Option<Metric>,
    /// Target level of the metric [default: depends on --metric]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of false rejections for mfwer [default: 2]
    #[arg(long)]
    pub m: Option<usize>,
    /// Count only upper-tail exceedances for mfwer
    #[arg(long)]
    pub one_sided: bool,
    /// Starting total N of the doubling search [default: 20]
    #[arg(long)]
    pub n0: Option<u64>,
    /// Monte Carlo trials per power evaluation, at least 1000 [default: 10000]
    #[arg(long)]
    pub nsim: Option<usize>,
    /// Largest total N tried before giving up with exit code 4 [default: 1000000]
    #[arg(long)]
    pub cap: Option<u64>,
    /// Absolute error target for simulated probabilities [default: 1e-4]
    #[arg(long)]
    pub precision: Option<f64>,
}

impl DesignOpts {
    pub fn merge(self, c: Self) -> Self {
        merge_fields!(self, c;
            k, delta, synergy, rho_ab_a, rho_ab_b, sigma2, power, metric, alpha, m, n0, nsim, cap, precision;
            one_sided)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Duplicates {
    /// Reject the file
    Error,
    /// Average repeated responses
    Mean,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateOpts {
    /// CSV of one response per (model, treatment) row (required)
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Control treatment name
    #[arg(long)]
    pub drug_a: Option<String>,
    /// Monotherapy treatment name
    #[arg(long)]
    pub drug_b: Option<String>,
    /// Combination treatment name
    #[arg(long)]
    pub combo: Option<String>,
    /// CSV with columns drug_a, drug_b, combo; one trial per row
    #[arg(long, value_name = "PATH")]
    pub roles: Option<PathBuf>,
    /// Field delimiter of the input and roles files [default: ,]
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Model identifier column [default: model_id]
    #[arg(long)]
    pub model_col: Option<String>,
    /// Treatment column [default: treatment]
    #[arg(long)]
    pub treatment_col: Option<String>,
    /// Response column [default: response]
    #[arg(long)]
    pub response_col: Option<String>,
    /// Handling of repeated (model, treatment) rows [default: error]
    #[arg(long, value_enum)]
    pub duplicates: Option<Duplicates>,
    /// Negate responses when lower values are better
    #[arg(long)]
    pub flip_sign: bool,
    /// Minimum number of models observed under all three treatments [default: 3]
    #[arg(long)]
    pub min_triples: Option<usize>,
    /// Also report unadjusted null error rates and adjusted thresholds
    #[arg(long)]
    pub thresholds: bool,
    /// Null simulation replications for --thresholds [default: 100000]
    #[arg(long)]
    pub replications: Option<usize>,
}

impl EstimateOpts {
    pub fn merge(self, c: Self) -> Self {
        merge_fields!(self, c;
            input, drug_a, drug_b, combo, roles, delimiter, model_col, treatment_col, response_col,
            duplicates, min_triples, replications;
            flip_sign, thresholds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Unadjusted null FWER/FMER/MSFP against the arm correlations
    ErrorCurves,
    /// Unadjusted, Bonferroni, Holm, classical and generalized Dunnett
    Adjustments,
    /// Generalized Dunnett thresholds per metric and their achieved rates
    Thresholds,
    /// Optimal allocation and N* over synergy and correlation
    DesignSurface,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOpts {
    /// Study to run (required)
    #[arg(long, value_enum)]
    pub study: Option<Study>,
    /// JSON grid replacing the study's default grid
    #[arg(long, value_name = "PATH")]
    pub grid: Option<PathBuf>,
    /// Replications per grid point [default: 100000, or 10000 power trials for design-surface]
    #[arg(long)]
    pub replications: Option<usize>,
}

impl SimulateOpts {
    pub fn merge(self, c: Self) -> Self {
        merge_fields!(self, c; study, grid, replications; )
    }
}
