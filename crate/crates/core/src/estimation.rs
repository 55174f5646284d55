//! Parameter estimation from paired per-model endpoint data.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocation::DesignScenario;
use crate::correlation::{test_stat_correlation, SingleStudyArms};
use crate::error::{Error, Result};
use crate::multiplicity::{empirical_error_rates, generalized_dunnett_threshold, ErrorMetric, ErrorRates, ThresholdResult};

/// How repeated `(model, treatment)` rows are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicatePolicy {
    #[default]
    Error,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub delimiter: u8,
    pub model_column: String,
    pub treatment_column: String,
    pub response_column: String,
    pub duplicates: DuplicatePolicy,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            model_column: "model_id".into(),
            treatment_column: "treatment".into(),
            response_column: "response".into(),
            duplicates: DuplicatePolicy::Error,
        }
    }
}

/// Responses keyed by model and treatment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairedEndpointTable {
    responses: BTreeMap<String, BTreeMap<String, f64>>,
    /// Data lines read (header excluded).
    pub rows_read: usize,
    /// Rows whose response was empty or `NA`.
    pub rows_missing: usize,
    /// Rows merged into an earlier `(model, treatment)` entry.
    pub rows_merged: usize,
}

impl PairedEndpointTable {
    pub fn from_records<I, M, T>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (M, T, f64)>,
        M: Into<String>,
        T: Into<String>,
    {
        let mut table = Self::default();
        for (m, t, y) in records {
            let (m, t) = (m.into(), t.into());
            if !y.is_finite() {
                return Err(Error::domain(format!("response for ({m}, {t}) is not finite")));
            }
            if table.responses.entry(m.clone()).or_default().insert(t.clone(), y).is_some() {
                return Err(Error::domain(format!("duplicate response for ({m}, {t})")));
            }
            table.rows_read += 1;
        }
        Ok(table)
    }

    pub fn response(&self, model: &str, treatment: &str) -> Option<f64> {
        self.responses.get(model)?.get(treatment).copied()
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.responses.keys().map(String::as_str)
    }

    pub fn treatments(&self) -> Vec<String> {
        let mut t: Vec<String> = self.responses.values().flat_map(|m| m.keys().cloned()).collect();
        t.sort();
        t.dedup();
        t
    }

    /// Number of stored `(model, treatment)` responses.
    pub fn len(&self) -> usize {
        self.responses.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Models with a response for every listed treatment.
    pub fn complete_models(&self, treatments: &[&str]) -> Vec<&str> {
        self.responses
            .iter()
            .filter(|(_, r)| treatments.iter().all(|t| r.contains_key(*t)))
            .map(|(m, _)| m.as_str())
            .collect()
    }

    fn arm(&self, treatment: &str) -> Vec<f64> {
        self.responses.values().filter_map(|r| r.get(treatment).copied()).collect()
    }

    fn pairs(&self, a: &str, b: &str) -> (Vec<f64>, Vec<f64>) {
        self.responses
            .values()
            .filter_map(|r| Some((*r.get(a)?, *r.get(b)?)))
            .unzip()
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<PairedEndpointTable> {
    ingest_reader(std::fs::File::open(path)?, opts)
}

pub fn ingest_reader<R: Read>(reader: R, opts: &IngestOptions) -> Result<PairedEndpointTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema { column: name.to_string() })
    };
    let (mc, tc, rc) = (
        column(&opts.model_column)?,
        column(&opts.treatment_column)?,
        column(&opts.response_column)?,
    );

    let mut table = PairedEndpointTable::default();
    // (model, treatment) -> (sum, count, first line)
    let mut acc: BTreeMap<(String, String), (f64, usize, u64)> = BTreeMap::new();
    let mut duplicates: Vec<String> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line());
        table.rows_read += 1;
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        let (model, treatment, raw) = (field(mc), field(tc), field(rc));
        if model.is_empty() || treatment.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty model or treatment".into(),
            });
        }
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
            table.rows_missing += 1;
            continue;
        }
        let y: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("response `{raw}` is not a number"),
        })?;
        if !y.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("response `{raw}` is not finite"),
            });
        }
        let entry = acc.entry((model.to_string(), treatment.to_string())).or_insert((0.0, 0, line));
        if entry.1 > 0 {
            if opts.duplicates == DuplicatePolicy::Error {
                duplicates.push(format!("({model}, {treatment}) at lines {} and {line}", entry.2));
            }
            table.rows_merged += 1;
        }
        entry.0 += y;
        entry.1 += 1;
    }
    if let Some(first) = duplicates.first() {
        let line = first
            .rsplit(' ')
            .next()
            .and_then(|l| l.parse().ok())
            .unwrap_or(0);
        return Err(Error::Parse {
            line,
            message: format!("duplicate (model, treatment) rows: {}", duplicates.join("; ")),
        });
    }
    for ((m, t), (sum, n, _)) in acc {
        table.responses.entry(m).or_default().insert(t, sum / n as f64);
    }
    Ok(table)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// `√(((n1−1)sd1² + (n2−1)sd2²)/(n1+n2−2))`.
pub fn pooled_sd(sd1: f64, n1: usize, sd2: f64, n2: usize) -> Result<f64> {
    if n1 == 0 || n2 == 0 || n1 + n2 < 3 {
        return Err(Error::domain(format!("pooled SD needs n1, n2 >= 1 and n1 + n2 >= 3 (got {n1}, {n2})")));
    }
    if !(sd1 >= 0.0 && sd2 >= 0.0) {
        return Err(Error::domain("standard deviations must be non-negative"));
    }
    let v = ((n1 - 1) as f64 * sd1 * sd1 + (n2 - 1) as f64 * sd2 * sd2) / (n1 + n2 - 2) as f64;
    Ok(v.sqrt())
}

/// Treatment names filling the control, monotherapy and combination roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRoles {
    pub drug_a: String,
    pub drug_b: String,
    pub combo: String,
}

/// Reads a role file with columns `drug_a`, `drug_b`, `combo`.
pub fn read_roles(path: impl AsRef<Path>, delimiter: u8) -> Result<Vec<TrialRoles>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 0))?;
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    for col in ["drug_a", "drug_b", "combo"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema { column: col.into() });
        }
    }
    rdr.deserialize()
        .map(|r: std::result::Result<TrialRoles, csv::Error>| r.map_err(|e| csv_error(e, 0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateOptions {
    pub min_triples: usize,
    /// Negate responses when lower values are better.
    pub flip_sign: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            min_triples: 3,
            flip_sign: false,
        }
    }
}

/// Estimated trial parameters for one (A, B, A+B) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEstimates {
    #[serde(rename = "drug_A")]
    pub drug_a: String,
    #[serde(rename = "drug_B")]
    pub drug_b: String,
    pub combo: String,
    #[serde(rename = "rho_AB_A")]
    pub rho_ab_a: f64,
    #[serde(rename = "rho_AB_B")]
    pub rho_ab_b: f64,
    #[serde(rename = "delta_B")]
    pub delta_b: f64,
    #[serde(rename = "delta_AB")]
    pub delta_ab: f64,
    pub s_hat: Option<f64>,
    #[serde(rename = "n_A")]
    pub n_a: usize,
    #[serde(rename = "n_B")]
    pub n_b: usize,
    #[serde(rename = "n_AB")]
    pub n_ab: usize,
    /// Models with all three responses.
    pub n_complete: usize,
    /// True when either standardized effect is not positive.
    pub screened_out: bool,
}

impl TrialEstimates {
    /// Single-substudy design inputs on the standardized scale (σ² = 1).
    pub fn design_scenario(&self) -> Result<DesignScenario> {
        if self.screened_out {
            return Err(Error::domain(format!(
                "trial {}/{} is screened out (non-positive effect)",
                self.drug_a, self.drug_b
            )));
        }
        let s = self.s_hat.ok_or_else(|| Error::domain("synergy is undefined"))?;
        DesignScenario::single(self.delta_b, s, 1.0, self.rho_ab_a, self.rho_ab_b)
    }

    pub fn arms(&self) -> Result<SingleStudyArms> {
        SingleStudyArms::new(self.n_a as f64, self.n_b as f64, self.n_ab as f64, self.rho_ab_a, self.rho_ab_b)
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn pearson(x: &[f64], y: &[f64], what: &str) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{what}: only {} paired models for a correlation",
            x.len()
        )));
    }
    let (mx, _) = mean_sd(x);
    let (my, _) = mean_sd(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance { arm: what.to_string() });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlations, standardized effects and synergy for one triple.
///
/// Arm means and SDs use every available response of that treatment;
/// correlations use the models observed under both treatments.
pub fn estimate_trial(
    table: &PairedEndpointTable,
    drug_a: &str,
    drug_b: &str,
    combo: &str,
    opts: &EstimateOptions,
) -> Result<TrialEstimates> {
    let n_complete = table.complete_models(&[drug_a, drug_b, combo]).len();
    if n_complete < opts.min_triples.max(1) {
        return Err(Error::InsufficientData(format!(
            "{n_complete} complete ({drug_a}, {drug_b}, {combo}) triples, need {}",
            opts.min_triples
        )));
    }
    let sign = if opts.flip_sign { -1.0 } else { 1.0 };
    let arm = |t: &str| -> Result<(f64, f64, usize)> {
        let y: Vec<f64> = table.arm(t).into_iter().map(|v| sign * v).collect();
        let (m, sd) = mean_sd(&y);
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance { arm: t.to_string() });
        }
        Ok((m, sd, y.len()))
    };
    let (m_a, sd_a, n_a) = arm(drug_a)?;
    let (m_b, sd_b, n_b) = arm(drug_b)?;
    let (m_ab, sd_ab, n_ab) = arm(combo)?;

    let (x, y) = table.pairs(combo, drug_a);
    let rho_ab_a = pearson(&x, &y, &format!("{combo} vs {drug_a}"))?;
    let (x, y) = table.pairs(combo, drug_b);
    let rho_ab_b = pearson(&x, &y, &format!("{combo} vs {drug_b}"))?;

    let delta_ab = (m_ab - m_a) / pooled_sd(sd_ab, n_ab, sd_a, n_a)?;
    let delta_b = (m_b - m_a) / pooled_sd(sd_a, n_a, sd_b, n_b)?;
    let s_hat = (delta_b != 0.0).then(|| delta_ab / delta_b);
    Ok(TrialEstimates {
        drug_a: drug_a.into(),
        drug_b: drug_b.into(),
        combo: combo.into(),
        rho_ab_a,
        rho_ab_b,
        delta_b,
        delta_ab,
        s_hat,
        n_a,
        n_b,
        n_ab,
        n_complete,
        screened_out: !(delta_ab > 0.0 && delta_b > 0.0),
    })
}

/// Test-statistic correlation, unadjusted error rates and adjusted
/// thresholds for a fixed design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedDesignControl {
    pub rho: f64,
    /// Rates at the unadjusted two-sided 0.05 critical value.
    pub unadjusted: ErrorRates,
    pub fwer: ThresholdResult,
    pub fmer: ThresholdResult,
    pub msfp: ThresholdResult,
}

pub const FWER_TARGET: f64 = 0.05;
pub const FMER_TARGET: f64 = 0.0025;
pub const MSFP_TARGET: f64 = 0.000625;

/// Chains the correlation formula, the unadjusted null simulation at
/// c = Φ⁻¹(0.975) and the threshold solver for each metric.
pub fn table1_pipeline(arms: &SingleStudyArms, replications: usize, seed: u64) -> Result<FixedDesignControl> {
    let rho = test_stat_correlation(arms)?;
    fixed_design_control(rho, replications, seed)
}

pub fn fixed_design_control(rho: f64, replications: usize, seed: u64) -> Result<FixedDesignControl> {
    let corr = crate::numeric::CorrelationMatrix::bivariate(rho)?;
    let c = crate::numeric::std_normal_quantile(1.0 - FWER_TARGET / 2.0)?;
    Ok(FixedDesignControl {
        rho,
        unadjusted: empirical_error_rates(&corr, c, replications, seed)?,
        fwer: generalized_dunnett_threshold(rho, &ErrorMetric::fwer(FWER_TARGET))?,
        fmer: generalized_dunnett_threshold(rho, &ErrorMetric::fmer(FMER_TARGET))?,
        msfp: generalized_dunnett_threshold(rho, &ErrorMetric::msfp(MSFP_TARGET))?,
    })
}

/// Estimates for a screened-in trial at its observed arm counts.
pub fn estimates_control(est: &TrialEstimates, replications: usize, seed: u64) -> Result<FixedDesignControl> {
    if est.screened_out {
        return Err(Error::domain("trial is screened out"));
    }
    table1_pipeline(&est.arms()?, replications, seed)
}
