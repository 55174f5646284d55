mod opts;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use platform_design::correlation::{platform_z_correlation_matrix, ArmCorrelations, PlatformArms};
use platform_design::estimation::{
    estimate_trial, estimates_control, ingest_csv, read_roles, DuplicatePolicy, EstimateOptions, IngestOptions,
    TrialRoles,
};
use platform_design::harness::{
    run_adjustment_comparison, run_design_surface_with, run_error_curves, run_threshold_curves, GridSpec,
};
use platform_design::multiplicity::{generalized_dunnett_threshold, platform_threshold, Sidedness};
use platform_design::numeric::DEFAULT_PRECISION;
use platform_design::power::{find_sample_size, SearchOptions, DEFAULT_CAP, DEFAULT_N0, DEFAULT_N_SIM};
use platform_design::{allocation_objective, optimize_allocation, Arm, DesignScenario, Error, ErrorMetric};

use opts::{
    AdjustOpts, Cli, Command, DesignOpts, Duplicates, EstimateOpts, Format, GlobalConfig, Metric, SimulateOpts, Study,
    GLOBAL_KEYS,
};
use output::{write_records, Record};

const SEED_ENV: &str = "PLATFORM_DESIGN_SEED";

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn flag(flag: &str, message: impl std::fmt::Display) -> Self {
        Self::invalid(format!("invalid --{flag}: {message}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NotPositiveDefinite { .. }
            | Error::PrecisionUnreachable { .. }
            | Error::RootBracket { .. }
            | Error::Convergence(_) => 3,
            Error::BudgetExceeded { .. } => 4,
            Error::Io(io) if io.kind() == io::ErrorKind::BrokenPipe => 0,
            Error::Json(j) if j.io_error_kind() == Some(io::ErrorKind::BrokenPipe) => 0,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // a closed downstream pipe is not an error of ours
        let code = if e.kind() == io::ErrorKind::BrokenPipe { 0 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Settings shared by every subcommand after resolution.
struct Global {
    seed: u64,
    /// Seed given by flag, config or environment (not the built-in default).
    seed_given: bool,
    format: Format,
    out: Option<PathBuf>,
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (global_cfg, sub_cfg) = load_config(cli.global.config.as_deref())?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(
            s.trim()
                .parse::<u64>()
                .map_err(|_| Failure::invalid(format!("{SEED_ENV}=`{s}` is not a 64-bit unsigned integer")))?,
        ),
        Err(_) => None,
    };
    let seed = cli.global.seed.or(global_cfg.seed).or(env_seed);
    let global = Global {
        seed: seed.unwrap_or(1),
        seed_given: seed.is_some(),
        format: cli.global.format.or(global_cfg.format).unwrap_or(Format::Human),
        out: cli.global.out.or(global_cfg.out),
        verbose: cli.global.verbose > 0 || global_cfg.verbose.unwrap_or(0) > 0,
    };
    let name = cli.command.name();
    match cli.command {
        Command::Adjust(o) => {
            let o = o.merge(sub_config(sub_cfg, name)?);
            emit(&global, &[cmd_adjust(&o, &global)?])
        }
        Command::Design(o) => {
            let o = o.merge(sub_config(sub_cfg, name)?);
            emit(&global, &[cmd_design(&o, &global)?])
        }
        Command::Estimate(o) => {
            let o = o.merge(sub_config(sub_cfg, name)?);
            emit(&global, &cmd_estimate(&o, &global)?)
        }
        Command::Simulate(o) => {
            let o = o.merge(sub_config(sub_cfg, name)?);
            cmd_simulate(&o, &global)
        }
    }
}

/// Splits a config file into its global keys and the subcommand keys.
fn load_config(path: Option<&Path>) -> CliResult<(GlobalConfig, Map<String, Value>)> {
    let Some(path) = path else {
        return Ok((GlobalConfig::default(), Map::new()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::flag("config", format!("cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::flag("config", format!("{}: {e}", path.display())))?;
    let Value::Object(mut all) = value else {
        return Err(Failure::flag("config", "top level must be a JSON object"));
    };
    let mut global = Map::new();
    for k in GLOBAL_KEYS {
        if let Some(v) = all.remove(k) {
            global.insert(k.to_string(), v);
        }
    }
    let global: GlobalConfig =
        serde_json::from_value(Value::Object(global)).map_err(|e| Failure::flag("config", e))?;
    Ok((global, all))
}

fn sub_config<T: DeserializeOwned + Default>(map: Map<String, Value>, command: &str) -> CliResult<T> {
    if map.is_empty() {
        return Ok(T::default());
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| Failure::flag("config", format!("{command}: {e}")))
}

fn emit(global: &Global, records: &[Record]) -> CliResult<()> {
    let mut out = open_output(global)?;
    write_records(&mut out, records, global.format)?;
    out.flush()?;
    Ok(())
}

fn open_output(global: &Global) -> CliResult<Box<dyn Write>> {
    Ok(match &global.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::flag("out", format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::flag("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

fn check_rho(flag: &str, r: f64) -> CliResult<()> {
    if (-1.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Failure::flag(flag, format!("correlation must lie in [-1, 1], got {r}")))
    }
}

fn check_positive(flag: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::flag(flag, format!("must be positive, got {v}")))
    }
}

fn error_metric(metric: Metric, alpha: Option<f64>, m: Option<usize>, one_sided: bool) -> CliResult<ErrorMetric> {
    let alpha = alpha.unwrap_or(metric.default_alpha());
    check_alpha(alpha)?;
    if m.is_some() && metric != Metric::Mfwer {
        return Err(Failure::flag("m", "only applies to --metric mfwer"));
    }
    Ok(match metric {
        Metric::Fwer => ErrorMetric::fwer(alpha),
        Metric::Fmer => ErrorMetric::fmer(alpha),
        Metric::Msfp => ErrorMetric::msfp(alpha),
        Metric::Mfwer => {
            let m = m.unwrap_or(2);
            if m == 0 {
                return Err(Failure::flag("m", "must be at least 1"));
            }
            let side = if one_sided {
                Sidedness::OneSidedUpper
            } else {
                Sidedness::TwoSided
            };
            ErrorMetric::m_fwer(m, alpha, side)
        }
    })
}

fn metric_fields(r: &mut Record, metric: &ErrorMetric) {
    r.insert("metric".into(), serde_json::to_value(metric.kind).unwrap_or(Value::Null));
    r.insert("alpha".into(), json!(metric.alpha));
    r.insert("m".into(), json!(metric.m));
}

fn cmd_adjust(o: &AdjustOpts, g: &Global) -> CliResult<Record> {
    let metric = error_metric(o.metric.unwrap_or(Metric::Fwer), o.alpha, o.m, o.one_sided)?;
    let precision = o.precision.unwrap_or(DEFAULT_PRECISION);
    check_positive("precision", precision)?;
    let k = o.k.unwrap_or(1);
    if k == 0 {
        return Err(Failure::flag("k", "need at least one substudy"));
    }
    let th = if let Some(rho) = o.rho {
        check_rho("rho", rho)?;
        for (flag, set) in [
            ("rho-ab-a", o.rho_ab_a.is_some()),
            ("rho-ab-b", o.rho_ab_b.is_some()),
            ("n-a", o.n_a.is_some()),
            ("n-b", o.n_b.is_some()),
            ("n-ab", o.n_ab.is_some()),
        ] {
            if set {
                return Err(Failure::flag(flag, "cannot be combined with --rho"));
            }
        }
        if k != 1 {
            return Err(Failure::flag("rho", "only describes two statistics; use arm-level flags with --k"));
        }
        generalized_dunnett_threshold(rho, &metric)?
    } else {
        let (ra, rb) = (o.rho_ab_a.unwrap_or(0.0), o.rho_ab_b.unwrap_or(0.0));
        check_rho("rho-ab-a", ra)?;
        check_rho("rho-ab-b", rb)?;
        let (na, nb, nab) = (o.n_a.unwrap_or(1.0), o.n_b.unwrap_or(1.0), o.n_ab.unwrap_or(1.0));
        check_positive("n-a", na)?;
        check_positive("n-b", nb)?;
        check_positive("n-ab", nab)?;
        let mut correlations = ArmCorrelations::new();
        for j in 0..k {
            correlations.set(Arm::Combo(j), Arm::Control, ra)?;
            correlations.set(Arm::Combo(j), Arm::Mono(j), rb)?;
        }
        let arms = PlatformArms {
            n_a: na,
            n_b: vec![nb; k],
            n_ab: vec![nab; k],
            correlations,
            sigma2: 1.0,
        };
        let z = platform_z_correlation_matrix(&arms)?;
        platform_threshold(&z, &metric, precision, g.seed)?
    };

    let mut r = Record::new();
    metric_fields(&mut r, &metric);
    r.insert("k".into(), json!(k));
    if th.z_correlation.dim() == 2 {
        r.insert("rho".into(), json!(th.z_correlation.get(0, 1)));
    } else {
        r.insert("z_correlation".into(), json!(th.z_correlation.rows()));
    }
    r.insert("critical_value".into(), json!(th.critical_value));
    r.insert("p_threshold".into(), json!(th.p_threshold));
    r.insert("achieved_level".into(), json!(th.achieved_level));
    r.insert("std_error".into(), json!(th.std_error));
    Ok(r)
}

/// Expands a per-substudy list, reusing a single value for every substudy.
fn per_substudy(flag: &str, v: Option<&Vec<f64>>, default: Option<f64>, k: usize) -> CliResult<Vec<f64>> {
    match v {
        None => default
            .map(|d| vec![d; k])
            .ok_or_else(|| Failure::flag(flag, "is required")),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; k]),
        Some(v) if v.len() == k => Ok(v.clone()),
        Some(v) => Err(Failure::flag(flag, format!("expected 1 or {k} values, got {}", v.len()))),
    }
}

fn cmd_design(o: &DesignOpts, g: &Global) -> CliResult<Record> {
    let k = o.k.unwrap_or(1);
    if k == 0 {
        return Err(Failure::flag("k", "need at least one substudy"));
    }
    let delta = per_substudy("delta", o.delta.as_ref(), None, k)?;
    let synergy = per_substudy("synergy", o.synergy.as_ref(), Some(1.0), k)?;
    let rho_ab_a = per_substudy("rho-ab-a", o.rho_ab_a.as_ref(), Some(0.0), k)?;
    let rho_ab_b = per_substudy("rho-ab-b", o.rho_ab_b.as_ref(), Some(0.0), k)?;
    for v in &delta {
        check_positive("delta", *v)?;
    }
    for v in &synergy {
        check_positive("synergy", *v)?;
    }
    for v in &rho_ab_a {
        check_rho("rho-ab-a", *v)?;
    }
    for v in &rho_ab_b {
        check_rho("rho-ab-b", *v)?;
    }
    let sigma2 = o.sigma2.unwrap_or(1.0);
    check_positive("sigma2", sigma2)?;
    let target = o.power.unwrap_or(0.8);
    if !(target > 0.0 && target < 1.0) {
        return Err(Failure::flag("power", format!("must lie in (0, 1), got {target}")));
    }
    let metric = error_metric(o.metric.unwrap_or(Metric::Fwer), o.alpha, o.m, o.one_sided)?;
    let opts = SearchOptions {
        n0: o.n0.unwrap_or(DEFAULT_N0),
        n_sim: o.nsim.unwrap_or(DEFAULT_N_SIM),
        seed: g.seed,
        cap: o.cap.unwrap_or(DEFAULT_CAP),
    };
    if opts.n_sim < 1000 {
        return Err(Failure::flag("nsim", format!("must be at least 1000, got {}", opts.n_sim)));
    }
    if opts.n0 < (2 * k + 1) as u64 {
        return Err(Failure::flag("n0", format!("must be at least {} (one subject per arm)", 2 * k + 1)));
    }
    if opts.cap < opts.n0 {
        return Err(Failure::flag("cap", format!("must be at least --n0 = {}", opts.n0)));
    }
    let precision = o.precision.unwrap_or(DEFAULT_PRECISION);
    check_positive("precision", precision)?;

    let scenario = DesignScenario {
        delta,
        synergy,
        sigma2,
        rho_ab_a,
        rho_ab_b,
        extra_correlations: ArmCorrelations::new(),
    };
    scenario.validate()?;
    let alloc = optimize_allocation(&scenario)?;
    let z = platform_z_correlation_matrix(&PlatformArms::from_design(&scenario, &alloc, 1.0)?)?;
    let th = platform_threshold(&z, &metric, precision, g.seed)?;
    let n = find_sample_size(&scenario, &alloc, &th, target, &opts)?;

    let mut r = Record::new();
    r.insert("k".into(), json!(k));
    metric_fields(&mut r, &metric);
    r.insert("target_power".into(), json!(target));
    let labels = arm_labels(k);
    for (label, p) in labels.iter().zip(alloc.ratios()) {
        r.insert(format!("p_{label}"), json!(p));
    }
    r.insert("objective".into(), json!(allocation_objective(&scenario, &alloc)?));
    if z.dim() == 2 {
        r.insert("rho".into(), json!(z.get(0, 1)));
    }
    r.insert("critical_value".into(), json!(th.critical_value));
    r.insert("p_threshold".into(), json!(th.p_threshold));
    r.insert("n_star".into(), json!(n.n_star));
    for (label, c) in labels.iter().zip(&n.arm_counts) {
        r.insert(format!("n_{label}"), json!(c));
    }
    r.insert("achieved_power".into(), json!(n.achieved_power));
    r.insert("search_power".into(), json!(n.search_power));
    r.insert("nsim".into(), json!(opts.n_sim));
    r.insert("seed".into(), json!(g.seed));
    Ok(r)
}

/// `A, B, AB` for one substudy, `A, B1, AB1, …` otherwise.
fn arm_labels(k: usize) -> Vec<String> {
    let mut v = vec!["A".to_string()];
    for j in 1..=k {
        if k == 1 {
            v.extend(["B".into(), "AB".into()]);
        } else {
            v.extend([format!("B{j}"), format!("AB{j}")]);
        }
    }
    v
}

fn delimiter_byte(c: Option<char>) -> CliResult<u8> {
    let c = c.unwrap_or(',');
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(Failure::flag("delimiter", format!("`{c}` is not a single ASCII character")))
    }
}

fn cmd_estimate(o: &EstimateOpts, g: &Global) -> CliResult<Vec<Record>> {
    let input = o.input.as_ref().ok_or_else(|| Failure::flag("input", "is required"))?;
    let delimiter = delimiter_byte(o.delimiter)?;
    let defaults = IngestOptions::default();
    let ingest = IngestOptions {
        delimiter,
        model_column: o.model_col.clone().unwrap_or(defaults.model_column),
        treatment_column: o.treatment_col.clone().unwrap_or(defaults.treatment_column),
        response_column: o.response_col.clone().unwrap_or(defaults.response_column),
        duplicates: match o.duplicates.unwrap_or(Duplicates::Error) {
            Duplicates::Error => DuplicatePolicy::Error,
            Duplicates::Mean => DuplicatePolicy::Mean,
        },
    };
    let trials = match (&o.roles, &o.drug_a, &o.drug_b, &o.combo) {
        (Some(path), None, None, None) => read_roles(path, delimiter).map_err(|e| match e {
            Error::Io(io) => Failure::flag("roles", format!("{}: {io}", path.display())),
            other => Failure::from(other),
        })?,
        (None, Some(a), Some(b), Some(ab)) => vec![TrialRoles {
            drug_a: a.clone(),
            drug_b: b.clone(),
            combo: ab.clone(),
        }],
        (Some(_), ..) => return Err(Failure::flag("roles", "cannot be combined with --drug-a/--drug-b/--combo")),
        _ => return Err(Failure::invalid("need --drug-a, --drug-b and --combo, or --roles")),
    };
    let table = ingest_csv(input, &ingest).map_err(|e| match e {
        Error::Io(io) => Failure::flag("input", format!("{}: {io}", input.display())),
        other => Failure::from(other),
    })?;
    if g.verbose {
        eprintln!(
            "read {} rows ({} missing responses, {} merged duplicates) from {}",
            table.rows_read,
            table.rows_missing,
            table.rows_merged,
            input.display()
        );
    }
    let est_opts = EstimateOptions {
        min_triples: o.min_triples.unwrap_or(3),
        flip_sign: o.flip_sign,
    };
    let reps = o.replications.unwrap_or(100_000);
    if o.thresholds && reps == 0 {
        return Err(Failure::flag("replications", "must be positive"));
    }
    let mut records = Vec::with_capacity(trials.len());
    for t in &trials {
        let est = estimate_trial(&table, &t.drug_a, &t.drug_b, &t.combo, &est_opts)?;
        let Value::Object(mut r) = serde_json::to_value(&est).map_err(Error::from)? else {
            unreachable!("estimates serialize to an object")
        };
        if o.thresholds && !est.screened_out {
            let c = estimates_control(&est, reps, g.seed)?;
            r.insert("rho".into(), json!(c.rho));
            r.insert("fwer_unadjusted".into(), json!(c.unadjusted.fwer));
            r.insert("fmer_unadjusted".into(), json!(c.unadjusted.fmer));
            r.insert("msfp_unadjusted".into(), json!(c.unadjusted.msfp));
            r.insert("p_threshold_fwer".into(), json!(c.fwer.p_threshold));
            r.insert("p_threshold_fmer".into(), json!(c.fmer.p_threshold));
            r.insert("p_threshold_msfp".into(), json!(c.msfp.p_threshold));
        }
        records.push(r);
    }
    Ok(records)
}

fn cmd_simulate(o: &SimulateOpts, g: &Global) -> CliResult<()> {
    let study = o.study.ok_or_else(|| Failure::flag("study", "is required"))?;
    let mut grid = match &o.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::flag("grid", format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<GridSpec>(&text)
                .map_err(|e| Failure::flag("grid", format!("{}: {e}", path.display())))?
        }
        None if study == Study::DesignSurface => GridSpec::design_surface_default(),
        None => GridSpec::error_curves_default(),
    };
    if let Some(r) = o.replications {
        if r == 0 {
            return Err(Failure::flag("replications", "must be positive"));
        }
        grid.replications = r;
    }
    if g.seed_given || o.grid.is_none() {
        grid.seed = g.seed;
    }
    grid.validate().map_err(|e| Failure::flag("grid", e))?;

    let table = match study {
        Study::ErrorCurves => run_error_curves(&grid)?,
        Study::Adjustments => run_adjustment_comparison(&grid)?,
        Study::Thresholds => run_threshold_curves(&grid)?,
        Study::DesignSurface => run_design_surface_with(&grid, |done, total| {
            if g.verbose {
                eprintln!("design surface: {done}/{total} points");
            }
        })?,
    };
    let mut out = open_output(g)?;
    match g.format {
        Format::Json => table.write_jsonl(&mut out)?,
        Format::Human | Format::Csv => table.write_csv(&mut out)?,
    }
    out.flush()?;
    let summary = format!("{}: {} rows", table.study, table.rows.len());
    match &g.out {
        Some(p) => println!("{summary} written to {}", p.display()),
        None => eprintln!("{summary}"),
    }
    Ok(())
}
