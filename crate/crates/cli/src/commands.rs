//! The `fit`, `simulate` and `power` subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use gpe_core::dataset::{prepare, FitFrame};
use gpe_core::gpe::{fit_gpe, fitted_beta_original_scale, GpeFit, GpeOptions};
use gpe_core::inference::{t_test_with, theta_functional, Covariance, RobustSummary};
use gpe_core::selection::{default_k_max, select_k, SelectionTrace, DEFAULT_C};
use gpe_core::simulation::{h_grid, Dgp, DgpSpec, Estimator, McConfig};

use crate::csv_io::{format_f64, load_csv, write_rows, CsvError};
use crate::report;
use crate::runner::{power_curve, run_mc, RunError, RunSettings};

/// Exit code for bad flags or input files.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_) => EXIT_INPUT,
            CommandError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<gpe_core::Error> for CommandError {
    fn from(e: gpe_core::Error) -> Self {
        use gpe_core::Error as E;
        match e {
            E::RankDeficient(_) | E::Singular(_) => CommandError::Numeric(e.to_string()),
            _ => CommandError::Input(e.to_string()),
        }
    }
}

impl From<CsvError> for CommandError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Data(inner) => inner.into(),
            other => CommandError::Input(other.to_string()),
        }
    }
}

impl From<RunError> for CommandError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Core(inner) => inner.into(),
            other => CommandError::Input(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CommandError {
    CommandError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "gpe", version, about = "Grouped parameter estimation for high-dimensional linear models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a CSV dataset, choosing the number of groups unless --k is given.
    Fit(FitArgs),
    /// Run a Monte Carlo study on a simulation design.
    Simulate(SimulateArgs),
    /// Rejection rates against shifted nulls θ₀ = θ − h√p.
    Power(PowerArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    /// Feature columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Fixed number of groups; skips selection.
    #[arg(long)]
    pub k: Option<usize>,
    /// Largest k tried by selection.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Selection threshold.
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    /// Fit an intercept (centers the design).
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub intercept: bool,
    /// Columns kept out of the clustering as their own groups.
    #[arg(long, value_delimiter = ',')]
    pub no_group: Vec<String>,
    /// Extra linear functional as comma-separated weights, one per feature;
    /// normalized to unit length. Repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Vec<String>,
    /// Null value for every test.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta0: f64,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Standard errors: hc3 (leverage-corrected) or hc0.
    #[arg(long, default_value = "hc3")]
    pub covariance: Covariance,
    /// Output directory for fit.json and coefficients.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct StudyArgs {
    /// Design: cns, cas1, cas2, ds1, mns, ms, dns, ds2, das2.
    #[arg(long)]
    pub dgp: Dgp,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 75)]
    pub p: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated: gpe, plasso, ols, orac_ols, orac_gpe.
    #[arg(long, value_delimiter = ',', default_value = "gpe")]
    pub estimators: Vec<Estimator>,
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Standard errors: hc3 (leverage-corrected) or hc0.
    #[arg(long, default_value = "hc3")]
    pub covariance: Covariance,
    /// Fit an intercept (the designs have none).
    #[arg(long)]
    pub intercept: bool,
    /// CnS only: use the literal slope-4 coefficient formula.
    #[arg(long)]
    pub cns_literal: bool,
    /// Worker threads (0 = all cores). Does not affect output.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl StudyArgs {
    pub fn settings(&self) -> RunSettings {
        RunSettings {
            spec: DgpSpec { dgp: self.dgp, n: self.n, p: self.p, cns_literal: self.cns_literal },
            estimators: self.estimators.clone(),
            reps: self.reps,
            base_seed: self.seed,
            config: McConfig {
                c: self.c,
                intercept: self.intercept,
                level: self.level,
                covariance: self.covariance,
                ..McConfig::default()
            },
            jobs: self.jobs,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Include per-replication records in simulate.json.
    #[arg(long)]
    pub records: bool,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Grid as start:stop:step within [0, 0.4].
    #[arg(long, default_value = "0:0.4:0.1")]
    pub h_grid: String,
}

pub fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a).map(|out| print!("{out}")),
        Command::Simulate(a) => cmd_simulate(&a).map(|out| print!("{out}")),
        Command::Power(a) => cmd_power(&a).map(|out| print!("{out}")),
    }
}

#[derive(Debug, Serialize)]
pub struct ColumnReport {
    pub name: String,
    pub beta: f64,
    pub group: usize,
    pub fixed: bool,
}

#[derive(Debug, Serialize)]
pub struct GroupReport {
    pub label: usize,
    pub delta: f64,
    pub fixed: bool,
    pub members: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FunctionalReport {
    pub name: String,
    #[serde(flatten)]
    pub summary: RobustSummary,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub response: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub k_total: usize,
    pub intercept: Option<f64>,
    pub beta: Vec<ColumnReport>,
    pub groups: Vec<GroupReport>,
    pub delta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Present when k was selected from the data.
    pub trace: Option<SelectionTrace>,
    pub covariance: Covariance,
    pub theta: Vec<FunctionalReport>,
}

fn parse_tau(raw: &str, p: usize) -> Result<Vec<f64>, CommandError> {
    let w: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CommandError::Input(format!("bad --tau weight `{s}`"))))
        .collect::<Result<_, _>>()?;
    if w.len() != p {
        return Err(CommandError::Input(format!("--tau needs {p} weights, got {}", w.len())));
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(CommandError::Input("--tau weights must be finite and not all zero".into()));
    }
    Ok(w.into_iter().map(|v| v / norm).collect())
}

fn fit_frame(args: &FitArgs) -> Result<FitFrame, CommandError> {
    let data = load_csv(&args.data, &args.response, args.features.as_deref())?;
    let mut fixed = BTreeSet::new();
    for name in &args.no_group {
        let j = data
            .column_index(name)
            .ok_or_else(|| CommandError::Input(format!("--no-group: column not found: `{name}`")))?;
        fixed.insert(j);
    }
    Ok(prepare(data, args.intercept, &fixed)?)
}

fn estimate(args: &FitArgs, frame: &FitFrame) -> Result<(GpeFit, Option<SelectionTrace>), CommandError> {
    if !(args.c > 0.0) {
        return Err(CommandError::Input("--c must be positive".into()));
    }
    match args.k {
        Some(k) => Ok((fit_gpe(frame, &GpeOptions::new(k))?, None)),
        None => {
            let k_max = args.k_max.unwrap_or_else(|| default_k_max(frame));
            if k_max <= 1 {
                return Ok((fit_gpe(frame, &GpeOptions::new(1))?, None));
            }
            let (fit, trace) = select_k(frame, args.c, 1, k_max, &GpeOptions::new(1))?;
            Ok((fit, Some(trace)))
        }
    }
}

/// Runs `fit`, writes `fit.json` and `coefficients.csv`, and returns the
/// stdout summary.
pub fn cmd_fit(args: &FitArgs) -> Result<String, CommandError> {
    let frame = fit_frame(args)?;
    let (fit, trace) = estimate(args, &frame)?;
    let scale = fitted_beta_original_scale(&fit, &frame)?;
    let names = frame.dataset().column_names();
    let p = frame.p();

    let mut functionals = vec![("theta".to_string(), theta_functional(p))];
    for (i, raw) in args.tau.iter().enumerate() {
        functionals.push((format!("tau{}", i + 1), parse_tau(raw, p)?));
    }
    for (j, name) in names.iter().enumerate() {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        functionals.push((name.clone(), e));
    }
    let theta = functionals
        .into_iter()
        .map(|(name, tau)| {
            Ok(FunctionalReport { name, summary: t_test_with(&frame, &fit, &tau, args.theta0, args.level, args.covariance)? })
        })
        .collect::<Result<Vec<_>, CommandError>>()?;

    let labels = fit.assignment.labels();
    let fixed = fit.assignment.fixed();
    let groups = fit
        .assignment
        .members()
        .into_iter()
        .enumerate()
        .map(|(g, members)| GroupReport {
            label: g,
            delta: fit.delta_hat[g],
            fixed: members.first().is_some_and(|&j| fixed[j]),
            members: members.iter().map(|&j| names[j].clone()).collect(),
        })
        .collect();
    let beta = (0..p)
        .map(|j| ColumnReport { name: names[j].clone(), beta: scale.beta[j], group: labels[j], fixed: fixed[j] })
        .collect();
    let report = FitReport {
        response: args.response.clone(),
        n: frame.n(),
        p,
        k: fit.k,
        k_total: fit.delta_hat.len(),
        intercept: scale.has_intercept.then_some(scale.intercept),
        beta,
        groups,
        delta: fit.delta_hat.clone(),
        objective: fit.objective,
        iterations: fit.iterations,
        converged: fit.converged,
        trace,
        covariance: args.covariance,
        theta,
    };

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    report::write_json(&args.out.join("fit.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .beta
        .iter()
        .zip(&report.theta[report.theta.len() - p..])
        .map(|(c, t)| {
            vec![
                c.name.clone(),
                c.group.to_string(),
                c.fixed.to_string(),
                format_f64(c.beta),
                format_f64(t.summary.se_theta),
                format_f64(t.summary.t_stat),
                format_f64(t.summary.p_value),
            ]
        })
        .collect();
    let csv_path = args.out.join("coefficients.csv");
    write_rows(
        fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?,
        &["column", "group", "fixed", "beta", "se", "t", "p_value"],
        &rows,
    )?;

    let th = &report.theta[0].summary;
    Ok(format!(
        "k = {} ({} groups in total), n = {}, p = {}\ntheta = {:.6} (se {:.6}, p-value {:.4})\nwrote {} and {}\n",
        report.k,
        report.k_total,
        report.n,
        p,
        th.theta_hat,
        th.se_theta,
        th.p_value,
        args.out.join("fit.json").display(),
        csv_path.display()
    ))
}

/// Runs `simulate`, writes `simulate.json` and `simulate.csv`, and returns
/// the aligned table.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CommandError> {
    let report = run_mc(&args.study.settings(), args.records)?;
    let out = &args.study.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    report::write_json(&out.join("simulate.json"), &report)?;
    report::write_metrics_csv(&out.join("simulate.csv"), &report)?;
    let failures = report.failures();
    if failures > 0 {
        eprintln!("warning: {failures} estimator fits failed and were excluded; see simulate.json");
    }
    Ok(report::metrics_table(&report))
}

pub fn parse_h_grid(raw: &str) -> Result<Vec<f64>, CommandError> {
    let parts: Vec<&str> = raw.split(':').collect();
    let bad = || CommandError::Input(format!("--h-grid must be start:stop:step, got `{raw}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    Ok(h_grid(v[0], v[1], v[2])?)
}

/// Runs `power`, writes `power.csv` and `power.json`, and returns the table.
pub fn cmd_power(args: &PowerArgs) -> Result<String, CommandError> {
    let grid = parse_h_grid(&args.h_grid)?;
    let rows = power_curve(&args.study.settings(), &grid)?;
    let out = &args.study.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    report::write_power_csv(&out.join("power.csv"), &rows)?;
    report::write_json(&out.join("power.json"), &rows)?;
    Ok(report::power_table(&rows))
}
