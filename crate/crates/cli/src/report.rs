//! Output formats: JSON documents, CSV tables, and aligned stdout tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::csv_io::{format_f64, write_rows, CsvError};
use crate::runner::{PowerRow, SimulationReport};

pub const METRIC_HEADER: [&str; 10] =
    ["estimator", "mnb", "mad", "rmse", "rej", "med_model_size", "reps", "failures", "clamped", "exhausted"];

pub const POWER_HEADER: [&str; 6] = ["estimator", "h", "shift", "rejection", "reps", "failures"];

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize infallibly");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CsvError> {
    fs::write(path, to_json(value))?;
    Ok(())
}

pub fn metric_rows(report: &SimulationReport) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.estimator.to_string(),
                format_f64(r.mnb),
                format_f64(r.mad),
                format_f64(r.rmse),
                format_f64(r.rej),
                format_f64(r.med_model_size),
                r.reps.to_string(),
                r.failures.to_string(),
                r.clamped.to_string(),
                r.exhausted.to_string(),
            ]
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, report: &SimulationReport) -> Result<(), CsvError> {
    write_rows(fs::File::create(path)?, &METRIC_HEADER, &metric_rows(report))
}

pub fn power_rows(rows: &[PowerRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.estimator.to_string(),
                format_f64(r.h),
                format_f64(r.shift),
                format_f64(r.rejection),
                r.reps.to_string(),
                r.failures.to_string(),
            ]
        })
        .collect()
}

pub fn write_power_csv(path: &Path, rows: &[PowerRow]) -> Result<(), CsvError> {
    write_rows(fs::File::create(path)?, &POWER_HEADER, &power_rows(rows))
}

/// Table in the column order MnB, MAD, RMSE, Rej., med(k̂).
pub fn metrics_table(report: &SimulationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "DGP {}  n={}  p={}  reps={}  seed={}  C={}",
        report.dgp, report.n, report.p, report.reps, report.base_seed, report.config.c
    );
    let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "", "MnB", "MAD", "RMSE", "Rej.", "med(k)", "fail");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8} {:>8}",
            r.estimator.name(),
            r.mnb,
            r.mad,
            r.rmse,
            r.rej,
            r.med_model_size,
            r.failures
        );
    }
    out
}

pub fn power_table(rows: &[PowerRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>6} {:>10} {:>10}", "", "h", "shift", "Rej.");
    for r in rows {
        let _ = writeln!(out, "{:<10} {:>6.3} {:>10.4} {:>10.3}", r.estimator.name(), r.h, r.shift, r.rejection);
    }
    out
}
