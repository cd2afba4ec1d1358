//! Parallel Monte Carlo driver.
//!
//! Replication `r` is seeded from `(base_seed, r)` alone and results are
//! collected in replication order, so output does not depend on `jobs`.

use rayon::prelude::*;
use serde::Serialize;

use gpe_core::rng::GENERATOR_NAME;
use gpe_core::simulation::{
    aggregate, evaluate_replication, power_shift, validate_h_grid, DgpSpec, Estimator, McConfig, MetricRow,
    ReplicationRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("at least one estimator is required")]
    NoEstimators,

    #[error("reps must be at least 1")]
    NoReps,

    #[error("cannot build thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),

    #[error(transparent)]
    Core(#[from] gpe_core::Error),
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub spec: DgpSpec,
    pub estimators: Vec<Estimator>,
    pub reps: usize,
    pub base_seed: u64,
    pub config: McConfig,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
}

/// Everything `simulate` reports. Contains no timings, so repeated runs
/// serialize identically.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub dgp: String,
    pub n: usize,
    pub p: usize,
    pub cns_literal: bool,
    pub error_family: String,
    pub reps: usize,
    pub base_seed: u64,
    pub generator: &'static str,
    pub config: McConfig,
    pub rows: Vec<MetricRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<ReplicationRecord>>,
}

impl SimulationReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub estimator: Estimator,
    pub h: f64,
    /// `θ₀ − θ_o` under the tested null.
    pub shift: f64,
    pub rejection: f64,
    pub reps: usize,
    pub failures: usize,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, RunError> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Runs every replication and returns the records, replication-major.
pub fn run_records(settings: &RunSettings) -> Result<Vec<ReplicationRecord>, RunError> {
    if settings.estimators.is_empty() {
        return Err(RunError::NoEstimators);
    }
    if settings.reps == 0 {
        return Err(RunError::NoReps);
    }
    let per_rep: Vec<Vec<ReplicationRecord>> = pool(settings.jobs)?.install(|| {
        (0..settings.reps)
            .into_par_iter()
            .map(|r| {
                evaluate_replication(&settings.spec, &settings.estimators, r, settings.base_seed, &settings.config)
            })
            .collect::<gpe_core::Result<_>>()
    })?;
    Ok(per_rep.into_iter().flatten().collect())
}

pub fn run_mc(settings: &RunSettings, keep_records: bool) -> Result<SimulationReport, RunError> {
    let records = run_records(settings)?;
    let rows = settings
        .estimators
        .iter()
        .map(|&e| aggregate(&records, e, 0.0, settings.config.level))
        .collect();
    Ok(SimulationReport {
        dgp: settings.spec.dgp.name().to_string(),
        n: settings.spec.n,
        p: settings.spec.p,
        cns_literal: settings.spec.cns_literal,
        error_family: format!("{:?}", settings.spec.error_family()),
        reps: settings.reps,
        base_seed: settings.base_seed,
        generator: GENERATOR_NAME,
        config: settings.config.clone(),
        rows,
        records: keep_records.then_some(records),
    })
}

/// Rejection rates against the shifted nulls `θ₀ = θ_o − h√p`. The same
/// replications serve every grid point.
pub fn power_curve(settings: &RunSettings, grid: &[f64]) -> Result<Vec<PowerRow>, RunError> {
    validate_h_grid(grid)?;
    let records = run_records(settings)?;
    let mut rows = Vec::with_capacity(grid.len() * settings.estimators.len());
    for &e in &settings.estimators {
        for &h in grid {
            // adding 0.0 turns the -0.0 at h = 0 into 0.0
            let shift = power_shift(h, settings.spec.p) + 0.0;
            let m = aggregate(&records, e, shift, settings.config.level);
            rows.push(PowerRow { estimator: e, h, shift, rejection: m.rej, reps: m.reps, failures: m.failures });
        }
    }
    Ok(rows)
}
