//! Command-line companion to `gpe-core`: CSV ingestion, JSON/CSV reports and
//! a parallel Monte Carlo runner whose output does not depend on the number
//! of worker threads.

pub mod commands;
pub mod csv_io;
pub mod report;
pub mod runner;
