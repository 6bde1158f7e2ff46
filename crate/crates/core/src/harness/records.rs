//! Trial-level and summary records and their CSV encodings.
//!
//! All files carry `schema_version` 1 in every row. Fields are plain
//! numbers and lowercase tokens; floats print in shortest round-trip form,
//! so identical results produce identical bytes.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::recover::Algo;
use crate::threshold::{ThresholdEstimate, TraceRow};

pub const SCHEMA_VERSION: u32 = 1;

/// One recovery attempt. Errored trials are recorded too, with the error
/// tag in `halt_reason`; nothing is silently dropped.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub experiment: String,
    pub ensemble: String,
    pub n: usize,
    pub cols: usize,
    pub density: f64,
    pub algorithm: Algo,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub l1_error: f64,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub halt_reason: String,
}

/// Per-cell aggregate of the matching trial rows.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub experiment: String,
    pub ensemble: String,
    pub n: usize,
    pub cols: usize,
    pub density: f64,
    pub algorithm: Algo,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_wall_time_s: f64,
    pub mean_iterations: f64,
}

/// One threshold estimation run (one matrix source x algorithm x density).
#[derive(Debug, Clone)]
pub struct ThresholdRun {
    pub experiment: String,
    pub ensemble: String,
    pub n: usize,
    pub cols: usize,
    pub density: f64,
    pub algorithm: Algo,
    pub t: f64,
    /// Estimated threshold; when `ceiling_reached` it is a lower bound.
    pub r_hat: usize,
    pub k0: usize,
    pub k1: usize,
    pub k2: usize,
    pub k1_eq_k2: bool,
    pub ceiling: usize,
    pub ceiling_reached: bool,
    pub trace: Vec<TraceRow>,
}

impl ThresholdRun {
    pub fn from_estimate(
        experiment: &str,
        ensemble: &str,
        n: usize,
        cols: usize,
        density: f64,
        algorithm: Algo,
        ceiling: usize,
        est: ThresholdEstimate,
    ) -> Self {
        ThresholdRun {
            experiment: experiment.to_string(),
            ensemble: ensemble.to_string(),
            n,
            cols,
            density,
            algorithm,
            t: est.t,
            r_hat: est.r_hat,
            k0: est.k0,
            k1: est.k1,
            k2: est.k2,
            k1_eq_k2: est.k1_eq_k2,
            ceiling,
            ceiling_reached: false,
            trace: est.trace,
        }
    }
}

pub const TRIAL_HEADER: [&str; 15] = [
    "schema_version",
    "experiment",
    "ensemble",
    "n",
    "N",
    "density",
    "algorithm",
    "k",
    "trial",
    "seed",
    "success",
    "l1_error",
    "wall_time_s",
    "iterations",
    "halt_reason",
];

pub const SUMMARY_HEADER: [&str; 13] = [
    "schema_version",
    "experiment",
    "ensemble",
    "n",
    "N",
    "density",
    "algorithm",
    "k",
    "trials",
    "successes",
    "success_rate",
    "mean_wall_time_s",
    "mean_iterations",
];

pub const THRESHOLD_HEADER: [&str; 16] = [
    "schema_version",
    "experiment",
    "ensemble",
    "n",
    "N",
    "density",
    "algorithm",
    "t",
    "r_hat",
    "k0",
    "k1",
    "k2",
    "k1_eq_k2",
    "ceiling",
    "ceiling_reached",
    "trials_total",
];

pub fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.experiment.clone(),
            r.ensemble.clone(),
            r.n.to_string(),
            r.cols.to_string(),
            r.density.to_string(),
            r.algorithm.label().to_string(),
            r.k.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            (r.success as u8).to_string(),
            r.l1_error.to_string(),
            r.wall_time_s.to_string(),
            r.iterations.to_string(),
            r.halt_reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.experiment.clone(),
            r.ensemble.clone(),
            r.n.to_string(),
            r.cols.to_string(),
            r.density.to_string(),
            r.algorithm.label().to_string(),
            r.k.to_string(),
            r.trials.to_string(),
            r.successes.to_string(),
            r.success_rate.to_string(),
            r.mean_wall_time_s.to_string(),
            r.mean_iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_thresholds_csv(path: &Path, runs: &[ThresholdRun]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(THRESHOLD_HEADER)?;
    for r in runs {
        let trials_total: usize = r.trace.iter().map(|row| row.trials).sum();
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.experiment.clone(),
            r.ensemble.clone(),
            r.n.to_string(),
            r.cols.to_string(),
            r.density.to_string(),
            r.algorithm.label().to_string(),
            r.t.to_string(),
            r.r_hat.to_string(),
            r.k0.to_string(),
            r.k1.to_string(),
            r.k2.to_string(),
            (r.k1_eq_k2 as u8).to_string(),
            r.ceiling.to_string(),
            (r.ceiling_reached as u8).to_string(),
            trials_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trace file: one row per (sparsity, stage) batch.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "k,stage,trials,successes")?;
    for row in trace {
        writeln!(f, "{},{},{},{}", row.k, row.stage, row.trials, row.successes)?;
    }
    Ok(())
}
