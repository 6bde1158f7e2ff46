//! Experiment harness: JSON configuration, sweep and threshold orchestration
//! over a worker pool, and CSV emission.
//!
//! Every trial's randomness derives only from (master seed, grid position,
//! trial index), so a sweep writes byte-identical trial CSVs at any worker
//! count. Wall-clock timing is recorded only when `record_timing` is set,
//! because real timings would break that byte-level reproducibility.

pub mod records;
pub mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpsolve::LpOpts;
use crate::matgen::{generate, EnsembleSpec};
use crate::numkit::ColumnSparseMatrix;
use crate::recover::{run_trial, Algo, GreedyOpts};
use crate::rng::{Seed, StreamTag};
use crate::siggen::{sample_signal, SignalDist, SignalSpec};
use crate::sparsifier::{ones_for_density, sparsify};
use crate::threshold::{
    estimate_for_matrix, ThresholdOpts, ThresholdSource, TrialSetup,
};

pub use records::{SummaryRow, ThresholdRun, TrialRecord};

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "SPARSE_SENSE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMode {
    /// New matrix and mask for every trial.
    #[default]
    Fresh,
    /// One matrix per density, shared by all trials.
    Fixed,
}

fn default_k_min() -> usize {
    1
}

fn default_k_step() -> usize {
    1
}

fn default_t() -> f64 {
    0.98
}

fn default_signal_dist() -> SignalDist {
    SignalDist::Uniform01
}

/// One experiment description. Unknown JSON keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleSpec,
    /// Relative densities s; the mask carries round(s*n) ones per column.
    pub densities: Vec<f64>,
    pub algorithms: Vec<Algo>,
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    pub k_max: usize,
    #[serde(default = "default_k_step")]
    pub k_step: usize,
    /// Trials per (density, algorithm, k) cell in a sweep.
    pub trials: usize,
    /// Target recovery probability for threshold runs.
    #[serde(default = "default_t")]
    pub t: f64,
    pub seed: u64,
    #[serde(default)]
    pub matrix_mode: MatrixMode,
    #[serde(default = "default_signal_dist")]
    pub signal_dist: SignalDist,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Record per-trial wall time. Off by default: timings are not
    /// deterministic, and the trial CSV is byte-reproducible without them.
    #[serde(default)]
    pub record_timing: bool,
    /// Sparsity ceiling for threshold scans; defaults to n.
    #[serde(default)]
    pub k_ceiling: Option<usize>,
    /// Geometric bracketing in the first threshold stage (approximate,
    /// excluded from acceptance runs).
    #[serde(default)]
    pub threshold_fast: bool,
    #[serde(default)]
    pub lp: LpOpts,
    /// Greedy-method options (shared by OMP and CoSaMP).
    #[serde(default)]
    pub cosamp: GreedyOpts,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate().map_err(config_err)?;
        if self.densities.is_empty() {
            return Err(Error::Config("densities must be nonempty".into()));
        }
        for &s in &self.densities {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Config(format!("density {s} outside (0, 1]")));
            }
            if ones_for_density(self.ensemble.n, s) < 1 {
                return Err(Error::Config(format!(
                    "density {s} rounds to zero ones per column at n = {}",
                    self.ensemble.n
                )));
            }
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must be nonempty".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.k_min < 1 || self.k_min > self.k_max || self.k_max > self.ensemble.cols {
            return Err(Error::Config(format!(
                "sparsity range [{}, {}] must sit inside [1, {}]",
                self.k_min, self.k_max, self.ensemble.cols
            )));
        }
        if self.k_step < 1 {
            return Err(Error::Config("k_step must be at least 1".into()));
        }
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::Config(format!("t = {} outside (0, 1)", self.t)));
        }
        Ok(())
    }

    pub fn k_values(&self) -> Vec<usize> {
        (self.k_min..=self.k_max).step_by(self.k_step).collect()
    }

    /// Stable experiment id from the seed and the canonical config encoding.
    pub fn experiment_id(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        format!("exp-{:016x}", fnv1a64(canon.as_bytes()))
    }

    pub fn threshold_ceiling(&self) -> usize {
        self.k_ceiling.unwrap_or(self.ensemble.n)
    }
}

fn config_err(e: Error) -> Error {
    Error::Config(e.to_string())
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Run `f` on a dedicated rayon pool with `workers` threads (0 = rayon's
/// default). The result is worker-count independent by construction; the
/// pool only changes wall time.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Default worker count: the `SPARSE_SENSE_WORKERS` variable, else 0
/// (rayon's default pool).
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy)]
struct CellParams {
    density_idx: usize,
    algo_idx: usize,
    k: usize,
}

pub struct SweepOutput {
    pub experiment: String,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutput {
    /// Write `trials.csv` and `summary.csv` under `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(out_dir)?;
        let trials_path = out_dir.join("trials.csv");
        let summary_path = out_dir.join("summary.csv");
        records::write_trials_csv(&trials_path, &self.records)?;
        records::write_summary_csv(&summary_path, &self.summary)?;
        Ok((trials_path, summary_path))
    }
}

fn error_tag(e: &Error) -> &'static str {
    match e {
        Error::Param(_) => "error:param",
        Error::Dimension(_) => "error:dimension",
        Error::DegenerateColumn { .. } => "error:degenerate_column",
        Error::Lp(_) => "error:lp",
        _ => "error:other",
    }
}

/// Execute the full (density x algorithm x k x trial) grid and aggregate a
/// summary per cell. Deterministic in the master seed.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let experiment = cfg.experiment_id();
    let ensemble_label = cfg.ensemble.label();
    let master = Seed::new(cfg.seed);
    let k_values = cfg.k_values();
    let n_cells = cfg.densities.len() * cfg.algorithms.len() * k_values.len();

    // Fixed mode: one sparsified matrix per density, built up front.
    let fixed_matrices: Option<Vec<ColumnSparseMatrix>> = match cfg.matrix_mode {
        MatrixMode::Fresh => None,
        MatrixMode::Fixed => {
            let mut mats = Vec::with_capacity(cfg.densities.len());
            for (di, &s) in cfg.densities.iter().enumerate() {
                let seed = master.derive(StreamTag::Matrix, di as u64);
                let base = generate(&cfg.ensemble, seed)?;
                let t = ones_for_density(cfg.ensemble.n, s);
                mats.push(sparsify(&base, t, seed, true)?.into_matrix());
            }
            Some(mats)
        }
    };

    let mut cells = Vec::with_capacity(n_cells);
    for (density_idx, _) in cfg.densities.iter().enumerate() {
        for (algo_idx, _) in cfg.algorithms.iter().enumerate() {
            for &k in &k_values {
                cells.push(CellParams {
                    density_idx,
                    algo_idx,
                    k,
                });
            }
        }
    }

    let tasks: Vec<(usize, CellParams, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, &cell)| (0..cfg.trials).map(move |t| (ci, cell, t)))
        .collect();

    let records: Vec<TrialRecord> = tasks
        .par_iter()
        .map(|&(cell_idx, cell, trial)| {
            let density = cfg.densities[cell.density_idx];
            let algo = cfg.algorithms[cell.algo_idx];
            let trial_seed = master
                .derive(StreamTag::Cell, cell_idx as u64)
                .derive(StreamTag::Trial, trial as u64);
            let mut record = TrialRecord {
                experiment: experiment.clone(),
                ensemble: ensemble_label.clone(),
                n: cfg.ensemble.n,
                cols: cfg.ensemble.cols,
                density,
                algorithm: algo,
                k: cell.k,
                trial,
                seed: trial_seed.master,
                success: false,
                l1_error: f64::NAN,
                wall_time_s: 0.0,
                iterations: 0,
                halt_reason: String::new(),
            };
            let outcome = (|| -> Result<()> {
                let local;
                let phi = match &fixed_matrices {
                    Some(mats) => &mats[cell.density_idx],
                    None => {
                        let base = generate(&cfg.ensemble, trial_seed)?;
                        let t = ones_for_density(cfg.ensemble.n, density);
                        local = sparsify(&base, t, trial_seed, true)?.into_matrix();
                        &local
                    }
                };
                let spec = SignalSpec::new(cfg.ensemble.cols, cell.k, cfg.signal_dist);
                let signal = sample_signal(&spec, trial_seed)?;
                let out = run_trial(phi, &signal, algo, &cfg.cosamp, &cfg.lp)?;
                record.success = out.success;
                record.l1_error = out.l1_error;
                record.iterations = out.iterations;
                record.halt_reason = out.halt.label().to_string();
                if cfg.record_timing {
                    record.wall_time_s = out.wall_time_s;
                }
                Ok(())
            })();
            if let Err(e) = outcome {
                record.halt_reason = error_tag(&e).to_string();
            }
            record
        })
        .collect();

    // Summaries in grid order; rows emitted == cells * trials by construction.
    let mut summary = Vec::with_capacity(n_cells);
    for (ci, cell) in cells.iter().enumerate() {
        let rows = &records[ci * cfg.trials..(ci + 1) * cfg.trials];
        let successes = rows.iter().filter(|r| r.success).count();
        let mean_time = rows.iter().map(|r| r.wall_time_s).sum::<f64>() / rows.len() as f64;
        let mean_iters =
            rows.iter().map(|r| r.iterations as f64).sum::<f64>() / rows.len() as f64;
        summary.push(SummaryRow {
            experiment: experiment.clone(),
            ensemble: ensemble_label.clone(),
            n: cfg.ensemble.n,
            cols: cfg.ensemble.cols,
            density: cfg.densities[cell.density_idx],
            algorithm: cfg.algorithms[cell.algo_idx],
            k: cell.k,
            trials: rows.len(),
            successes,
            success_rate: successes as f64 / rows.len() as f64,
            mean_wall_time_s: mean_time,
            mean_iterations: mean_iters,
        });
    }
    Ok(SweepOutput {
        experiment,
        records,
        summary,
    })
}

pub struct ThresholdOutput {
    pub experiment: String,
    pub runs: Vec<ThresholdRun>,
}

impl ThresholdOutput {
    /// Write `thresholds.csv` plus one trace file per run.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("thresholds.csv");
        records::write_thresholds_csv(&path, &self.runs)?;
        for run in &self.runs {
            let name = format!("trace-{}-d{}.csv", run.algorithm.label(), run.density);
            records::write_trace_csv(&out_dir.join(name), &run.trace)?;
        }
        Ok(path)
    }
}

/// Estimate R_t for every (density, algorithm) pair of the config.
pub fn run_threshold(cfg: &ExperimentConfig) -> Result<ThresholdOutput> {
    cfg.validate()?;
    let experiment = cfg.experiment_id();
    let ensemble_label = cfg.ensemble.label();
    let master = Seed::new(cfg.seed);
    let ceiling = cfg.threshold_ceiling();
    let opts = ThresholdOpts {
        ceiling,
        fast: cfg.threshold_fast,
    };
    let mut runs = Vec::new();
    for (di, &density) in cfg.densities.iter().enumerate() {
        for (ai, &algo) in cfg.algorithms.iter().enumerate() {
            let setup = TrialSetup {
                algo,
                signal_dist: cfg.signal_dist,
                greedy: cfg.cosamp,
                lp: cfg.lp.clone(),
            };
            let source = ThresholdSource::Ensemble {
                spec: cfg.ensemble,
                ones_per_col: ones_for_density(cfg.ensemble.n, density),
                renormalize: true,
                fresh: matches!(cfg.matrix_mode, MatrixMode::Fresh),
            };
            let run_seed = master.derive(
                StreamTag::Cell,
                (di * cfg.algorithms.len() + ai) as u64,
            );
            match estimate_for_matrix(&source, &setup, cfg.t, run_seed, &opts) {
                Ok(est) => runs.push(ThresholdRun::from_estimate(
                    &experiment,
                    &ensemble_label,
                    cfg.ensemble.n,
                    cfg.ensemble.cols,
                    density,
                    algo,
                    ceiling,
                    est,
                )),
                Err(Error::ThresholdCeiling { ceiling }) => runs.push(ThresholdRun {
                    experiment: experiment.clone(),
                    ensemble: ensemble_label.clone(),
                    n: cfg.ensemble.n,
                    cols: cfg.ensemble.cols,
                    density,
                    algorithm: algo,
                    t: cfg.t,
                    r_hat: ceiling,
                    k0: 0,
                    k1: 0,
                    k2: 0,
                    k1_eq_k2: false,
                    ceiling,
                    ceiling_reached: true,
                    trace: Vec::new(),
                }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(ThresholdOutput { experiment, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen::EnsembleKind;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            ensemble: EnsembleSpec::new(EnsembleKind::AbsNormal, 12, 36),
            densities: vec![1.0, 0.25],
            algorithms: vec![Algo::Omp, Algo::Cosamp],
            k_min: 1,
            k_max: 3,
            k_step: 1,
            trials: 4,
            t: 0.98,
            seed: 11,
            matrix_mode: MatrixMode::Fresh,
            signal_dist: SignalDist::Uniform01,
            out_dir: None,
            record_timing: false,
            k_ceiling: None,
            threshold_fast: false,
            lp: LpOpts::default(),
            cosamp: GreedyOpts::default(),
        }
    }

    #[test]
    fn sweep_accounting_is_exact() {
        let cfg = tiny_config();
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 3 * 4);
        assert_eq!(out.summary.len(), 2 * 2 * 3);
        for row in &out.summary {
            let matching: Vec<_> = out
                .records
                .iter()
                .filter(|r| {
                    r.density == row.density && r.algorithm == row.algorithm && r.k == row.k
                })
                .collect();
            assert_eq!(matching.len(), row.trials);
            let successes = matching.iter().filter(|r| r.success).count();
            assert_eq!(successes, row.successes);
            assert!(
                (row.success_rate - successes as f64 / row.trials as f64).abs() < 1e-15
            );
        }
    }

    #[test]
    fn sweep_is_deterministic_across_worker_counts() {
        let cfg = tiny_config();
        let a = with_workers(1, || run_sweep(&cfg)).unwrap().unwrap();
        let b = with_workers(4, || run_sweep(&cfg)).unwrap().unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.success, y.success);
            assert!(x.l1_error == y.l1_error || (x.l1_error.is_nan() && y.l1_error.is_nan()));
            assert_eq!(x.halt_reason, y.halt_reason);
        }
    }

    #[test]
    fn single_trial_identity_like_cell() {
        let mut cfg = tiny_config();
        cfg.densities = vec![1.0];
        cfg.algorithms = vec![Algo::Omp];
        cfg.k_max = 1;
        cfg.trials = 1;
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.records[0].success);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_json("{\"bogus\": 1}").is_err());
        let mut cfg = tiny_config();
        cfg.densities = vec![0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.densities = vec![1.5];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.k_max = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.t = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_and_ids_are_stable() {
        let cfg = tiny_config();
        let js = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&js).unwrap();
        assert_eq!(cfg.experiment_id(), back.experiment_id());
    }

    #[test]
    fn fixed_mode_reuses_the_matrix() {
        let mut cfg = tiny_config();
        cfg.matrix_mode = MatrixMode::Fixed;
        cfg.algorithms = vec![Algo::Omp];
        cfg.densities = vec![1.0];
        cfg.k_max = 2;
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.records.len(), 2 * 4);
    }

    #[test]
    fn threshold_run_emits_rows() {
        let mut cfg = tiny_config();
        cfg.algorithms = vec![Algo::Omp];
        cfg.densities = vec![1.0];
        cfg.k_ceiling = Some(8);
        let out = run_threshold(&cfg).unwrap();
        assert_eq!(out.runs.len(), 1);
        let run = &out.runs[0];
        assert!(run.ceiling_reached || run.r_hat < 8);
    }
}
