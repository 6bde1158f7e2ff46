//! Adaptive estimation of the t-recovery threshold R_t: the largest sparsity
//! k at which recovery succeeds with probability exceeding t.
//!
//! The scan has three stages. Starting at k = 1, run 50 trials per sparsity
//! until the first k0 recovering fewer than 50t signals; restart at
//! max(1, k0 - 3) with 200 trials per sparsity until the first shortfall k1;
//! restart at max(1, k1 - 3) with 1000 trials per sparsity until the first
//! shortfall k2. The estimate is k2 - 1. Revisited sparsities always consume
//! fresh trial indices, so no stage reuses another stage's randomness.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lpsolve::LpOpts;
use crate::matgen::{generate, EnsembleSpec};
use crate::numkit::ColumnSparseMatrix;
use crate::recover::{run_trial, Algo, GreedyOpts};
use crate::rng::{Seed, StreamTag};
use crate::siggen::{sample_signal, SignalDist, SignalSpec};
use crate::sparsifier::sparsify;

pub const STAGE_TRIALS: [usize; 3] = [50, 200, 1000];

#[derive(Debug, Clone)]
pub struct ThresholdOpts {
    /// Largest sparsity scanned before reporting a ceiling error.
    pub ceiling: usize,
    /// Geometric bracketing for the first stage instead of the linear scan.
    /// Faster but only approximately faithful; excluded from acceptance runs.
    pub fast: bool,
}

impl ThresholdOpts {
    pub fn with_ceiling(ceiling: usize) -> Self {
        ThresholdOpts {
            ceiling,
            fast: false,
        }
    }
}

/// One batch of trials at a single sparsity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub k: usize,
    /// Nominal stage size (50, 200, or 1000).
    pub stage: usize,
    pub trials: usize,
    pub successes: usize,
}

#[derive(Debug, Clone)]
pub struct ThresholdEstimate {
    /// Target recovery probability.
    pub t: f64,
    /// Estimated threshold, k2 - 1.
    pub r_hat: usize,
    pub k0: usize,
    pub k1: usize,
    pub k2: usize,
    /// Recorded diagnostic: the scan is considered converged when k1 = k2.
    pub k1_eq_k2: bool,
    pub trace: Vec<TraceRow>,
}

/// Fail threshold for one stage: shortfall means successes < ceil(trials*t).
fn pass_requirement(trials: usize, t: f64) -> usize {
    (trials as f64 * t).ceil() as usize
}

struct Scan<'o, F> {
    oracle: &'o F,
    /// Next unused trial index per sparsity; consecutive batches at the same
    /// k never share an index.
    next_index: Vec<u64>,
    trace: Vec<TraceRow>,
}

impl<'o, F> Scan<'o, F>
where
    F: Fn(usize, u64) -> Result<bool> + Sync,
{
    fn batch(&mut self, k: usize, trials: usize) -> Result<usize> {
        if k >= self.next_index.len() {
            self.next_index.resize(k + 1, 0);
        }
        let base = self.next_index[k];
        self.next_index[k] = base + trials as u64;
        let outcomes: Result<Vec<bool>> = (0..trials as u64)
            .into_par_iter()
            .map(|i| (self.oracle)(k, base + i))
            .collect();
        let successes = outcomes?.into_iter().filter(|&s| s).count();
        self.trace.push(TraceRow {
            k,
            stage: trials,
            trials,
            successes,
        });
        Ok(successes)
    }

    /// Scan upward from `start`, `trials` per sparsity, returning the first
    /// sparsity that falls short of the target rate.
    fn scan_linear(
        &mut self,
        start: usize,
        trials: usize,
        t: f64,
        ceiling: usize,
    ) -> Result<usize> {
        let need = pass_requirement(trials, t);
        let mut k = start;
        loop {
            if k > ceiling {
                return Err(Error::ThresholdCeiling { ceiling });
            }
            let successes = self.batch(k, trials)?;
            if successes < need {
                return Ok(k);
            }
            k += 1;
        }
    }

    /// Bracket the first-stage transition by doubling k, then scan linearly
    /// from the last passing probe.
    fn scan_fast_stage_a(&mut self, t: f64, ceiling: usize) -> Result<usize> {
        let trials = STAGE_TRIALS[0];
        let need = pass_requirement(trials, t);
        let mut last_pass = 0usize;
        let mut k = 1usize;
        loop {
            if k > ceiling {
                return Err(Error::ThresholdCeiling { ceiling });
            }
            let successes = self.batch(k, trials)?;
            if successes < need {
                if k == last_pass + 1 {
                    return Ok(k);
                }
                break;
            }
            last_pass = k;
            k *= 2;
        }
        self.scan_linear(last_pass + 1, trials, t, ceiling)
    }
}

/// Estimate R_t from a success oracle. The oracle must be deterministic in
/// `(k, trial index)`; trial indices are dealt monotonically per sparsity.
pub fn estimate<F>(oracle: F, t: f64, opts: &ThresholdOpts) -> Result<ThresholdEstimate>
where
    F: Fn(usize, u64) -> Result<bool> + Sync,
{
    if !(0.0 < t && t < 1.0) {
        return Err(Error::Param(format!(
            "threshold probability must lie in (0,1), got {t}"
        )));
    }
    if opts.ceiling == 0 {
        return Err(Error::Param("threshold ceiling must be at least 1".into()));
    }
    let mut scan = Scan {
        oracle: &oracle,
        next_index: Vec::new(),
        trace: Vec::new(),
    };
    let k0 = if opts.fast {
        scan.scan_fast_stage_a(t, opts.ceiling)?
    } else {
        scan.scan_linear(1, STAGE_TRIALS[0], t, opts.ceiling)?
    };
    let k1 = scan.scan_linear(k0.saturating_sub(3).max(1), STAGE_TRIALS[1], t, opts.ceiling)?;
    let k2 = scan.scan_linear(k1.saturating_sub(3).max(1), STAGE_TRIALS[2], t, opts.ceiling)?;
    Ok(ThresholdEstimate {
        t,
        r_hat: k2 - 1,
        k0,
        k1,
        k2,
        k1_eq_k2: k1 == k2,
        trace: scan.trace,
    })
}

/// Where the sensing matrix for each trial comes from.
pub enum ThresholdSource<'a> {
    /// One matrix shared by every trial (columns must be unit-norm).
    Fixed(&'a ColumnSparseMatrix),
    /// Ensemble + mask density; `fresh` redraws matrix and mask per trial.
    Ensemble {
        spec: EnsembleSpec,
        ones_per_col: usize,
        renormalize: bool,
        fresh: bool,
    },
}

/// Everything needed to run one recovery trial.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub algo: Algo,
    pub signal_dist: SignalDist,
    pub greedy: GreedyOpts,
    pub lp: LpOpts,
}

impl TrialSetup {
    pub fn new(algo: Algo) -> Self {
        TrialSetup {
            algo,
            signal_dist: SignalDist::Uniform01,
            greedy: GreedyOpts::default(),
            lp: LpOpts::default(),
        }
    }
}

fn build_matrix(
    spec: &EnsembleSpec,
    ones_per_col: usize,
    renormalize: bool,
    seed: Seed,
) -> Result<ColumnSparseMatrix> {
    let base = generate(spec, seed)?;
    Ok(sparsify(&base, ones_per_col, seed, renormalize)?.into_matrix())
}

/// Estimate R_t for a matrix source by wiring the generation pipeline into
/// the staged scan. Trial sub-seeds depend only on `(seed, k, trial index)`,
/// so results are identical under any parallel schedule.
pub fn estimate_for_matrix(
    source: &ThresholdSource,
    setup: &TrialSetup,
    t: f64,
    seed: Seed,
    opts: &ThresholdOpts,
) -> Result<ThresholdEstimate> {
    let fixed: Option<ColumnSparseMatrix> = match source {
        ThresholdSource::Fixed(m) => Some((*m).clone()),
        ThresholdSource::Ensemble {
            spec,
            ones_per_col,
            renormalize,
            fresh: false,
        } => Some(build_matrix(
            spec,
            *ones_per_col,
            *renormalize,
            seed.derive(StreamTag::Matrix, 0),
        )?),
        ThresholdSource::Ensemble { fresh: true, .. } => None,
    };
    let cols = match source {
        ThresholdSource::Fixed(m) => m.cols(),
        ThresholdSource::Ensemble { spec, .. } => spec.cols,
    };

    let oracle = |k: usize, trial: u64| -> Result<bool> {
        let trial_seed = seed
            .derive(StreamTag::Sparsity, k as u64)
            .derive(StreamTag::Trial, trial);
        let local;
        let phi = match (&fixed, source) {
            (Some(m), _) => m,
            (
                None,
                ThresholdSource::Ensemble {
                    spec,
                    ones_per_col,
                    renormalize,
                    ..
                },
            ) => {
                local = build_matrix(spec, *ones_per_col, *renormalize, trial_seed)?;
                &local
            }
            (None, ThresholdSource::Fixed(_)) => unreachable!(),
        };
        let signal = sample_signal(&SignalSpec::new(cols, k, setup.signal_dist), trial_seed)?;
        match run_trial(phi, &signal, setup.algo, &setup.greedy, &setup.lp) {
            Ok(outcome) => Ok(outcome.success),
            // A numerical solver failure is a failed recovery, not a broken scan.
            Err(Error::Lp(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    estimate(oracle, t, opts)
}
