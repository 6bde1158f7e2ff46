//! Greedy recovery algorithms and the uniform trial wrapper.
//!
//! Both greedy methods are supplied the true sparsity k. OMP runs exactly k
//! selection rounds (early exit on a small residual), CoSaMP iterates the
//! identify / merge / fit / prune cycle until the residual is small,
//! stagnates, or the iteration budget runs out.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpsolve::{self, LpOpts, LpStatus};
use crate::numkit::{lstsq_on_support, ColumnSparseMatrix};
use crate::siggen::SparseSignal;

/// l1 success criterion: recovery counts when |x - xhat|_1 <= 1e-6.
pub const SUCCESS_L1_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Lp,
    Omp,
    Cosamp,
}

impl Algo {
    pub fn label(self) -> &'static str {
        match self {
            Algo::Lp => "lp",
            Algo::Omp => "omp",
            Algo::Cosamp => "cosamp",
        }
    }
}

/// Options for the greedy methods. `k` is supplied per trial by the caller.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreedyOpts {
    pub max_iters: usize,
    /// Residual stopping threshold, relative to ||y||_2.
    pub residual_tol: f64,
}

impl Default for GreedyOpts {
    fn default() -> Self {
        GreedyOpts {
            max_iters: 100,
            residual_tol: 1e-7,
        }
    }
}

/// Why an algorithm stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    /// Residual under the tolerance.
    Tol,
    /// Residual stopped decreasing (CoSaMP stagnation guard).
    Stagnation,
    /// Iteration budget exhausted.
    MaxIters,
    /// OMP completed its k selection rounds.
    KReached,
    /// LP solver status.
    LpOptimal,
    LpInfeasible,
    LpIterationLimit,
}

impl HaltReason {
    pub fn label(self) -> &'static str {
        match self {
            HaltReason::Tol => "tol",
            HaltReason::Stagnation => "stagnation",
            HaltReason::MaxIters => "max_iters",
            HaltReason::KReached => "k_reached",
            HaltReason::LpOptimal => "optimal",
            HaltReason::LpInfeasible => "infeasible",
            HaltReason::LpIterationLimit => "iteration_limit",
        }
    }
}

/// Raw algorithm output before comparison against the truth.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub xhat: Vec<f64>,
    pub iterations: usize,
    pub halt: HaltReason,
    pub rank_deficient: bool,
}

/// One finished trial: the estimate judged against the held truth.
#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub xhat: Vec<f64>,
    pub success: bool,
    pub l1_error: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub halt: HaltReason,
    pub rank_deficient: bool,
}

impl RecoveryOutcome {
    /// The success flag is derived from the error, never set independently.
    fn judge(estimate: Estimate, truth: &SparseSignal, wall_time_s: f64) -> Result<Self> {
        let l1_error = truth.l1_distance(&estimate.xhat)?;
        Ok(RecoveryOutcome {
            xhat: estimate.xhat,
            success: l1_error <= SUCCESS_L1_TOL,
            l1_error,
            iterations: estimate.iterations,
            wall_time_s,
            halt: estimate.halt,
            rank_deficient: estimate.rank_deficient,
        })
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Orthogonal matching pursuit: k rounds of picking the column most
/// correlated with the residual, refitting by least squares on the
/// accumulated support after every pick. Proxy ties break toward the lowest
/// column index.
pub fn omp(phi: &ColumnSparseMatrix, y: &[f64], k: usize, opts: &GreedyOpts) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::Param("omp: sparsity must be at least 1".into()));
    }
    let cols = phi.cols();
    if k > cols {
        return Err(Error::Param(format!(
            "omp: sparsity {k} exceeds column count {cols}"
        )));
    }
    let y_norm = l2_norm(y);
    let stop = opts.residual_tol * y_norm;
    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut selected = vec![false; cols];
    let mut coeffs: Vec<f64> = Vec::new();
    let mut halt = HaltReason::KReached;
    let mut rank_deficient = false;
    let mut rounds = 0;

    for _ in 0..k {
        if l2_norm(&residual) <= stop {
            halt = HaltReason::Tol;
            break;
        }
        let proxy = phi.matvec_t(&residual)?;
        let mut best = usize::MAX;
        let mut best_mag = -1.0;
        for (j, &p) in proxy.iter().enumerate() {
            if selected[j] {
                continue;
            }
            let mag = p.abs();
            if mag > best_mag {
                best_mag = mag;
                best = j;
            }
        }
        if best == usize::MAX {
            break;
        }
        selected[best] = true;
        support.push(best);
        rounds += 1;
        let fit = lstsq_on_support(phi, &support, y)?;
        rank_deficient |= fit.rank_deficient;
        residual = fit.residual;
        coeffs = fit.coefficients;
    }

    let mut xhat = vec![0.0; cols];
    for (&j, &c) in support.iter().zip(&coeffs) {
        xhat[j] = c;
    }
    Ok(Estimate {
        xhat,
        iterations: rounds,
        halt,
        rank_deficient,
    })
}

/// Indices of the `count` largest-magnitude entries, ties toward lower index.
fn largest_indices(v: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let count = count.min(v.len());
    idx.sort_unstable_by(|&a, &b| {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(count);
    idx
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => {
                if x < y {
                    i += 1;
                    x
                } else if y < x {
                    j += 1;
                    y
                } else {
                    i += 1;
                    j += 1;
                    x
                }
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => break,
        };
        out.push(next);
    }
    out
}

/// Compressive sampling matching pursuit. Each iteration forms the signal
/// proxy Phi' r, merges the 2k largest proxy locations with the current
/// support, solves least squares on the merged support against y, prunes to
/// the k largest coefficients, and recomputes the residual. Halts on a small
/// residual, residual stagnation (relative decrease below 1e-7 three times
/// in a row), or the iteration budget.
pub fn cosamp(
    phi: &ColumnSparseMatrix,
    y: &[f64],
    k: usize,
    opts: &GreedyOpts,
) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::Param("cosamp: sparsity must be at least 1".into()));
    }
    let cols = phi.cols();
    if k > cols {
        return Err(Error::Param(format!(
            "cosamp: sparsity {k} exceeds column count {cols}"
        )));
    }
    let y_norm = l2_norm(y);
    let stop = opts.residual_tol * y_norm;
    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut rank_deficient = false;
    let mut halt = HaltReason::MaxIters;
    let mut prev_norm = l2_norm(&residual);
    let mut stagnant = 0;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        if l2_norm(&residual) <= stop {
            halt = HaltReason::Tol;
            break;
        }
        iterations += 1;
        let proxy = phi.matvec_t(&residual)?;
        let mut omega = largest_indices(&proxy, 2 * k);
        omega.sort_unstable();
        let merged = merge_sorted(&support, &omega);
        let fit = lstsq_on_support(phi, &merged, y)?;
        rank_deficient |= fit.rank_deficient;

        let keep = largest_indices(&fit.coefficients, k);
        let mut pairs: Vec<(usize, f64)> = keep
            .into_iter()
            .map(|pos| (merged[pos], fit.coefficients[pos]))
            .collect();
        pairs.sort_unstable_by_key(|&(j, _)| j);
        support = pairs.iter().map(|&(j, _)| j).collect();
        values = pairs.iter().map(|&(_, v)| v).collect();

        let support_u32: Vec<u32> = support.iter().map(|&j| j as u32).collect();
        let ax = phi.matvec_sparse(&support_u32, &values);
        residual = y.iter().zip(&ax).map(|(a, b)| a - b).collect();

        let norm = l2_norm(&residual);
        if norm <= stop {
            halt = HaltReason::Tol;
            break;
        }
        let decrease = (prev_norm - norm) / prev_norm.max(f64::MIN_POSITIVE);
        if decrease < 1e-7 {
            stagnant += 1;
            if stagnant >= 3 {
                halt = HaltReason::Stagnation;
                break;
            }
        } else {
            stagnant = 0;
        }
        prev_norm = norm;
    }
    if halt == HaltReason::MaxIters && l2_norm(&residual) <= stop {
        halt = HaltReason::Tol;
    }

    let mut xhat = vec![0.0; cols];
    for (&j, &v) in support.iter().zip(&values) {
        xhat[j] = v;
    }
    Ok(Estimate {
        xhat,
        iterations,
        halt,
        rank_deficient,
    })
}

/// Compute y = Phi x, run the chosen algorithm, and judge the estimate
/// against the truth. Wall time covers the recovery call only.
pub fn run_trial(
    phi: &ColumnSparseMatrix,
    x: &SparseSignal,
    algo: Algo,
    greedy: &GreedyOpts,
    lp: &LpOpts,
) -> Result<RecoveryOutcome> {
    if phi.cols() != x.ambient_dim() {
        return Err(Error::Dimension(format!(
            "run_trial: matrix has {} columns, signal lives in dimension {}",
            phi.cols(),
            x.ambient_dim()
        )));
    }
    let y = phi.matvec_sparse(x.support(), x.values());
    let started = Instant::now();
    let estimate = match algo {
        Algo::Omp => omp(phi, &y, x.k(), greedy)?,
        Algo::Cosamp => cosamp(phi, &y, x.k(), greedy)?,
        Algo::Lp => {
            let sol = lpsolve::recover_l1(phi, &y, lp)?;
            Estimate {
                xhat: sol.x,
                iterations: sol.iterations,
                halt: match sol.status {
                    LpStatus::Optimal => HaltReason::LpOptimal,
                    LpStatus::Infeasible => HaltReason::LpInfeasible,
                    LpStatus::IterationLimit => HaltReason::LpIterationLimit,
                },
                rank_deficient: false,
            }
        }
    };
    let wall = started.elapsed().as_secs_f64();
    RecoveryOutcome::judge(estimate, x, wall)
}
