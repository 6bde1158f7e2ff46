//! Nonnegative l1-minimization by linear programming:
//! min 1'x subject to Ax = y, x >= 0,
//! solved with a self-contained two-phase revised simplex method.
//!
//! The solver prices sparse columns directly, so the per-iteration cost
//! tracks the density of A; this is where sparsified sensing matrices earn
//! their speedup.

mod lu;
mod simplex;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::numkit::ColumnSparseMatrix;

/// min 1'x subject to Ax = y, x >= 0.
pub struct LpProblem<'a> {
    pub a: &'a ColumnSparseMatrix,
    pub y: &'a [f64],
}

impl<'a> LpProblem<'a> {
    pub fn new(a: &'a ColumnSparseMatrix, y: &'a [f64]) -> Result<Self> {
        if a.rows() > a.cols() {
            return Err(Error::Param(format!(
                "lp expects n <= N, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        Ok(LpProblem { a, y })
    }
}

/// Solver tolerances and limits. Field names mirror the harness config keys
/// (`lp.max_iters`, `lp.feas_tol`, `lp.rc_tol`, `lp.pricing_window`).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LpOpts {
    /// Pivot budget across both phases; 0 means the default 50 (n + N).
    pub max_iters: usize,
    /// Relative feasibility tolerance on ||A xhat - y||_inf.
    pub feas_tol: f64,
    /// Entering-variable threshold on reduced costs.
    pub rc_tol: f64,
    /// Smallest tableau entry accepted as a ratio-test pivot.
    pub pivot_tol: f64,
    /// Dantzig pricing window width.
    pub pricing_window: usize,
    /// Basis refactorization interval in pivots.
    pub refactor_every: usize,
}

impl Default for LpOpts {
    fn default() -> Self {
        LpOpts {
            max_iters: 0,
            feas_tol: 1e-8,
            rc_tol: 1e-9,
            pivot_tol: 1e-10,
            pricing_window: 200,
            refactor_every: 100,
        }
    }
}

impl LpOpts {
    pub fn max_iters(&self, n: usize, cols: usize) -> usize {
        if self.max_iters == 0 {
            50 * (n + cols)
        } else {
            self.max_iters
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl LpStatus {
    pub fn label(self) -> &'static str {
        match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::IterationLimit => "iteration_limit",
        }
    }
}

/// Solution with feasibility and optimality certificates.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// ||A xhat - y||_inf at termination.
    pub max_infeasibility: f64,
    /// Smallest reduced cost over nonbasic variables (Optimal only).
    pub min_reduced_cost: f64,
    /// Residual artificial mass after phase 1.
    pub phase1_objective: f64,
}

/// Solve the LP. On `Optimal` the solution satisfies
/// ||A xhat - y||_inf <= feas_tol * max(1, ||y||_inf), xhat_i >= -1e-10, and
/// every nonbasic reduced cost is >= -rc_tol.
pub fn solve(problem: &LpProblem, opts: &LpOpts) -> Result<LpSolution> {
    let started = Instant::now();
    let outcome = simplex::solve(problem.a, problem.y, opts)?;
    let wall = started.elapsed().as_secs_f64();
    if matches!(outcome.status, LpStatus::Optimal) {
        let y_scale = problem.y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if outcome.max_infeasibility > opts.feas_tol * y_scale {
            return Err(Error::Lp(format!(
                "optimal basis violates feasibility: ||Ax-y||_inf = {:.3e}",
                outcome.max_infeasibility
            )));
        }
        if outcome.x.iter().any(|&v| v < -1e-10) {
            return Err(Error::Lp("optimal solution violates nonnegativity".into()));
        }
    }
    Ok(LpSolution {
        x: outcome.x,
        objective: outcome.objective,
        status: outcome.status,
        iterations: outcome.iterations,
        wall_time_s: wall,
        max_infeasibility: outcome.max_infeasibility,
        min_reduced_cost: outcome.min_reduced_cost,
        phase1_objective: outcome.phase1_objective,
    })
}

/// Recover a nonnegative signal from y = Phi x by l1-minimization.
/// Success against the held-out truth is judged by the caller.
pub fn recover_l1(phi: &ColumnSparseMatrix, y: &[f64], opts: &LpOpts) -> Result<LpSolution> {
    let problem = LpProblem::new(phi, y)?;
    solve(&problem, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(n: usize, rows: Vec<Vec<f64>>) -> ColumnSparseMatrix {
        let cols = rows[0].len();
        let mut columns = vec![Vec::new(); cols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    columns[j].push((i as u32, v));
                }
            }
        }
        ColumnSparseMatrix::from_columns(n, columns)
    }

    #[test]
    fn identity_system_recovers_rhs() {
        let a = ColumnSparseMatrix::identity(3);
        let sol = recover_l1(&a, &[1.0, 2.0, 3.0], &LpOpts::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 6.0).abs() < 1e-9);
        for (i, v) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((sol.x[i] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_optimum_has_unit_objective() {
        let a = dense_cols(1, vec![vec![1.0, 1.0]]);
        let sol = recover_l1(&a, &[1.0], &LpOpts::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!(sol.x.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn negative_rhs_is_handled_by_signed_artificials() {
        let a = dense_cols(2, vec![vec![1.0, -1.0, 0.5], vec![0.0, 1.0, -1.0]]);
        // x0 = (0, 1, 1): y = (-0.5, 0). Some nonnegative solution exists,
        // so the solver must find one with no worse objective.
        let y = [-0.5, 0.0];
        let sol = recover_l1(&a, &y, &LpOpts::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective <= 2.0 + 1e-8);
        assert!(sol.max_infeasibility <= 1e-8);
    }

    #[test]
    fn infeasible_system_is_detected() {
        // x >= 0 cannot satisfy x1 + x2 = -1.
        let a = dense_cols(1, vec![vec![1.0, 1.0]]);
        let sol = recover_l1(&a, &[-1.0], &LpOpts::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn certificates_populated_on_optimal() {
        let a = dense_cols(
            2,
            vec![vec![1.0, 0.3, 0.7, 0.2], vec![0.1, 1.0, 0.4, 0.9]],
        );
        let sol = recover_l1(&a, &[1.0, 1.5], &LpOpts::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.max_infeasibility <= 1e-8);
        assert!(sol.min_reduced_cost >= -1e-9);
        assert!(sol.phase1_objective <= 1e-8);
    }
}
