//! Two-phase primal revised simplex for min 1'x subject to Ax = y, x >= 0.
//!
//! Phase 1 starts from a signed-artificial identity basis and minimizes the
//! artificial mass; phase 2 minimizes the all-ones objective over the real
//! variables. Pricing is Dantzig's rule over a rotating partial window, with
//! Bland's rule engaged after a run of degenerate pivots. The basis is kept
//! as a sparse LU plus a product-form eta file, refactored periodically.

use crate::error::{Error, Result};
use crate::numkit::ColumnSparseMatrix;

use super::lu::{BasisColumn, BasisSolver};
use super::{LpOpts, LpStatus};

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const STALL_LIMIT: usize = 50;
const DEGENERATE_STEP: f64 = 1e-11;
/// Ratio-test slack multiplier for preferring numerically large pivots.
const RATIO_SLACK: f64 = 1e-7;
/// Extra refactorizations while stalled, to shed accumulated noise.
const STALL_REFACTOR: usize = 200;
/// Rounds of refactor-and-reprice allowed to confirm a clean optimum.
const CLEAN_OPT_ROUNDS: usize = 6;

pub struct SimplexOutcome {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub max_infeasibility: f64,
    pub min_reduced_cost: f64,
    pub phase1_objective: f64,
}

struct Engine<'a> {
    a: &'a ColumnSparseMatrix,
    n: usize,
    n_real: usize,
    /// Sign of each artificial column (matches the sign of y_i).
    art_sign: Vec<f64>,
    y: &'a [f64],
    y_scale: f64,
    opts: &'a LpOpts,
    /// Variable occupying each basis slot; artificials are n_real + row.
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Artificials that left the basis are barred from re-entering.
    banned: Vec<bool>,
    x_b: Vec<f64>,
    solver: BasisSolver,
    iterations: usize,
    cursor: usize,
    stall: usize,
    bland: bool,
    // scratch
    pi: Vec<f64>,
    pi_scale: f64,
    direction: Vec<f64>,
    rhs_scratch: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(a: &'a ColumnSparseMatrix, y: &'a [f64], opts: &'a LpOpts) -> Result<Engine<'a>> {
        let n = a.rows();
        let n_real = a.cols();
        let art_sign: Vec<f64> = y.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let basis: Vec<usize> = (0..n).map(|i| n_real + i).collect();
        let mut in_basis = vec![false; n_real + n];
        for &v in &basis {
            in_basis[v] = true;
        }
        let columns: Vec<BasisColumn> = (0..n)
            .map(|i| vec![(i as u32, art_sign[i])])
            .collect();
        let solver = BasisSolver::new(n, &columns)?;
        let x_b: Vec<f64> = y.iter().map(|v| v.abs()).collect();
        let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        Ok(Engine {
            a,
            n,
            n_real,
            art_sign,
            y,
            y_scale,
            opts,
            basis,
            in_basis,
            banned: vec![false; n_real + n],
            x_b,
            solver,
            iterations: 0,
            cursor: 0,
            stall: 0,
            bland: false,
            pi: vec![0.0; n],
            pi_scale: 1.0,
            direction: vec![0.0; n],
            rhs_scratch: vec![0.0; n],
        })
    }

    fn column_of(&self, var: usize) -> BasisColumn {
        if var < self.n_real {
            let (idx, vals) = self.a.col(var);
            idx.iter().zip(vals).map(|(&r, &v)| (r, v)).collect()
        } else {
            let row = var - self.n_real;
            vec![(row as u32, self.art_sign[row])]
        }
    }

    /// pi' a_var for a real variable.
    #[inline]
    fn price_column(&self, var: usize) -> f64 {
        let (idx, vals) = self.a.col(var);
        let mut acc = 0.0;
        for (r, v) in idx.iter().zip(vals) {
            acc += v * self.pi[*r as usize];
        }
        acc
    }

    fn refactor(&mut self) -> Result<()> {
        let columns: Vec<BasisColumn> = self.basis.iter().map(|&v| self.column_of(v)).collect();
        self.solver = BasisSolver::new(self.n, &columns)?;
        // Resync basic values against accumulated drift; values inside the
        // feasibility band around zero are snapped to exactly zero so the
        // ratio test does not chase noise.
        let mut x = vec![0.0; self.n];
        self.solver.ftran(self.y, &mut x);
        let band = self.opts.feas_tol * self.y_scale;
        for v in x.iter_mut() {
            if v.abs() < band {
                *v = 0.0;
            }
        }
        self.x_b = x;
        Ok(())
    }

    /// Reduced costs use the phase cost vector: phase 1 prices artificial
    /// mass (real variables cost 0), phase 2 prices the all-ones objective.
    fn compute_duals(&mut self, phase1: bool) {
        let mut c_b = vec![0.0; self.n];
        for (slot, &var) in self.basis.iter().enumerate() {
            c_b[slot] = if phase1 {
                if var >= self.n_real {
                    1.0
                } else {
                    0.0
                }
            } else if var < self.n_real {
                1.0
            } else {
                0.0
            };
        }
        let mut pi = std::mem::take(&mut self.pi);
        self.solver.btran(&c_b, &mut pi);
        self.pi = pi;
        // Reduced-cost noise grows with the dual magnitudes; tolerance
        // comparisons are scaled accordingly.
        self.pi_scale = self.pi.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    }

    fn reduced_cost(&self, var: usize, phase1: bool) -> f64 {
        let c = if phase1 { 0.0 } else { 1.0 };
        c - self.price_column(var)
    }

    /// Entering variable, or None when no real column improves.
    fn price(&mut self, phase1: bool) -> Option<usize> {
        let rc_tol = self.opts.rc_tol * self.pi_scale;
        if self.bland {
            for var in 0..self.n_real {
                if self.in_basis[var] || self.banned[var] {
                    continue;
                }
                if self.reduced_cost(var, phase1) < -rc_tol {
                    return Some(var);
                }
            }
            return None;
        }
        let window = self.opts.pricing_window.max(1).min(self.n_real);
        let mut scanned = 0;
        let mut start = self.cursor % self.n_real;
        while scanned < self.n_real {
            let len = window.min(self.n_real - scanned);
            let mut best: Option<(usize, f64)> = None;
            for off in 0..len {
                let var = (start + off) % self.n_real;
                if self.in_basis[var] || self.banned[var] {
                    continue;
                }
                let rc = self.reduced_cost(var, phase1);
                if rc < -rc_tol {
                    match best {
                        Some((_, b)) if rc >= b => {}
                        _ => best = Some((var, rc)),
                    }
                }
            }
            if let Some((var, _)) = best {
                self.cursor = (var + 1) % self.n_real;
                return Some(var);
            }
            scanned += len;
            start = (start + len) % self.n_real;
        }
        None
    }

    /// Leaving slot via the ratio test; None signals an unbounded direction.
    fn ratio_test(&self) -> Option<usize> {
        let pivot_tol = self.opts.pivot_tol;
        let mut theta = f64::INFINITY;
        for (slot, &d) in self.direction.iter().enumerate() {
            if d > pivot_tol {
                let ratio = (self.x_b[slot].max(0.0)) / d;
                if ratio < theta {
                    theta = ratio;
                }
            }
        }
        if theta.is_infinite() {
            return None;
        }
        if self.bland {
            // Lowest variable index among slots attaining the minimum ratio.
            let mut pick: Option<usize> = None;
            for (slot, &d) in self.direction.iter().enumerate() {
                if d > pivot_tol {
                    let ratio = (self.x_b[slot].max(0.0)) / d;
                    if ratio <= theta + 1e-15
                        && pick.is_none_or(|p| self.basis[slot] < self.basis[p])
                    {
                        pick = Some(slot);
                    }
                }
            }
            return pick;
        }
        // Among slots within a small slack of the minimal ratio, take the
        // numerically largest pivot; break ties by lowest variable index.
        let slack = theta * RATIO_SLACK + RATIO_SLACK * RATIO_SLACK;
        let mut pick: Option<usize> = None;
        let mut pick_mag = 0.0;
        for (slot, &d) in self.direction.iter().enumerate() {
            if d > pivot_tol {
                let ratio = (self.x_b[slot].max(0.0)) / d;
                if ratio <= theta + slack {
                    let better = d > pick_mag * (1.0 + 1e-12)
                        || (d >= pick_mag * (1.0 - 1e-12)
                            && pick.is_some_and(|p| self.basis[slot] < self.basis[p]));
                    if pick.is_none() || better {
                        pick = Some(slot);
                        pick_mag = d;
                    }
                }
            }
        }
        pick
    }

    fn pivot(&mut self, entering: usize, slot: usize) -> Result<()> {
        let d_r = self.direction[slot];
        let theta = (self.x_b[slot].max(0.0)) / d_r;
        for (s, xb) in self.x_b.iter_mut().enumerate() {
            *xb -= theta * self.direction[s];
        }
        self.x_b[slot] = theta;
        let leaving = self.basis[slot];
        self.in_basis[leaving] = false;
        if leaving >= self.n_real {
            self.banned[leaving] = true;
        }
        self.basis[slot] = entering;
        self.in_basis[entering] = true;
        self.solver.push_eta(slot, &self.direction);
        self.iterations += 1;

        if theta <= DEGENERATE_STEP {
            self.stall += 1;
            if self.stall >= STALL_LIMIT {
                self.bland = true;
            }
            if self.stall % STALL_REFACTOR == 0 {
                self.refactor()?;
            }
        } else {
            self.stall = 0;
            self.bland = false;
        }
        if self.solver.eta_count() >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Run the current phase to optimality or iteration exhaustion.
    ///
    /// Phase 1 stops as soon as the artificial mass is inside the
    /// feasibility tolerance; the artificial subproblem's exact optimum is
    /// of no interest once a feasible point exists, and grinding out its
    /// degenerate vertices can take thousands of null pivots.
    fn run_phase(&mut self, phase1: bool, max_iters: usize) -> Result<bool> {
        let feas_exit = self.opts.feas_tol * self.y_scale;
        loop {
            if phase1 && self.artificial_mass() <= feas_exit {
                return Ok(true);
            }
            if self.iterations >= max_iters {
                return Ok(false);
            }
            self.compute_duals(phase1);
            let Some(entering) = self.price(phase1) else {
                return Ok(true);
            };
            let col = self.column_of(entering);
            self.rhs_scratch.fill(0.0);
            for &(r, v) in &col {
                self.rhs_scratch[r as usize] = v;
            }
            let mut direction = std::mem::take(&mut self.direction);
            let rhs = std::mem::take(&mut self.rhs_scratch);
            self.solver.ftran(&rhs, &mut direction);
            self.direction = direction;
            self.rhs_scratch = rhs;

            let Some(slot) = self.ratio_test() else {
                return Err(Error::Lp(
                    "unbounded direction in a bounded-below problem (numerical failure)".into(),
                ));
            };
            if self.direction[slot].abs() < self.opts.pivot_tol {
                return Err(Error::Lp("vanishing pivot in ratio test".into()));
            }
            if std::env::var("SPARSE_SENSE_LP_TRACE").is_ok() && self.iterations > 2000 {
                eprintln!(
                    "    it {} ph1={} enter {} rc {:.3e} slot {} leave {} d_r {:.3e} theta {:.3e} bland {}",
                    self.iterations,
                    phase1,
                    entering,
                    self.reduced_cost(entering, phase1),
                    slot,
                    self.basis[slot],
                    self.direction[slot],
                    (self.x_b[slot].max(0.0)) / self.direction[slot],
                    self.bland,
                );
            }
            self.pivot(entering, slot)?;
        }
    }

    fn artificial_mass(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_b)
            .filter(|(&v, _)| v >= self.n_real)
            .map(|(_, &x)| x.max(0.0))
            .sum()
    }

    /// Degenerate pivots that replace basic artificials with real columns
    /// wherever some real column has a nonzero tableau entry in that slot.
    fn expel_artificials(&mut self) -> Result<()> {
        for slot in 0..self.n {
            if self.basis[slot] < self.n_real {
                continue;
            }
            // Row `slot` of B^-1 A: btran of the slot indicator.
            let mut indicator = vec![0.0; self.n];
            indicator[slot] = 1.0;
            let mut rho = vec![0.0; self.n];
            self.solver.btran(&indicator, &mut rho);
            let mut found = None;
            for var in 0..self.n_real {
                if self.in_basis[var] {
                    continue;
                }
                let (idx, vals) = self.a.col(var);
                let mut acc = 0.0;
                for (r, v) in idx.iter().zip(vals) {
                    acc += v * rho[*r as usize];
                }
                if acc.abs() > 1e-7 {
                    found = Some(var);
                    break;
                }
            }
            let Some(var) = found else {
                // Redundant row: with full-rank data this is unreachable.
                return Err(Error::Lp(format!(
                    "cannot expel artificial from slot {slot}; constraint row appears redundant"
                )));
            };
            let col = self.column_of(var);
            self.rhs_scratch.fill(0.0);
            for &(r, v) in &col {
                self.rhs_scratch[r as usize] = v;
            }
            let mut direction = std::mem::take(&mut self.direction);
            let rhs = std::mem::take(&mut self.rhs_scratch);
            self.solver.ftran(&rhs, &mut direction);
            self.direction = direction;
            self.rhs_scratch = rhs;
            let leaving = self.basis[slot];
            self.in_basis[leaving] = false;
            self.banned[leaving] = true;
            self.basis[slot] = var;
            self.in_basis[var] = true;
            self.solver.push_eta(slot, &self.direction);
            self.x_b[slot] = 0.0;
            self.iterations += 1;
            if self.solver.eta_count() >= self.opts.refactor_every {
                self.refactor()?;
            }
        }
        Ok(())
    }

    /// Assemble the solution vector and final certificates.
    fn finish(&mut self, status: LpStatus) -> Result<SimplexOutcome> {
        self.refactor()?;
        let mut x = vec![0.0; self.n_real];
        for (slot, &var) in self.basis.iter().enumerate() {
            if var < self.n_real {
                x[var] = self.x_b[slot];
            }
        }
        let ax = self.a.matvec(&x)?;
        let mut max_infeas: f64 = 0.0;
        for (axi, yi) in ax.iter().zip(self.y) {
            // Residual attributable to artificials still in the basis is a
            // genuine infeasibility and shows up here.
            max_infeas = max_infeas.max((axi - yi).abs());
        }
        let mut min_rc = f64::INFINITY;
        if matches!(status, LpStatus::Optimal) {
            self.compute_duals(false);
            for var in 0..self.n_real {
                if self.in_basis[var] {
                    continue;
                }
                min_rc = min_rc.min(self.reduced_cost(var, false));
            }
        }
        let objective = x.iter().sum();
        Ok(SimplexOutcome {
            status,
            x,
            objective,
            iterations: self.iterations,
            max_infeasibility: max_infeas,
            min_reduced_cost: min_rc,
            phase1_objective: self.artificial_mass(),
        })
    }
}

pub fn solve(a: &ColumnSparseMatrix, y: &[f64], opts: &LpOpts) -> Result<SimplexOutcome> {
    if y.len() != a.rows() {
        return Err(Error::Dimension(format!(
            "lp: matrix is {}x{}, rhs has length {}",
            a.rows(),
            a.cols(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Param("lp: right-hand side must be finite".into()));
    }
    let max_iters = opts.max_iters(a.rows(), a.cols());
    let mut engine = Engine::new(a, y, opts)?;

    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let feas_limit = opts.feas_tol * y_scale;

    let done = engine.run_phase(true, max_iters)?;
    if !done {
        return engine.finish(LpStatus::IterationLimit);
    }
    if engine.artificial_mass() > feas_limit {
        return engine.finish(LpStatus::Infeasible);
    }
    if engine.basis.iter().any(|&v| v >= engine.n_real) {
        engine.expel_artificials()?;
    }
    engine.refactor()?;
    engine.stall = 0;
    engine.bland = false;

    // Iterate phase 2 until a freshly factored basis confirms optimality:
    // a stale eta file can both hide improving columns and invent phantom
    // ones near the (heavily degenerate) optimal vertex.
    for _round in 0..CLEAN_OPT_ROUNDS {
        let done = engine.run_phase(false, max_iters)?;
        if !done {
            return engine.finish(LpStatus::IterationLimit);
        }
        if engine.solver.eta_count() == 0 {
            break;
        }
        engine.refactor()?;
        engine.compute_duals(false);
        let clean = engine.price(false).is_none();
        if clean {
            break;
        }
    }
    engine.finish(LpStatus::Optimal)
}
