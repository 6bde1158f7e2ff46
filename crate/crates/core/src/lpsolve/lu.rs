//! Basis factorization for the revised simplex method.
//!
//! Left-looking LU with partial pivoting over sparse columns, using a dense
//! accumulator. Columns are processed in ascending-fill order (fewest
//! nonzeros first), so a basis drawn from a sparsified matrix factors and
//! solves in time proportional to its nonzero count, while a dense basis
//! degrades gracefully to the usual dense cost. Pivots after factorization
//! are absorbed into a product-form eta file until the next refactorization.

use crate::error::{Error, Result};

/// Sparse basis column: sorted (row, value) pairs.
pub type BasisColumn = Vec<(u32, f64)>;

pub struct LuFactors {
    n: usize,
    /// Processing order: step k factored basis slot `col_order[k]`.
    col_order: Vec<usize>,
    /// Original row chosen as pivot at each step.
    pivot_row: Vec<usize>,
    /// Position of each original row in pivot order.
    row_pos: Vec<usize>,
    /// L columns, strictly below the diagonal, keyed by original row index.
    l_cols: Vec<Vec<(u32, f64)>>,
    /// U columns: (step index j <= k, value), diagonal last.
    u_cols: Vec<Vec<(u32, f64)>>,
    u_diag: Vec<f64>,
}

const SINGULAR_TOL: f64 = 1e-11;

impl LuFactors {
    /// Factor the basis given by `columns` (one sparse column per basis slot).
    pub fn factor(n: usize, columns: &[BasisColumn]) -> Result<LuFactors> {
        assert_eq!(columns.len(), n);
        let mut col_order: Vec<usize> = (0..n).collect();
        col_order.sort_by_key(|&j| (columns[j].len(), j));

        let mut pivot_row = vec![usize::MAX; n];
        let mut row_pos = vec![usize::MAX; n];
        let mut l_cols: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        let mut u_cols: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        let mut u_diag = vec![0.0; n];
        let mut work = vec![0.0; n];
        let mut touched: Vec<u32> = Vec::with_capacity(n);

        for k in 0..n {
            let col = &columns[col_order[k]];
            for &(r, v) in col {
                work[r as usize] = v;
                touched.push(r);
            }
            // Apply earlier columns of L in pivot order; fill created at a
            // later pivot row is consumed when that step is reached.
            let mut u_col = Vec::new();
            for j in 0..k {
                let pr = pivot_row[j];
                let xj = work[pr];
                if xj == 0.0 {
                    continue;
                }
                u_col.push((j as u32, xj));
                work[pr] = 0.0;
                for &(r, l) in &l_cols[j] {
                    let slot = &mut work[r as usize];
                    if *slot == 0.0 {
                        touched.push(r);
                    }
                    *slot -= l * xj;
                }
            }
            // Pivot: largest remaining magnitude among unpivoted rows.
            let mut best_row = usize::MAX;
            let mut best_mag = 0.0;
            for &r in &touched {
                let r = r as usize;
                if row_pos[r] != usize::MAX {
                    continue;
                }
                let mag = work[r].abs();
                if mag > best_mag {
                    best_mag = mag;
                    best_row = r;
                }
            }
            if best_mag < SINGULAR_TOL {
                for &r in &touched {
                    work[r as usize] = 0.0;
                }
                return Err(Error::Lp(format!(
                    "singular basis at elimination step {k} (pivot {best_mag:.3e})"
                )));
            }
            let diag = work[best_row];
            u_diag[k] = diag;
            pivot_row[k] = best_row;
            row_pos[best_row] = k;
            let mut l_col = Vec::new();
            for &r in &touched {
                let ru = r as usize;
                let v = work[ru];
                work[ru] = 0.0;
                if ru == best_row || v == 0.0 || row_pos[ru] != usize::MAX {
                    continue;
                }
                l_col.push((r, v / diag));
            }
            l_col.sort_unstable_by_key(|e| e.0);
            l_cols.push(l_col);
            u_cols.push(u_col);
            touched.clear();
        }
        Ok(LuFactors {
            n,
            col_order,
            pivot_row,
            row_pos,
            l_cols,
            u_cols,
            u_diag,
        })
    }

    /// x := B^-1 b. `b` is indexed by row, the result by basis slot.
    pub fn ftran(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut rhs = b.to_vec();
        let mut z = vec![0.0; n];
        for j in 0..n {
            let zj = rhs[self.pivot_row[j]];
            z[j] = zj;
            if zj == 0.0 {
                continue;
            }
            for &(r, l) in &self.l_cols[j] {
                rhs[r as usize] -= l * zj;
            }
        }
        // U w = z, column-oriented back substitution.
        for c in (0..n).rev() {
            let wc = z[c] / self.u_diag[c];
            z[c] = wc;
            if wc == 0.0 {
                continue;
            }
            for &(j, u) in &self.u_cols[c] {
                z[j as usize] -= u * wc;
            }
        }
        for k in 0..n {
            x[self.col_order[k]] = z[k];
        }
    }

    /// y := B^-T c. `c` is indexed by basis slot, the result by row.
    pub fn btran(&self, c: &[f64], y: &mut [f64]) {
        let n = self.n;
        let mut v = vec![0.0; n];
        for k in 0..n {
            v[k] = c[self.col_order[k]];
        }
        // U^T w = v, forward.
        for k in 0..n {
            let mut acc = v[k];
            for &(j, u) in &self.u_cols[k] {
                acc -= u * v[j as usize];
            }
            v[k] = acc / self.u_diag[k];
        }
        // L^T z = w, backward; L columns are keyed by original row.
        for j in (0..n).rev() {
            let mut acc = v[j];
            for &(r, l) in &self.l_cols[j] {
                acc -= l * v[self.row_pos[r as usize]];
            }
            v[j] = acc;
        }
        for j in 0..n {
            y[self.pivot_row[j]] = v[j];
        }
    }

}

/// Product-form update: basis slot `slot` was replaced while the tableau
/// direction was `d = B^-1 a_entering`.
pub struct Eta {
    slot: usize,
    diag: f64,
    /// Off-pivot entries of d, sparse.
    rest: Vec<(u32, f64)>,
}

impl Eta {
    pub fn new(slot: usize, d: &[f64]) -> Eta {
        let diag = d[slot];
        let mut rest = Vec::new();
        for (i, &v) in d.iter().enumerate() {
            if i != slot && v != 0.0 {
                rest.push((i as u32, v));
            }
        }
        Eta { slot, diag, rest }
    }

    /// v := E^-1 v (ftran step).
    #[inline]
    pub fn apply(&self, v: &mut [f64]) {
        let vr = v[self.slot] / self.diag;
        v[self.slot] = vr;
        if vr == 0.0 {
            return;
        }
        for &(i, d) in &self.rest {
            v[i as usize] -= d * vr;
        }
    }

    /// c := E^-T c (btran step).
    #[inline]
    pub fn apply_t(&self, c: &mut [f64]) {
        let mut acc = c[self.slot];
        for &(i, d) in &self.rest {
            acc -= d * c[i as usize];
        }
        c[self.slot] = acc / self.diag;
    }
}

/// LU factors plus the eta file accumulated since the last refactorization.
pub struct BasisSolver {
    pub lu: LuFactors,
    pub etas: Vec<Eta>,
}

impl BasisSolver {
    pub fn new(n: usize, columns: &[BasisColumn]) -> Result<BasisSolver> {
        Ok(BasisSolver {
            lu: LuFactors::factor(n, columns)?,
            etas: Vec::new(),
        })
    }

    pub fn ftran(&self, b: &[f64], x: &mut [f64]) {
        self.lu.ftran(b, x);
        for eta in &self.etas {
            eta.apply(x);
        }
    }

    pub fn btran(&self, c: &[f64], y: &mut [f64]) {
        let mut work = c.to_vec();
        for eta in self.etas.iter().rev() {
            eta.apply_t(&mut work);
        }
        self.lu.btran(&work, y);
    }

    pub fn push_eta(&mut self, slot: usize, d: &[f64]) {
        self.etas.push(Eta::new(slot, d));
    }

    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }
}
