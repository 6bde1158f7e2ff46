//! Numeric kernels shared by the recovery algorithms: column-sparse matvec,
//! least squares on a column subset via Householder QR with column pivoting,
//! and a brute-force restricted-isometry diagnostic for tiny matrices.

use crate::error::{Error, Result};
use crate::matgen::DenseMatrix;

/// Column-compressed matrix: per column, sorted (row, value) pairs.
///
/// A matvec touches only stored entries, so a matrix with t nonzeros per
/// column multiplies in O(tN) operations.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSparseMatrix {
    rows: usize,
    /// Start offset of each column in `row_idx`/`values`; length cols+1.
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl ColumnSparseMatrix {
    pub fn from_columns(rows: usize, columns: Vec<Vec<(u32, f64)>>) -> Self {
        let mut col_ptr = Vec::with_capacity(columns.len() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in &columns {
            debug_assert!(col.windows(2).all(|w| w[0].0 < w[1].0), "rows must be sorted");
            for &(r, v) in col {
                debug_assert!((r as usize) < rows);
                row_idx.push(r);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        ColumnSparseMatrix {
            rows,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Convert a dense matrix, keeping only its nonzero entries.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let mut columns = vec![Vec::new(); cols];
        for i in 0..rows {
            let row = m.row(i);
            for (j, &v) in row.iter().enumerate() {
                if v.abs() > 0.0 {
                    columns[j].push((i as u32, v));
                }
            }
        }
        Self::from_columns(rows, columns)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_columns(n, (0..n).map(|i| vec![(i as u32, 1.0)]).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn col(&self, j: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[s..e], &self.values[s..e])
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows * self.cols()) as f64
    }

    pub fn col_norm(&self, j: usize) -> f64 {
        let (_, vals) = self.col(j);
        vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// y = M x for dense x.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(Error::Dimension(format!(
                "matvec: matrix is {}x{}, vector has length {}",
                self.rows,
                self.cols(),
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let (idx, vals) = self.col(j);
            for (r, v) in idx.iter().zip(vals) {
                y[*r as usize] += v * xj;
            }
        }
        Ok(y)
    }

    /// y = M x for x given as (support, values). O(sum of touched column nnz).
    pub fn matvec_sparse(&self, support: &[u32], coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(support.len(), coeffs.len());
        let mut y = vec![0.0; self.rows];
        for (&j, &c) in support.iter().zip(coeffs) {
            let (idx, vals) = self.col(j as usize);
            for (r, v) in idx.iter().zip(vals) {
                y[*r as usize] += v * c;
            }
        }
        y
    }

    /// z = M^T r: one sparse dot product per column.
    pub fn matvec_t(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.rows {
            return Err(Error::Dimension(format!(
                "matvec_t: matrix is {}x{}, vector has length {}",
                self.rows,
                self.cols(),
                r.len()
            )));
        }
        let mut z = vec![0.0; self.cols()];
        for (j, zj) in z.iter_mut().enumerate() {
            let (idx, vals) = self.col(j);
            let mut acc = 0.0;
            for (ri, v) in idx.iter().zip(vals) {
                acc += v * r[*ri as usize];
            }
            *zj = acc;
        }
        Ok(z)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols());
        for j in 0..self.cols() {
            let (idx, vals) = self.col(j);
            for (r, v) in idx.iter().zip(vals) {
                m.set(*r as usize, j, *v);
            }
        }
        m
    }

    /// Gather the columns `support` into a dense column-major n x |support| block.
    pub fn gather_columns(&self, support: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.rows * support.len(), 0.0);
        for (c, &j) in support.iter().enumerate() {
            let (idx, vals) = self.col(j);
            let col = &mut out[c * self.rows..(c + 1) * self.rows];
            for (r, v) in idx.iter().zip(vals) {
                col[*r as usize] = *v;
            }
        }
    }
}

/// Outcome of a least-squares fit on a column subset.
#[derive(Debug, Clone)]
pub struct LeastSquaresResult {
    /// Coefficients in the order of the supplied support.
    pub coefficients: Vec<f64>,
    /// y - M_T c.
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    /// True when pivoting detected numerical rank below |T|; the returned
    /// coefficients are then the basic solution on the detected rank.
    pub rank_deficient: bool,
}

/// Minimize ||y - M_T c||_2 over c, where M_T is the columns of `m` listed in
/// `support`. Householder QR with column pivoting; rank deficiency is flagged
/// and free coordinates are set to zero.
pub fn lstsq_on_support(
    m: &ColumnSparseMatrix,
    support: &[usize],
    y: &[f64],
) -> Result<LeastSquaresResult> {
    let n = m.rows();
    let k = support.len();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "lstsq: matrix has {} rows, y has length {}",
            n,
            y.len()
        )));
    }
    if k == 0 {
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        return Ok(LeastSquaresResult {
            coefficients: Vec::new(),
            residual: y.to_vec(),
            residual_norm: norm,
            rank_deficient: false,
        });
    }
    let mut a = Vec::new();
    m.gather_columns(support, &mut a);
    let coeffs = qr_solve_pivoted(&mut a, n, k, y);

    let mut residual = y.to_vec();
    for (c, &j) in support.iter().enumerate() {
        let x = coeffs.coeffs[c];
        if x == 0.0 {
            continue;
        }
        let (idx, vals) = m.col(j);
        for (r, v) in idx.iter().zip(vals) {
            residual[*r as usize] -= v * x;
        }
    }
    let residual_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(LeastSquaresResult {
        coefficients: coeffs.coeffs,
        residual,
        residual_norm,
        rank_deficient: coeffs.rank < k,
    })
}

struct PivotedSolution {
    coeffs: Vec<f64>,
    rank: usize,
}

/// In-place Householder QR with column pivoting on a column-major n x k block
/// (k <= n is not required), followed by a basic least-squares solve.
fn qr_solve_pivoted(a: &mut [f64], n: usize, k: usize, y: &[f64]) -> PivotedSolution {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut col_norms: Vec<f64> = (0..k)
        .map(|j| a[j * n..(j + 1) * n].iter().map(|v| v * v).sum())
        .collect();
    let steps = k.min(n);
    let mut taus = vec![0.0; steps];
    let mut qty = y.to_vec();
    let mut rank = steps;
    let mut r00: f64 = 0.0;

    for j in 0..steps {
        // Pivot: bring the column with the largest remaining norm to front.
        let (mut best, mut best_norm) = (j, col_norms[j]);
        for c in (j + 1)..k {
            if col_norms[c] > best_norm {
                best = c;
                best_norm = col_norms[c];
            }
        }
        if best != j {
            for i in 0..n {
                a.swap(j * n + i, best * n + i);
            }
            col_norms.swap(j, best);
            perm.swap(j, best);
        }

        // Householder vector for column j below the diagonal.
        let (head, tail) = a.split_at_mut((j + 1) * n);
        let col = &mut head[j * n..];
        let norm_x: f64 = col[j..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        if j == 0 {
            r00 = norm_x;
        }
        if norm_x <= r00 * 1e-12 || norm_x == 0.0 {
            rank = j;
            break;
        }
        let alpha = col[j];
        let beta = if alpha >= 0.0 { -norm_x } else { norm_x };
        let tau = (beta - alpha) / beta;
        let scale = 1.0 / (alpha - beta);
        for v in col[j + 1..n].iter_mut() {
            *v *= scale;
        }
        col[j] = beta;
        taus[j] = tau;

        // Apply the reflector to the remaining columns and to qty.
        for c in 0..(k - j - 1) {
            let target = &mut tail[c * n..c * n + n];
            let mut dot = target[j];
            for i in (j + 1)..n {
                dot += col[i] * target[i];
            }
            let w = tau * dot;
            target[j] -= w;
            for i in (j + 1)..n {
                target[i] -= w * col[i];
            }
        }
        let mut dot = qty[j];
        for i in (j + 1)..n {
            dot += col[i] * qty[i];
        }
        let w = tau * dot;
        qty[j] -= w;
        for i in (j + 1)..n {
            qty[i] -= w * col[i];
        }

        // Downdate remaining column norms; recompute when cancellation bites.
        for c in (j + 1)..k {
            let rj = a[c * n + j];
            let updated = col_norms[c] - rj * rj;
            col_norms[c] = if updated > 1e-10 * col_norms[c].max(1.0) {
                updated
            } else {
                a[c * n + j + 1..c * n + n].iter().map(|v| v * v).sum()
            };
        }
    }

    // Back substitution on the rank x rank leading block.
    let mut z = vec![0.0; k];
    for j in (0..rank).rev() {
        let mut acc = qty[j];
        for c in (j + 1)..rank {
            acc -= a[c * n + j] * z[c];
        }
        z[j] = acc / a[j * n + j];
    }
    let mut coeffs = vec![0.0; k];
    for j in 0..rank {
        coeffs[perm[j]] = z[j];
    }
    PivotedSolution { coeffs, rank }
}

/// Number of size-k subsets of 0..n, saturating at u128 bounds.
fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

const RIP_ENUM_LIMIT: u128 = 1_000_000;

/// Brute-force restricted isometry constant: the maximum over all size-k
/// column supports T of max(1 - lambda_min, lambda_max - 1) for the Gram
/// matrix of M_T. Requires unit-norm columns and C(N, k) <= 10^6.
pub fn rip_epsilon(m: &ColumnSparseMatrix, k: usize) -> Result<f64> {
    let cols = m.cols();
    if k == 0 || k > cols {
        return Err(Error::Param(format!(
            "rip_epsilon: k must lie in 1..={cols}, got {k}"
        )));
    }
    let count = binomial(cols, k);
    if count > RIP_ENUM_LIMIT {
        return Err(Error::EnumerationGuard { n: cols, k, count });
    }
    for j in 0..cols {
        let norm = m.col_norm(j);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Param(format!(
                "rip_epsilon requires unit-norm columns; column {j} has norm {norm}"
            )));
        }
    }

    // Full Gram matrix once; per-support Grams are then O(k^2) gathers.
    let mut gram = vec![0.0; cols * cols];
    for i in 0..cols {
        let (ri, vi) = m.col(i);
        for j in i..cols {
            let (rj, vj) = m.col(j);
            let dot = sparse_dot(ri, vi, rj, vj);
            gram[i * cols + j] = dot;
            gram[j * cols + i] = dot;
        }
    }

    let mut support: Vec<usize> = (0..k).collect();
    let mut sub = vec![0.0; k * k];
    let mut eps: f64 = 0.0;
    loop {
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                sub[a * k + b] = gram[i * cols + j];
            }
        }
        let (lo, hi) = symmetric_eig_range(&mut sub, k);
        eps = eps.max((1.0 - lo).max(hi - 1.0));
        if !next_combination(&mut support, cols) {
            break;
        }
    }
    Ok(eps)
}

fn sparse_dot(ri: &[u32], vi: &[f64], rj: &[u32], vj: &[f64]) -> f64 {
    let (mut a, mut b, mut acc) = (0, 0, 0.0);
    while a < ri.len() && b < rj.len() {
        match ri[a].cmp(&rj[b]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                acc += vi[a] * vj[b];
                a += 1;
                b += 1;
            }
        }
    }
    acc
}

/// Advance `support` to the next k-combination of 0..n in lexicographic
/// order; false when exhausted.
fn next_combination(support: &mut [usize], n: usize) -> bool {
    let k = support.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if support[i] < n - k + i {
            support[i] += 1;
            for j in (i + 1)..k {
                support[j] = support[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Extreme eigenvalues of a symmetric k x k matrix (destroys its argument).
/// Closed forms up to k = 3, cyclic Jacobi beyond.
fn symmetric_eig_range(a: &mut [f64], k: usize) -> (f64, f64) {
    match k {
        1 => (a[0], a[0]),
        2 => {
            let (p, q, r) = (a[0], a[3], a[1]);
            let mean = 0.5 * (p + q);
            let disc = (0.25 * (p - q) * (p - q) + r * r).sqrt();
            (mean - disc, mean + disc)
        }
        3 => eig3(a),
        _ => jacobi_eig_range(a, k),
    }
}

/// Trigonometric solution of the symmetric 3x3 eigenproblem.
fn eig3(a: &[f64]) -> (f64, f64) {
    let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
    let q = (a[0] + a[4] + a[8]) / 3.0;
    if p1 == 0.0 {
        let lo = a[0].min(a[4]).min(a[8]);
        let hi = a[0].max(a[4]).max(a[8]);
        return (lo, hi);
    }
    let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv_p = 1.0 / p;
    let b: Vec<f64> = (0..9)
        .map(|i| {
            let diag = if i % 4 == 0 { q } else { 0.0 };
            inv_p * (a[i] - diag)
        })
        .collect();
    let det_b = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
        + b[2] * (b[3] * b[7] - b[4] * b[6]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    (lo, hi)
}

/// Cyclic Jacobi sweeps until the off-diagonal mass falls below 1e-12 of the
/// Frobenius norm.
fn jacobi_eig_range(a: &mut [f64], k: usize) -> (f64, f64) {
    let fro: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-12 * fro.max(1.0);
    for _sweep in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += a[p * k + q] * a[p * k + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a[p * k + q];
                if apq.abs() <= tol / (k as f64) {
                    continue;
                }
                let app = a[p * k + p];
                let aqq = a[q * k + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = a[i * k + p];
                    let aiq = a[i * k + q];
                    a[i * k + p] = c * aip - s * aiq;
                    a[i * k + q] = s * aip + c * aiq;
                }
                for i in 0..k {
                    let api = a[p * k + i];
                    let aqi = a[q * k + i];
                    a[p * k + i] = c * api - s * aqi;
                    a[q * k + i] = s * api + c * aqi;
                }
            }
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        lo = lo.min(a[i * k + i]);
        hi = hi.max(a[i * k + i]);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen::{generate, EnsembleKind, EnsembleSpec};
    use crate::rng::Seed;

    #[test]
    fn identity_matvec() {
        let m = ColumnSparseMatrix::identity(3);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_matrix_matvec() {
        let m = ColumnSparseMatrix::from_columns(3, vec![vec![], vec![], vec![]]);
        assert_eq!(m.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sparse_and_dense_matvec_agree() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 50, 100);
        let dense = generate(&spec, Seed::new(42)).unwrap();
        let sparse = ColumnSparseMatrix::from_dense(&dense);
        let mut rng = Seed::new(7).rng();
        let x: Vec<f64> = (0..100).map(|_| rng.normal()).collect();
        let yd = dense.matvec(&x).unwrap();
        let ys = sparse.matvec(&x).unwrap();
        for (a, b) in yd.iter().zip(&ys) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let m = ColumnSparseMatrix::identity(3);
        assert!(m.matvec(&[1.0, 2.0]).is_err());
        assert!(m.matvec_t(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn lstsq_identity_support() {
        let m = ColumnSparseMatrix::identity(3);
        let r = lstsq_on_support(&m, &[0, 2], &[5.0, 7.0, 9.0]).unwrap();
        assert!((r.coefficients[0] - 5.0).abs() < 1e-12);
        assert!((r.coefficients[1] - 9.0).abs() < 1e-12);
        assert!((r.residual_norm - 7.0).abs() < 1e-12);
        assert!(!r.rank_deficient);
    }

    #[test]
    fn lstsq_full_square_has_zero_residual() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 6, 6);
        let dense = generate(&spec, Seed::new(2)).unwrap();
        let m = ColumnSparseMatrix::from_dense(&dense);
        let y: Vec<f64> = (0..6).map(|i| (i + 1) as f64).collect();
        let r = lstsq_on_support(&m, &[0, 1, 2, 3, 4, 5], &y).unwrap();
        assert!(r.residual_norm < 1e-9, "residual {}", r.residual_norm);
    }

    #[test]
    fn lstsq_residual_is_orthogonal_to_support() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 20, 40);
        let dense = generate(&spec, Seed::new(88)).unwrap();
        let m = ColumnSparseMatrix::from_dense(&dense);
        let mut rng = Seed::new(3).rng();
        let y: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let support = [3usize, 11, 17, 25, 39];
        let r = lstsq_on_support(&m, &support, &y).unwrap();
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for &j in &support {
            let (idx, vals) = m.col(j);
            let mut dot = 0.0;
            for (ri, v) in idx.iter().zip(vals) {
                dot += v * r.residual[*ri as usize];
            }
            assert!(dot.abs() <= 1e-10 * ynorm, "column {j}: {dot}");
        }
    }

    #[test]
    fn lstsq_flags_rank_deficiency() {
        // Two identical columns.
        let m = ColumnSparseMatrix::from_columns(
            3,
            vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 1.0), (1, 2.0)]],
        );
        let r = lstsq_on_support(&m, &[0, 1], &[1.0, 2.0, 0.0]).unwrap();
        assert!(r.rank_deficient);
        assert!(r.residual_norm < 1e-10);
    }

    #[test]
    fn rip_of_identity_is_zero() {
        let m = ColumnSparseMatrix::identity(4);
        for k in 1..=4 {
            assert!(rip_epsilon(&m, k).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn rip_closed_form_example() {
        // Columns e1, e2, (e1+e2)/sqrt(2): the worst 2-column Gram has
        // eigenvalues 1 +/- 1/sqrt(2).
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = ColumnSparseMatrix::from_columns(
            2,
            vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(0, s), (1, s)]],
        );
        let eps = rip_epsilon(&m, 2).unwrap();
        assert!((eps - s).abs() <= 1e-12, "eps={eps}");
    }

    #[test]
    fn rip_monotone_in_k() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 6, 12);
        let dense = generate(&spec, Seed::new(17)).unwrap();
        let mut cols = Vec::new();
        for j in 0..12 {
            let mut col: Vec<(u32, f64)> = (0..6).map(|i| (i as u32, dense.get(i, j))).collect();
            let norm = col.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            for (_, v) in col.iter_mut() {
                *v /= norm;
            }
            cols.push(col);
        }
        let m = ColumnSparseMatrix::from_columns(6, cols);
        let mut prev = 0.0;
        for k in 1..=6 {
            let eps = rip_epsilon(&m, k).unwrap();
            assert!(eps >= prev - 1e-12, "k={k}: {eps} < {prev}");
            prev = eps;
        }
    }

    #[test]
    fn rip_enumeration_guard_trips() {
        let m = ColumnSparseMatrix::identity(100);
        match rip_epsilon(&m, 8) {
            Err(Error::EnumerationGuard { .. }) => {}
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_matches_closed_form_on_diag() {
        let mut a = vec![0.0; 16];
        for (i, v) in [4.0, 1.0, 3.0, 2.0].iter().enumerate() {
            a[i * 4 + i] = *v;
        }
        let (lo, hi) = jacobi_eig_range(&mut a, 4);
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 4.0).abs() < 1e-12);
    }
}
