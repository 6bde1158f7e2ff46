//! Pseudo-random sparsification: exact-count per-column {0,1} masks, the
//! entry-wise product with a base matrix, column renormalization to unit
//! l2-norm, and density accounting.
//!
//! A mask with t ones per column applied to an n x N base yields a member of
//! the relative-density-t/n sparsifications of that base. Columns of the
//! result are stored compressed, so downstream matvecs cost O(tN).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::matgen::DenseMatrix;
use crate::numkit::ColumnSparseMatrix;
use crate::rng::{Seed, StreamTag};

/// {0,1} matrix with exactly `t` ones per column, stored as per-column
/// sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    rows: usize,
    ones_per_col: usize,
    /// Flattened support: column j occupies `support[j*t..(j+1)*t]`, sorted.
    support: Vec<u32>,
    cols: usize,
}

impl Mask {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ones_per_col(&self) -> usize {
        self.ones_per_col
    }

    pub fn col(&self, j: usize) -> &[u32] {
        &self.support[j * self.ones_per_col..(j + 1) * self.ones_per_col]
    }

    pub fn col_sum(&self, j: usize) -> usize {
        self.col(j).len()
    }

    pub fn density(&self) -> f64 {
        self.ones_per_col as f64 / self.rows as f64
    }
}

/// Sparsification of a base matrix: the surviving entries in column-sparse
/// storage, the mask that produced them, and the per-column normalization
/// factors that were applied.
#[derive(Debug, Clone)]
pub struct SparsifiedMatrix {
    matrix: ColumnSparseMatrix,
    /// The generating mask; absent for matrices read back from disk.
    mask: Option<Mask>,
    ones_per_col: usize,
    /// Scale factor each column was multiplied by; 1.0 when renormalize was off.
    norm_factors: Vec<f64>,
    renormalized: bool,
}

impl SparsifiedMatrix {
    pub fn matrix(&self) -> &ColumnSparseMatrix {
        &self.matrix
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn into_matrix(self) -> ColumnSparseMatrix {
        self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn ones_per_col(&self) -> usize {
        self.ones_per_col
    }

    pub fn norm_factors(&self) -> &[f64] {
        &self.norm_factors
    }

    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn density(&self) -> f64 {
        self.matrix.density()
    }

    /// Serialize to the textual interchange format:
    ///
    /// ```text
    /// n N t
    /// count idx:value idx:value ...
    /// ```
    ///
    /// one line per column, values printed with round-trip precision.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.rows(),
            self.cols(),
            self.ones_per_col
        )?;
        for j in 0..self.cols() {
            let (idx, vals) = self.matrix.col(j);
            write!(w, "{}", idx.len())?;
            for (r, v) in idx.iter().zip(vals) {
                write!(w, " {}:{}", r, v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parse the format emitted by [`write_text`](Self::write_text).
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sparsified matrix file".into()))??;
        let mut parts = header.split_whitespace();
        let mut next_usize = |name: &str| -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| Error::Parse(format!("header missing {name}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad {name}: {e}")))
        };
        let rows = next_usize("n")?;
        let cols = next_usize("N")?;
        let t = next_usize("t")?;
        let mut columns = Vec::with_capacity(cols);
        for j in 0..cols {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing column {j}")))??;
            let mut toks = line.split_whitespace();
            let count: usize = toks
                .next()
                .ok_or_else(|| Error::Parse(format!("column {j}: missing count")))?
                .parse()
                .map_err(|e| Error::Parse(format!("column {j}: bad count: {e}")))?;
            let mut col = Vec::with_capacity(count);
            for _ in 0..count {
                let tok = toks
                    .next()
                    .ok_or_else(|| Error::Parse(format!("column {j}: truncated entries")))?;
                let (is, vs) = tok
                    .split_once(':')
                    .ok_or_else(|| Error::Parse(format!("column {j}: expected idx:value")))?;
                let ri: u32 = is
                    .parse()
                    .map_err(|e| Error::Parse(format!("column {j}: bad row index: {e}")))?;
                if ri as usize >= rows {
                    return Err(Error::Parse(format!(
                        "column {j}: row index {ri} out of range"
                    )));
                }
                let v: f64 = vs
                    .parse()
                    .map_err(|e| Error::Parse(format!("column {j}: bad value: {e}")))?;
                col.push((ri, v));
            }
            columns.push(col);
        }
        let matrix = ColumnSparseMatrix::from_columns(rows, columns);
        let norm_factors = vec![1.0; cols];
        Ok(SparsifiedMatrix {
            matrix,
            mask: None,
            ones_per_col: t,
            norm_factors,
            renormalized: false,
        })
    }
}

/// Ones-per-column count for a target relative density `s` of an n-row base.
pub fn ones_for_density(n: usize, s: f64) -> usize {
    (s * n as f64).round() as usize
}

/// Generate a mask with exactly `t` ones per column, each column's support
/// drawn uniformly among the C(n, t) possibilities, independently per column.
pub fn make_mask(n: usize, cols: usize, t: usize, seed: Seed) -> Result<Mask> {
    if t < 1 || t > n {
        return Err(Error::Param(format!(
            "mask ones-per-column must lie in 1..={n}, got {t}"
        )));
    }
    if cols == 0 {
        return Err(Error::Param("mask needs at least one column".into()));
    }
    let mut support = Vec::with_capacity(t * cols);
    let mut scratch = Vec::with_capacity(n);
    for j in 0..cols {
        let mut rng = seed.derive(StreamTag::Mask, j as u64).rng();
        support.extend(rng.sample_indices(n, t, &mut scratch));
    }
    Ok(Mask {
        rows: n,
        ones_per_col: t,
        support,
        cols,
    })
}

/// Entry-wise product of `base` with the mask, optionally rescaling every
/// column to unit l2-norm. A column that is all zero after masking cannot be
/// normalized and is reported as degenerate (resampling is the caller's
/// policy; see [`sparsify`]).
pub fn apply(base: &DenseMatrix, mask: &Mask, renormalize: bool) -> Result<SparsifiedMatrix> {
    if base.rows() != mask.rows() || base.cols() != mask.cols() {
        return Err(Error::Dimension(format!(
            "apply: base is {}x{}, mask is {}x{}",
            base.rows(),
            base.cols(),
            mask.rows(),
            mask.cols()
        )));
    }
    let cols = base.cols();
    let mut columns: Vec<Vec<(u32, f64)>> = Vec::with_capacity(cols);
    let mut norm_factors = vec![1.0; cols];
    for j in 0..cols {
        let col = masked_column(base, mask.col(j), j);
        if renormalize && col.is_empty() {
            return Err(Error::DegenerateColumn {
                col: j,
                attempts: 0,
            });
        }
        columns.push(col);
    }
    if renormalize {
        for (j, col) in columns.iter_mut().enumerate() {
            norm_factors[j] = normalize_column(col);
        }
    }
    Ok(SparsifiedMatrix {
        matrix: ColumnSparseMatrix::from_columns(base.rows(), columns),
        mask: Some(mask.clone()),
        ones_per_col: mask.ones_per_col(),
        norm_factors,
        renormalized: renormalize,
    })
}

const RESAMPLE_ATTEMPTS: usize = 100;

/// Mask + apply with the degenerate-column policy: when a masked column loses
/// all its nonzeros (possible only for bases that contain zeros), that
/// column's mask is redrawn with fresh sub-seeds, up to 100 attempts.
pub fn sparsify(
    base: &DenseMatrix,
    t: usize,
    seed: Seed,
    renormalize: bool,
) -> Result<SparsifiedMatrix> {
    let (n, cols) = (base.rows(), base.cols());
    if t < 1 || t > n {
        return Err(Error::Param(format!(
            "sparsify ones-per-column must lie in 1..={n}, got {t}"
        )));
    }
    let mut columns: Vec<Vec<(u32, f64)>> = Vec::with_capacity(cols);
    let mut support = Vec::with_capacity(t * cols);
    let mut norm_factors = vec![1.0; cols];
    let mut scratch = Vec::with_capacity(n);
    for j in 0..cols {
        let mut rng = seed.derive(StreamTag::Mask, j as u64).rng();
        let mut picked = rng.sample_indices(n, t, &mut scratch);
        let mut col = masked_column(base, &picked, j);
        if renormalize && col.is_empty() {
            let mut attempts = 0;
            let resample_seed = seed.derive(StreamTag::Resample, j as u64);
            while col.is_empty() && attempts < RESAMPLE_ATTEMPTS {
                let mut rng = resample_seed.derive(StreamTag::Resample, attempts as u64).rng();
                picked = rng.sample_indices(n, t, &mut scratch);
                col = masked_column(base, &picked, j);
                attempts += 1;
            }
            if col.is_empty() {
                return Err(Error::DegenerateColumn { col: j, attempts });
            }
        }
        support.extend_from_slice(&picked);
        if renormalize {
            norm_factors[j] = normalize_column(&mut col);
        }
        columns.push(col);
    }
    let mask = Mask {
        rows: n,
        ones_per_col: t,
        support,
        cols,
    };
    Ok(SparsifiedMatrix {
        matrix: ColumnSparseMatrix::from_columns(n, columns),
        mask: Some(mask),
        ones_per_col: t,
        norm_factors,
        renormalized: renormalize,
    })
}

fn masked_column(base: &DenseMatrix, rows: &[u32], j: usize) -> Vec<(u32, f64)> {
    let mut col = Vec::with_capacity(rows.len());
    for &r in rows {
        let v = base.get(r as usize, j);
        if v.abs() > 0.0 {
            col.push((r, v));
        }
    }
    col
}

/// Scale a column to unit l2-norm; returns the factor applied.
fn normalize_column(col: &mut [(u32, f64)]) -> f64 {
    let norm: f64 = col.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    let factor = 1.0 / norm;
    for (_, v) in col.iter_mut() {
        *v *= factor;
    }
    factor
}

/// delta(inner) / delta(outer).
pub fn relative_density(inner: &SparsifiedMatrix, outer: &DenseMatrix) -> Result<f64> {
    let outer_density = crate::matgen::density(outer);
    if outer_density == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(inner.density() / outer_density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen::{generate, EnsembleKind, EnsembleSpec};

    #[test]
    fn full_mask_is_all_ones() {
        let m = make_mask(4, 3, 4, Seed::new(0)).unwrap();
        for j in 0..3 {
            assert_eq!(m.col(j), &[0, 1, 2, 3]);
        }
        assert_eq!(m.density(), 1.0);
    }

    #[test]
    fn mask_column_sums_are_exact() {
        let m = make_mask(200, 2000, 10, Seed::new(5)).unwrap();
        for j in 0..2000 {
            assert_eq!(m.col_sum(j), 10);
            let col = m.col(j);
            assert!(col.windows(2).all(|w| w[0] < w[1]));
            assert!(col.iter().all(|&r| r < 200));
        }
        assert!((m.density() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn mask_rejects_bad_t() {
        assert!(make_mask(4, 3, 0, Seed::new(0)).is_err());
        assert!(make_mask(4, 3, 5, Seed::new(0)).is_err());
    }

    #[test]
    fn mask_supports_are_uniform() {
        // n=5, t=2: all C(5,2)=10 supports should appear with frequency
        // 1/10 +/- 0.02 over 1e5 single-column draws; also run a chi-square
        // goodness-of-fit against the uniform at alpha = 0.001 (df 9).
        let draws = 100_000usize;
        let mut counts = std::collections::HashMap::new();
        for i in 0..draws {
            let m = make_mask(5, 1, 2, Seed::new(i as u64)).unwrap();
            let key = (m.col(0)[0], m.col(0)[1]);
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        let expected = draws as f64 / 10.0;
        let mut chi2 = 0.0;
        for (&key, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() <= 0.02, "support {key:?}: freq {freq}");
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }

    #[test]
    fn apply_uniform_column_normalizes_to_half() {
        let j4 = generate(&EnsembleSpec::new(EnsembleKind::AllOnes, 4, 3), Seed::new(0)).unwrap();
        let mask = make_mask(4, 3, 4, Seed::new(1)).unwrap();
        let sp = apply(&j4, &mask, true).unwrap();
        for j in 0..3 {
            let (_, vals) = sp.matrix().col(j);
            for v in vals {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn apply_345_column() {
        let base = DenseMatrix::from_vec(2, 2, vec![3.0, 0.0, 4.0, 5.0]);
        let mask = make_mask(2, 2, 2, Seed::new(0)).unwrap();
        let sp = apply(&base, &mask, true).unwrap();
        let dense = sp.matrix().to_dense();
        assert!((dense.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((dense.get(1, 0) - 0.8).abs() < 1e-15);
        assert_eq!(dense.get(0, 1), 0.0);
        assert!((dense.get(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn paper_scale_density_and_norms() {
        let spec = EnsembleSpec::new(EnsembleKind::Uniform01, 200, 2000);
        let base = generate(&spec, Seed::new(33)).unwrap();
        let sp = sparsify(&base, 10, Seed::new(34), true).unwrap();
        assert!((sp.density() - 0.05).abs() < 1e-15);
        let mut worst: f64 = 0.0;
        for j in 0..2000 {
            worst = worst.max((sp.matrix().col_norm(j) - 1.0).abs());
        }
        assert!(worst <= 1e-12, "worst norm deviation {worst}");
    }

    #[test]
    fn identity_sparsification_is_bit_exact() {
        let spec = EnsembleSpec::new(EnsembleKind::Uniform01, 8, 12);
        let base = generate(&spec, Seed::new(70)).unwrap();
        let sp = sparsify(&base, 8, Seed::new(71), false).unwrap();
        assert_eq!(sp.matrix().to_dense(), base);
    }

    #[test]
    fn subset_property_and_value_fidelity() {
        let spec = EnsembleSpec::bernoulli(0.5, 30, 50);
        let base = generate(&spec, Seed::new(90)).unwrap();
        let mask = make_mask(30, 50, 7, Seed::new(91)).unwrap();
        let sp = apply(&base, &mask, false).unwrap();
        for j in 0..50 {
            let (idx, vals) = sp.matrix().col(j);
            for (r, v) in idx.iter().zip(vals) {
                assert!(mask.col(j).contains(r));
                assert_eq!(*v, base.get(*r as usize, j), "value altered at ({r},{j})");
            }
        }
    }

    #[test]
    fn composition_pattern_is_subset_of_both_masks() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 40, 60);
        let base = generate(&spec, Seed::new(8)).unwrap();
        let m1 = make_mask(40, 60, 20, Seed::new(9)).unwrap();
        let first = apply(&base, &m1, false).unwrap();
        let m2 = make_mask(40, 60, 8, Seed::new(10)).unwrap();
        let second = apply(&first.matrix().to_dense(), &m2, false).unwrap();
        for j in 0..60 {
            let (idx, _) = second.matrix().col(j);
            assert!(idx.len() <= 8.min(20));
            for r in idx {
                assert!(m1.col(j).contains(r));
                assert!(m2.col(j).contains(r));
            }
        }
    }

    #[test]
    fn composition_density_matches_product() {
        // Sp(Sp(Phi,0.5),0.1) should have the density of a member of
        // Sp(Phi,0.05): relative density 0.05 up to hypergeometric noise.
        let spec = EnsembleSpec::new(EnsembleKind::Uniform01, 200, 2000);
        let base = generate(&spec, Seed::new(50)).unwrap();
        let first = sparsify(&base, 100, Seed::new(51), false).unwrap();
        let second = sparsify(&first.matrix().to_dense(), 20, Seed::new(52), false).unwrap();
        let rd = relative_density(&second, &base).unwrap();
        assert!((rd - 0.05).abs() <= 0.005, "relative density {rd}");
    }

    #[test]
    fn bernoulli_base_masked_relative_density() {
        let spec = EnsembleSpec::bernoulli(0.5, 200, 2000);
        let base = generate(&spec, Seed::new(60)).unwrap();
        let sp = sparsify(&base, 10, Seed::new(61), false).unwrap();
        let rd = relative_density(&sp, &base).unwrap();
        assert!((rd - 0.05).abs() <= 0.005, "relative density {rd}");
    }

    #[test]
    fn relative_density_of_zero_base_is_undefined() {
        let zero = DenseMatrix::zeros(3, 3);
        let spec = EnsembleSpec::new(EnsembleKind::AllOnes, 3, 3);
        let ones = generate(&spec, Seed::new(0)).unwrap();
        let sp = sparsify(&ones, 2, Seed::new(1), false).unwrap();
        assert!(matches!(
            relative_density(&sp, &zero),
            Err(Error::UndefinedRatio)
        ));
    }

    #[test]
    fn degenerate_column_resampled_or_reported() {
        // A base with one all-zero column can never be normalized there.
        let mut base = generate(&EnsembleSpec::new(EnsembleKind::AllOnes, 5, 3), Seed::new(0))
            .unwrap();
        for i in 0..5 {
            base.set(i, 1, 0.0);
        }
        match sparsify(&base, 2, Seed::new(3), true) {
            Err(Error::DegenerateColumn { col: 1, attempts }) => {
                assert_eq!(attempts, 100);
            }
            other => panic!("expected degenerate column 1, got {other:?}"),
        }
        // With a single zero per column, resampling must succeed.
        let mut base2 =
            generate(&EnsembleSpec::new(EnsembleKind::AllOnes, 2, 4), Seed::new(0)).unwrap();
        for j in 0..4 {
            base2.set(0, j, 0.0);
        }
        let sp = sparsify(&base2, 1, Seed::new(4), true).unwrap();
        for j in 0..4 {
            assert_eq!(sp.matrix().col_nnz(j), 1);
        }
    }

    #[test]
    fn text_format_round_trips() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 30, 20);
        let base = generate(&spec, Seed::new(12)).unwrap();
        let sp = sparsify(&base, 6, Seed::new(13), true).unwrap();
        let mut buf = Vec::new();
        sp.write_text(&mut buf).unwrap();
        let back = SparsifiedMatrix::read_text(&buf[..]).unwrap();
        assert_eq!(back.matrix(), sp.matrix());
        assert_eq!(back.ones_per_col(), 6);
    }
}
