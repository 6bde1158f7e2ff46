//! Random sensing-matrix ensembles.
//!
//! Five constructions: absolute-value normal, uniform on (0,1), Bernoulli
//! {0,1} with expected value p, partial circulant (rows sampled without
//! replacement from a circulant whose generator row is standard normal), and
//! the all-ones matrix J. Generation is pure in `(spec, seed)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Seed, StreamTag};

/// Entry distribution of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// |z| for z standard normal.
    AbsNormal,
    /// Uniform on the open interval (0,1).
    Uniform01,
    /// {0,1} with P(1) = p.
    Bernoulli,
    /// n distinct rows of an N x N circulant with standard normal generator.
    PartialCirculant,
    /// The all-ones matrix J.
    AllOnes,
}

/// Shape and distribution of one matrix ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    /// Bernoulli success probability; ignored by the other kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Row count.
    pub n: usize,
    /// Column count.
    #[serde(rename = "N")]
    pub cols: usize,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, n: usize, cols: usize) -> Self {
        EnsembleSpec {
            kind,
            p: None,
            n,
            cols,
        }
    }

    pub fn bernoulli(p: f64, n: usize, cols: usize) -> Self {
        EnsembleSpec {
            kind: EnsembleKind::Bernoulli,
            p: Some(p),
            n,
            cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.cols == 0 {
            return Err(Error::Param(format!(
                "matrix dimensions must be positive, got {}x{}",
                self.n, self.cols
            )));
        }
        match self.kind {
            EnsembleKind::Bernoulli => {
                let p = self
                    .p
                    .ok_or_else(|| Error::Param("bernoulli ensemble requires p".into()))?;
                if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                    return Err(Error::Param(format!("bernoulli p must lie in [0,1], got {p}")));
                }
            }
            EnsembleKind::PartialCirculant => {
                if self.n > self.cols {
                    return Err(Error::Param(format!(
                        "partial circulant needs n <= N to sample distinct rows, got n={} N={}",
                        self.n, self.cols
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Short lowercase label used in CSV output.
    pub fn label(&self) -> String {
        match self.kind {
            EnsembleKind::AbsNormal => "abs_normal".into(),
            EnsembleKind::Uniform01 => "uniform01".into(),
            EnsembleKind::Bernoulli => format!("bernoulli_{}", self.p.unwrap_or(f64::NAN)),
            EnsembleKind::PartialCirculant => "partial_circulant".into(),
            EnsembleKind::AllOnes => "all_ones".into(),
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        DenseMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Write as text: a "rows cols" header line, then one space-separated
    /// line per row with round-trip precision.
    pub fn write_text<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row = self.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parse the format emitted by [`write_text`](Self::write_text).
    pub fn read_text<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let mut parts = header.split_whitespace();
        let rows: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("matrix header missing row count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad row count: {e}")))?;
        let cols: usize = parts
            .next()
            .ok_or_else(|| Error::Parse("matrix header missing column count".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("bad column count: {e}")))?;
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {i}")))??;
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| Error::Parse(format!("row {i}: bad value {tok:?}: {e}")))?;
                data.push(v);
            }
            if data.len() != (i + 1) * cols {
                return Err(Error::Parse(format!(
                    "row {i} has {} values, expected {cols}",
                    data.len() - i * cols
                )));
            }
        }
        Ok(DenseMatrix::from_vec(rows, cols, data))
    }

    /// y = M x.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matvec: matrix is {}x{}, vector has length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut y = vec![0.0; self.rows];
        for (i, yi) in y.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *yi = acc;
        }
        Ok(y)
    }
}

/// Draw one matrix from the ensemble. Deterministic in `(spec, seed)`;
/// entries are filled in row-major order from the `Matrix` stream.
pub fn generate(spec: &EnsembleSpec, seed: Seed) -> Result<DenseMatrix> {
    spec.validate()?;
    let (n, cols) = (spec.n, spec.cols);
    let mut rng = seed.derive(StreamTag::Matrix, 0).rng();
    let mut m = DenseMatrix::zeros(n, cols);
    match spec.kind {
        EnsembleKind::AbsNormal => {
            for v in m.data.iter_mut() {
                *v = rng.normal().abs();
            }
        }
        EnsembleKind::Uniform01 => {
            for v in m.data.iter_mut() {
                *v = rng.open01();
            }
        }
        EnsembleKind::Bernoulli => {
            let p = spec.p.unwrap();
            for v in m.data.iter_mut() {
                *v = if rng.uniform() < p { 1.0 } else { 0.0 };
            }
        }
        EnsembleKind::AllOnes => {
            m.data.fill(1.0);
        }
        EnsembleKind::PartialCirculant => {
            let mut gen_rng = seed.derive(StreamTag::Circulant, 0).rng();
            let generator: Vec<f64> = (0..cols).map(|_| gen_rng.normal()).collect();
            let mut row_rng = seed.derive(StreamTag::RowSample, 0).rng();
            let mut scratch = Vec::new();
            let picked = row_rng.sample_indices(cols, n, &mut scratch);
            // Row r of the circulant is the generator shifted right by r:
            // C[r][j] = g[(j - r) mod N].
            for (i, &r) in picked.iter().enumerate() {
                let r = r as usize;
                for j in 0..cols {
                    let src = (j + cols - r) % cols;
                    m.set(i, j, generator[src]);
                }
            }
        }
    }
    Ok(m)
}

/// Fraction of entries that are nonzero.
pub fn density(m: &DenseMatrix) -> f64 {
    let nnz = m.data().iter().filter(|v| v.abs() > 0.0).count();
    nnz as f64 / (m.rows() * m.cols()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_is_j() {
        let spec = EnsembleSpec::new(EnsembleKind::AllOnes, 2, 3);
        let m = generate(&spec, Seed::new(0)).unwrap();
        assert_eq!(m.data(), &[1.0; 6]);
    }

    #[test]
    fn bernoulli_p1_is_all_ones() {
        let spec = EnsembleSpec::bernoulli(1.0, 2, 2);
        let m = generate(&spec, Seed::new(11)).unwrap();
        assert_eq!(m.data(), &[1.0; 4]);
    }

    #[test]
    fn bernoulli_density_concentrates() {
        for &p in &[0.05, 0.5] {
            let spec = EnsembleSpec::bernoulli(p, 200, 2000);
            let m = generate(&spec, Seed::new(314)).unwrap();
            let d = density(&m);
            assert!((d - p).abs() <= 0.02, "p={p} density={d}");
        }
    }

    #[test]
    fn continuous_ensembles_are_fully_dense() {
        for kind in [EnsembleKind::AbsNormal, EnsembleKind::Uniform01] {
            let spec = EnsembleSpec::new(kind, 50, 80);
            let m = generate(&spec, Seed::new(9)).unwrap();
            assert_eq!(density(&m), 1.0);
        }
    }

    #[test]
    fn density_counts_zeros() {
        let j = generate(&EnsembleSpec::new(EnsembleKind::AllOnes, 2, 3), Seed::new(0)).unwrap();
        assert_eq!(density(&j), 1.0);
        assert_eq!(density(&DenseMatrix::zeros(3, 3)), 0.0);
        let m = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(density(&m), 0.5);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 20, 30);
        let a = generate(&spec, Seed::new(77)).unwrap();
        let b = generate(&spec, Seed::new(77)).unwrap();
        assert_eq!(a.data(), b.data());
        let c = generate(&spec, Seed::new(78)).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn abs_normal_entries_are_nonnegative() {
        let spec = EnsembleSpec::new(EnsembleKind::AbsNormal, 30, 40);
        let m = generate(&spec, Seed::new(5)).unwrap();
        assert!(m.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn partial_circulant_rows_are_shifts_of_one_generator() {
        let spec = EnsembleSpec::new(EnsembleKind::PartialCirculant, 3, 5);
        let m = generate(&spec, Seed::new(123)).unwrap();
        // Recover a candidate generator from row 0 by trying all 5 shifts,
        // then demand every row match some shift of it.
        let n_cols = 5;
        let row0: Vec<f64> = (0..n_cols).map(|j| m.get(0, j)).collect();
        for i in 0..3 {
            let row: Vec<f64> = (0..n_cols).map(|j| m.get(i, j)).collect();
            let mut matched = false;
            for shift in 0..n_cols {
                let shifted: Vec<f64> =
                    (0..n_cols).map(|j| row0[(j + shift) % n_cols]).collect();
                if shifted == row {
                    matched = true;
                    break;
                }
            }
            assert!(matched, "row {i} is not a cyclic shift of row 0");
        }
    }

    #[test]
    fn partial_circulant_samples_distinct_rows() {
        let spec = EnsembleSpec::new(EnsembleKind::PartialCirculant, 40, 40);
        let m = generate(&spec, Seed::new(321)).unwrap();
        for i in 0..40 {
            for j in (i + 1)..40 {
                let same = (0..40).all(|c| m.get(i, c) == m.get(j, c));
                assert!(!same, "rows {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&EnsembleSpec::bernoulli(1.5, 2, 2), Seed::new(0)).is_err());
        assert!(generate(
            &EnsembleSpec::new(EnsembleKind::PartialCirculant, 5, 3),
            Seed::new(0)
        )
        .is_err());
        assert!(generate(&EnsembleSpec::new(EnsembleKind::AllOnes, 0, 3), Seed::new(0)).is_err());
    }

    #[test]
    fn ensemble_spec_round_trips_through_json() {
        let spec = EnsembleSpec::bernoulli(0.5, 200, 2000);
        let js = serde_json::to_string(&spec).unwrap();
        let back: EnsembleSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(spec, back);
        let parsed: EnsembleSpec =
            serde_json::from_str(r#"{"kind":"abs_normal","n":200,"N":2000}"#).unwrap();
        assert_eq!(parsed.kind, EnsembleKind::AbsNormal);
        assert!(serde_json::from_str::<EnsembleSpec>(
            r#"{"kind":"abs_normal","n":200,"N":2000,"bogus":1}"#
        )
        .is_err());
    }
}
