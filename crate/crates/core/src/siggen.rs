//! k-sparse unit-norm test signals.
//!
//! Supports are uniform over all C(N, k) size-k subsets; nonzero values are
//! drawn i.i.d. from the chosen positive distribution and the whole vector is
//! scaled to unit l2-norm, so every signal has exactly k strictly positive
//! entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Seed, StreamTag};

/// Distribution of the nonzero entries (both are positive almost surely).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalDist {
    /// Uniform on the open interval (0,1).
    Uniform01,
    /// |z| for z standard normal.
    AbsNormal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    /// Ambient dimension.
    pub n: usize,
    /// Number of nonzero entries.
    pub k: usize,
    pub dist: SignalDist,
}

impl SignalSpec {
    pub fn new(n: usize, k: usize, dist: SignalDist) -> Self {
        SignalSpec { n, k, dist }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k > self.n {
            return Err(Error::Param(format!(
                "signal sparsity must lie in 1..={}, got {}",
                self.n, self.k
            )));
        }
        Ok(())
    }
}

/// Exactly-k-sparse vector with unit l2-norm and positive nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    n: usize,
    support: Vec<u32>,
    values: Vec<f64>,
}

impl SparseSignal {
    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    /// Sorted nonzero positions.
    pub fn support(&self) -> &[u32] {
        &self.support
    }

    /// Values aligned with [`support`](Self::support).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&j, &v) in self.support.iter().zip(&self.values) {
            x[j as usize] = v;
        }
        x
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sum of |x_i - xhat_i| over all coordinates.
    pub fn l1_distance(&self, xhat: &[f64]) -> Result<f64> {
        if xhat.len() != self.n {
            return Err(Error::Dimension(format!(
                "l1_distance: signal has length {}, estimate has length {}",
                self.n,
                xhat.len()
            )));
        }
        let mut acc = 0.0;
        let mut cursor = 0usize;
        for (j, &xh) in xhat.iter().enumerate() {
            let truth = if cursor < self.support.len() && self.support[cursor] as usize == j {
                let v = self.values[cursor];
                cursor += 1;
                v
            } else {
                0.0
            };
            acc += (truth - xh).abs();
        }
        Ok(acc)
    }
}

/// Sum of |a_i - b_i| for two dense vectors of equal length.
pub fn l1_distance_dense(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "l1_distance: lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Draw one signal. Deterministic in `(spec, seed)`.
pub fn sample_signal(spec: &SignalSpec, seed: Seed) -> Result<SparseSignal> {
    spec.validate()?;
    let mut rng = seed.derive(StreamTag::Signal, 0).rng();
    let mut scratch = Vec::with_capacity(spec.n);
    let support = rng.sample_indices(spec.n, spec.k, &mut scratch);
    let mut values: Vec<f64> = (0..spec.k)
        .map(|_| match spec.dist {
            SignalDist::Uniform01 => rng.open01(),
            SignalDist::AbsNormal => loop {
                // |z| = 0 has probability zero but would violate positivity.
                let z = rng.normal().abs();
                if z > 0.0 {
                    break z;
                }
            },
        })
        .collect();
    let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in values.iter_mut() {
        *v /= norm;
    }
    Ok(SparseSignal {
        n: spec.n,
        support,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_support_signal() {
        let s = sample_signal(&SignalSpec::new(5, 5, SignalDist::Uniform01), Seed::new(1))
            .unwrap();
        assert_eq!(s.k(), 5);
        assert!(s.values().iter().all(|&v| v > 0.0));
        assert!((s.l2_norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn single_coordinate_signal_is_one() {
        for dist in [SignalDist::Uniform01, SignalDist::AbsNormal] {
            let s = sample_signal(&SignalSpec::new(1, 1, dist), Seed::new(9)).unwrap();
            assert_eq!(s.support(), &[0]);
            assert!((s.values()[0] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparsity_is_exact_and_values_positive() {
        for seed in 0..50 {
            let s = sample_signal(
                &SignalSpec::new(100, 17, SignalDist::AbsNormal),
                Seed::new(seed),
            )
            .unwrap();
            assert_eq!(s.k(), 17);
            assert!(s.values().iter().all(|&v| v > 0.0));
            assert!((s.l2_norm() - 1.0).abs() <= 1e-12);
            assert!(s.support().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn supports_are_uniform() {
        // N=4, k=2: the 6 supports should each appear with frequency
        // 1/6 +/- 0.01 over 1e5 draws (chi-square df 5, alpha 0.001).
        let draws = 100_000usize;
        let mut counts = std::collections::HashMap::new();
        for i in 0..draws {
            let s = sample_signal(
                &SignalSpec::new(4, 2, SignalDist::Uniform01),
                Seed::new(7_000_000 + i as u64),
            )
            .unwrap();
            let key = (s.support()[0], s.support()[1]);
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let mut chi2 = 0.0;
        for (&key, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - 1.0 / 6.0).abs() <= 0.01,
                "support {key:?}: freq {freq}"
            );
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 20.52, "chi2 {chi2}");
    }

    #[test]
    fn determinism_per_seed() {
        let spec = SignalSpec::new(50, 5, SignalDist::Uniform01);
        let a = sample_signal(&spec, Seed::new(123)).unwrap();
        let b = sample_signal(&spec, Seed::new(123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l1_distance_cases() {
        let s = sample_signal(&SignalSpec::new(2, 1, SignalDist::Uniform01), Seed::new(4))
            .unwrap();
        let dense = s.to_dense();
        assert_eq!(s.l1_distance(&dense).unwrap(), 0.0);

        assert_eq!(
            l1_distance_dense(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            2.0
        );
        let d = l1_distance_dense(&[0.6, 0.8, 0.0], &[0.6, 0.8, 1e-9]).unwrap();
        assert!((d - 1e-9).abs() < 1e-22);
        assert!(d <= 1e-6, "counts as success at the 1e-6 criterion");
        assert!(l1_distance_dense(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bad_sparsity_rejected() {
        assert!(sample_signal(&SignalSpec::new(4, 5, SignalDist::Uniform01), Seed::new(0))
            .is_err());
        assert!(sample_signal(&SignalSpec::new(4, 0, SignalDist::Uniform01), Seed::new(0))
            .is_err());
    }
}
