//! Pivot summary and threshold CSVs into tab-separated series files, one
//! column per series, ready for external plotting.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// Success rate vs sparsity, one series per (algorithm, density).
    RateVsK,
    /// Mean recovery wall time vs sparsity, one series per (algorithm, density).
    TimeVsK,
    /// Estimated threshold vs density, one series per algorithm.
    ThresholdVsDensity,
    /// Estimated threshold vs row count, one series per (algorithm, density).
    ThresholdVsRows,
    /// Estimated threshold vs column count, one series per (algorithm, density).
    ThresholdVsCols,
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate-vs-k" => Ok(ReportKind::RateVsK),
            "time-vs-k" => Ok(ReportKind::TimeVsK),
            "threshold-vs-density" => Ok(ReportKind::ThresholdVsDensity),
            "threshold-vs-rows" => Ok(ReportKind::ThresholdVsRows),
            "threshold-vs-cols" => Ok(ReportKind::ThresholdVsCols),
            other => Err(Error::Config(format!(
                "unknown report kind {other:?}; expected rate-vs-k, time-vs-k, \
                 threshold-vs-density, threshold-vs-rows, or threshold-vs-cols"
            ))),
        }
    }
}

impl ReportKind {
    pub fn x_label(self) -> &'static str {
        match self {
            ReportKind::RateVsK | ReportKind::TimeVsK => "k",
            ReportKind::ThresholdVsDensity => "density",
            ReportKind::ThresholdVsRows => "n",
            ReportKind::ThresholdVsCols => "N",
        }
    }
}

/// (x, series, value) triples collected from the input CSVs.
struct Points {
    triples: Vec<(f64, String, f64)>,
}

fn field<'a>(
    headers: &csv::StringRecord,
    row: &'a csv::StringRecord,
    name: &str,
) -> Result<&'a str> {
    let idx = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("input is missing column {name:?}")))?;
    row.get(idx)
        .ok_or_else(|| Error::Parse(format!("short row: no value for {name:?}")))
}

fn parse_f64(s: &str, name: &str) -> Result<f64> {
    s.parse()
        .map_err(|e| Error::Parse(format!("bad {name} value {s:?}: {e}")))
}

fn collect_points(kind: ReportKind, inputs: &[impl AsRef<Path>]) -> Result<Points> {
    let mut triples = Vec::new();
    for input in inputs {
        let mut reader = csv::Reader::from_path(input.as_ref())?;
        let headers = reader.headers()?.clone();
        for row in reader.records() {
            let row = row?;
            let algo = field(&headers, &row, "algorithm")?.to_string();
            let density = parse_f64(field(&headers, &row, "density")?, "density")?;
            let (x, series, value) = match kind {
                ReportKind::RateVsK => (
                    parse_f64(field(&headers, &row, "k")?, "k")?,
                    format!("{algo}_d{density}"),
                    parse_f64(field(&headers, &row, "success_rate")?, "success_rate")?,
                ),
                ReportKind::TimeVsK => (
                    parse_f64(field(&headers, &row, "k")?, "k")?,
                    format!("{algo}_d{density}"),
                    parse_f64(
                        field(&headers, &row, "mean_wall_time_s")?,
                        "mean_wall_time_s",
                    )?,
                ),
                ReportKind::ThresholdVsDensity => (
                    density,
                    algo,
                    parse_f64(field(&headers, &row, "r_hat")?, "r_hat")?,
                ),
                ReportKind::ThresholdVsRows => (
                    parse_f64(field(&headers, &row, "n")?, "n")?,
                    format!("{algo}_d{density}"),
                    parse_f64(field(&headers, &row, "r_hat")?, "r_hat")?,
                ),
                ReportKind::ThresholdVsCols => (
                    parse_f64(field(&headers, &row, "N")?, "N")?,
                    format!("{algo}_d{density}"),
                    parse_f64(field(&headers, &row, "r_hat")?, "r_hat")?,
                ),
            };
            triples.push((x, series, value));
        }
    }
    Ok(Points { triples })
}

/// Build one series file. Returns the number of data rows written; zero
/// rows still produces a valid (header-only) file.
pub fn report(kind: ReportKind, inputs: &[impl AsRef<Path>], out: &Path) -> Result<usize> {
    let points = collect_points(kind, inputs)?;
    let mut xs: Vec<f64> = Vec::new();
    for &(x, _, _) in &points.triples {
        if !xs.iter().any(|&v| v == x) {
            xs.push(x);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let series: BTreeSet<String> = points
        .triples
        .iter()
        .map(|(_, s, _)| s.clone())
        .collect();

    let mut f = std::fs::File::create(out)?;
    write!(f, "{}", kind.x_label())?;
    for s in &series {
        write!(f, "\t{s}")?;
    }
    writeln!(f)?;
    for &x in &xs {
        write!(f, "{x}")?;
        for s in &series {
            let val = points
                .triples
                .iter()
                .find(|(px, ps, _)| *px == x && ps == s)
                .map(|(_, _, v)| *v);
            match val {
                Some(v) => write!(f, "\t{v}")?,
                None => write!(f, "\t")?,
            }
        }
        writeln!(f)?;
    }
    Ok(xs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::records::{write_summary_csv, write_thresholds_csv, SummaryRow, ThresholdRun};
    use crate::recover::Algo;

    fn summary_fixture(dir: &Path) -> std::path::PathBuf {
        let rows: Vec<SummaryRow> = [(1usize, 1.0f64, 0.9f64), (2, 1.0, 0.7), (1, 0.1, 1.0)]
            .iter()
            .map(|&(k, density, rate)| SummaryRow {
                experiment: "exp-x".into(),
                ensemble: "abs_normal".into(),
                n: 10,
                cols: 20,
                density,
                algorithm: Algo::Omp,
                k,
                trials: 10,
                successes: (rate * 10.0) as usize,
                success_rate: rate,
                mean_wall_time_s: 0.5 * k as f64,
                mean_iterations: k as f64,
            })
            .collect();
        let path = dir.join("summary.csv");
        write_summary_csv(&path, &rows).unwrap();
        path
    }

    #[test]
    fn rate_series_pivot() {
        let dir = tempfile::tempdir().unwrap();
        let input = summary_fixture(dir.path());
        let out = dir.path().join("series.tsv");
        let rows = report(ReportKind::RateVsK, &[&input], &out).unwrap();
        assert_eq!(rows, 2);
        let text = std::fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k\tomp_d0.1\tomp_d1");
        assert_eq!(lines.next().unwrap(), "1\t1\t0.9");
        assert_eq!(lines.next().unwrap(), "2\t\t0.7");
    }

    #[test]
    fn threshold_series_pivot() {
        let dir = tempfile::tempdir().unwrap();
        let runs: Vec<ThresholdRun> = [(1.0f64, 39usize), (0.05, 46)]
            .iter()
            .map(|&(density, r_hat)| ThresholdRun {
                experiment: "exp-y".into(),
                ensemble: "abs_normal".into(),
                n: 200,
                cols: 2000,
                density,
                algorithm: Algo::Lp,
                t: 0.98,
                r_hat,
                k0: r_hat + 1,
                k1: r_hat + 1,
                k2: r_hat + 1,
                k1_eq_k2: true,
                ceiling: 200,
                ceiling_reached: false,
                trace: Vec::new(),
            })
            .collect();
        let input = dir.path().join("thresholds.csv");
        write_thresholds_csv(&input, &runs).unwrap();
        let out = dir.path().join("fig2.tsv");
        report(ReportKind::ThresholdVsDensity, &[&input], &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text, "density\tlp\n0.05\t46\n1\t39\n");
    }

    #[test]
    fn empty_input_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("summary.csv");
        write_summary_csv(&input, &[]).unwrap();
        let out = dir.path().join("empty.tsv");
        let rows = report(ReportKind::RateVsK, &[&input], &out).unwrap();
        assert_eq!(rows, 0);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text, "k\n");
    }
}
