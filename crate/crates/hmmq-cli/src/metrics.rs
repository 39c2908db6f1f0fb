//! Metrics log: a CSV with one header row, floats at 17 significant digits,
//! each row written and flushed as one unit so the file stays parseable
//! after abnormal termination.
//!
//! Columns:
//!
//! ```text
//! step,loglik_ma,sigma_theta,max_q_hmm,max_q_full,max_q_partial,
//! eval_reward_hmm,eval_reward_full,eval_reward_partial
//! ```
//!
//! The three evaluation columns are empty except on evaluation checkpoints.
//! Wall-clock timing is deliberately kept out of this file (rows must be
//! byte-identical across reruns of the same seed); the runner writes timing
//! lines to a separate sidecar.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const METRICS_HEADER: &str = "step,loglik_ma,sigma_theta,max_q_hmm,max_q_full,max_q_partial,eval_reward_hmm,eval_reward_full,eval_reward_partial";

/// Mean rewards of the three policy classes at one evaluation checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRewards {
    pub belief: f64,
    pub full: f64,
    pub partial: f64,
}

/// One metrics record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    /// Trailing moving average of the per-step log-likelihood.
    pub loglik_ma: f64,
    pub sigma_theta: f64,
    pub max_q_hmm: f64,
    pub max_q_full: f64,
    pub max_q_partial: f64,
    pub eval: Option<EvalRewards>,
    /// Seconds since run start; sidecar only, never serialized to the CSV.
    pub wall_clock_s: Option<f64>,
}

fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl MetricsRow {
    fn to_csv_line(&self) -> String {
        let eval_cols = match &self.eval {
            Some(e) => format!(
                "{},{},{}",
                fmt_float(e.belief),
                fmt_float(e.full),
                fmt_float(e.partial)
            ),
            None => ",,".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{}\n",
            self.step,
            fmt_float(self.loglik_ma),
            fmt_float(self.sigma_theta),
            fmt_float(self.max_q_hmm),
            fmt_float(self.max_q_full),
            fmt_float(self.max_q_partial),
            eval_cols
        )
    }

    fn parse_csv_line(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(format!("expected 9 fields, found {}", fields.len()));
        }
        let num = |s: &str, what: &str| -> std::result::Result<f64, String> {
            s.parse::<f64>().map_err(|e| format!("bad {what} {s:?}: {e}"))
        };
        let eval = match (fields[6], fields[7], fields[8]) {
            ("", "", "") => None,
            (b, f, p) => Some(EvalRewards {
                belief: num(b, "eval_reward_hmm")?,
                full: num(f, "eval_reward_full")?,
                partial: num(p, "eval_reward_partial")?,
            }),
        };
        Ok(MetricsRow {
            step: fields[0]
                .parse()
                .map_err(|e| format!("bad step {:?}: {e}", fields[0]))?,
            loglik_ma: num(fields[1], "loglik_ma")?,
            sigma_theta: num(fields[2], "sigma_theta")?,
            max_q_hmm: num(fields[3], "max_q_hmm")?,
            max_q_full: num(fields[4], "max_q_full")?,
            max_q_partial: num(fields[5], "max_q_partial")?,
            eval,
            wall_clock_s: None,
        })
    }
}

/// Serialized writer: one `write` syscall plus flush per row.
pub struct MetricsWriter {
    file: File,
    path: PathBuf,
}

impl MetricsWriter {
    /// Creates the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(Error::io(path))?;
        file.write_all(format!("{METRICS_HEADER}\n").as_bytes())
            .map_err(Error::io(path))?;
        file.flush().map_err(Error::io(path))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    /// Opens an existing file for appending rows.
    pub fn open_append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(Error::io(path))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        self.file
            .write_all(row.to_csv_line().as_bytes())
            .map_err(Error::io(&self.path))?;
        self.file.flush().map_err(Error::io(&self.path))
    }
}

/// Reads a whole metrics file; malformed lines fail with their number.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if idx == 0 {
            if line != METRICS_HEADER {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = MetricsRow::parse_csv_line(&line).map_err(|message| Error::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        })?;
        if let Some(last) = rows.last() {
            let last: &MetricsRow = last;
            if row.step <= last.step {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("step {} not increasing after {}", row.step, last.step),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(step: u64, eval: bool) -> MetricsRow {
        MetricsRow {
            step,
            loglik_ma: -3.25,
            sigma_theta: 1.0437,
            max_q_hmm: 210.125,
            max_q_full: 268.5,
            max_q_partial: 28.0 + step as f64,
            eval: eval.then_some(EvalRewards {
                belief: 6.5,
                full: 12.875,
                partial: 2.25,
            }),
            wall_clock_s: Some(1.5),
        }
    }

    #[test]
    fn rows_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut writer = MetricsWriter::create(&path).unwrap();
        let rows = vec![sample_row(100, false), sample_row(200, true)];
        for r in &rows {
            writer.write_row(r).unwrap();
        }
        let read = read_metrics(&path).unwrap();
        assert_eq!(read.len(), 2);
        for (got, want) in read.iter().zip(&rows) {
            assert_eq!(got.step, want.step);
            assert_eq!(got.loglik_ma.to_bits(), want.loglik_ma.to_bits());
            assert_eq!(got.eval, want.eval);
            assert_eq!(got.wall_clock_s, None, "wall clock must not round trip");
        }
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        std::fs::write(&path, format!("{METRICS_HEADER}\n1,2,3\n")).unwrap();
        match read_metrics(&path) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_steps_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let mut writer = MetricsWriter::create(&path).unwrap();
        writer.write_row(&sample_row(100, false)).unwrap();
        writer.write_row(&sample_row(100, false)).unwrap();
        assert!(matches!(
            read_metrics(&path),
            Err(Error::Malformed { line: 3, .. })
        ));
    }

    #[test]
    fn float_format_carries_17_significant_digits() {
        let x = std::f64::consts::PI;
        let s = fmt_float(x);
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        assert!(s.starts_with("3.1415926535897931"), "{s}");
    }
}
