//! Training metrics rows and their CSV serialization.
//!
//! Floats are written with Rust's shortest-roundtrip formatting so a rerun
//! with identical inputs produces a byte-identical file.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "step,mean_total_reward,group_reward_std,mean_completion_length,eval_accuracy,eval_soft_accuracy,mean_d_t";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    /// Mean per-completion total reward over this step's rollouts.
    pub mean_total_reward: f64,
    /// Mean within-group reward standard deviation.
    pub group_reward_std: f64,
    pub mean_completion_length: f64,
    /// Greedy-decode exact-match accuracy on the eval split, in percent.
    pub eval_accuracy: f64,
    /// Greedy-decode soft accuracy on the eval split, in percent.
    pub eval_soft_accuracy: f64,
    /// Mean token divergence D_t over this step's rollout grids.
    pub mean_d_t: f64,
}

impl MetricsRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.step,
            self.mean_total_reward,
            self.group_reward_std,
            self.mean_completion_length,
            self.eval_accuracy,
            self.eval_soft_accuracy,
            self.mean_d_t
        )
    }

    fn from_csv_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Checkpoint(format!(
                "metrics row has {} fields, expected 7",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Checkpoint(format!("bad metrics value {s:?}: {e}")))
        };
        Ok(Self {
            step: fields[0]
                .parse()
                .map_err(|e| Error::Checkpoint(format!("bad step {:?}: {e}", fields[0])))?,
            mean_total_reward: num(fields[1])?,
            group_reward_std: num(fields[2])?,
            mean_completion_length: num(fields[3])?,
            eval_accuracy: num(fields[4])?,
            eval_soft_accuracy: num(fields[5])?,
            mean_d_t: num(fields[6])?,
        })
    }
}

pub fn render_metrics(rows: &[MetricsRow]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    Ok(out)
}

pub fn save_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write!(f, "{}", render_metrics(rows)?)?;
    Ok(())
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Checkpoint("empty metrics file".into()))??;
    if header.trim() != CSV_HEADER {
        return Err(Error::Checkpoint(format!("unknown metrics header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(MetricsRow::from_csv_line(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> MetricsRow {
        MetricsRow {
            step,
            mean_total_reward: 0.55,
            group_reward_std: 1.0 / 3.0,
            mean_completion_length: 7.25,
            eval_accuracy: 43.75,
            eval_soft_accuracy: 62.5,
            mean_d_t: 0.1 + 0.2, // deliberately non-representable exactly
        }
    }

    #[test]
    fn roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![row(0), row(20), row(40)];
        save_metrics(&path, &rows).unwrap();
        let back = load_metrics(&path).unwrap();
        assert_eq!(back, rows);
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a.mean_d_t.to_bits(), b.mean_d_t.to_bits());
        }
    }

    #[test]
    fn identical_rows_serialize_identically() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        save_metrics(&a, &[row(1)]).unwrap();
        save_metrics(&b, &[row(1)]).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "step,foo\n1,2\n").unwrap();
        assert!(load_metrics(&path).is_err());
    }

    #[test]
    fn short_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, format!("{CSV_HEADER}\n1,2,3\n")).unwrap();
        assert!(load_metrics(&path).is_err());
    }
}
