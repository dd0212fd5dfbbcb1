use std::fmt::Write as _;
use std::path::Path;

use super::{ErrorPair, EvalReport};
use crate::error::{Error, Result};

pub const LENGTH_TABLE_HEADER: &str = "length,t_rel,r_rel";
pub const SPEED_TABLE_HEADER: &str = "speed,t_rel,r_rel";

/// One line of the human-readable summary.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSummary {
    pub id: String,
    pub frames: usize,
    pub path_length: f64,
    /// Distance between final estimated and true positions, meters.
    pub endpoint_error: f64,
    /// `None` when the sequence is shorter than the shortest subsequence.
    pub t_rel_percent: Option<f64>,
    pub r_rel_deg_per_100m: Option<f64>,
}

impl SequenceSummary {
    pub fn endpoint_percent(&self) -> f64 {
        if self.path_length > 0.0 {
            100.0 * self.endpoint_error / self.path_length
        } else {
            0.0
        }
    }
}

fn table(header: &str, rows: &[(f64, ErrorPair)]) -> String {
    let mut s = format!("{header}\n");
    for (k, e) in rows {
        let _ = writeln!(s, "{k},{},{}", e.t_rel, e.r_rel);
    }
    s
}

/// Parses a `length,...` or `speed,...` table written by [`write_report`].
pub fn parse_error_table(text: &str, header: &str, origin: &Path) -> Result<Vec<(f64, ErrorPair)>> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some(header) {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            msg: format!("expected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let err = || Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: "expected three numbers".into(),
        };
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| err()))
            .collect::<Result<Vec<_>>>()?;
        let [k, t_rel, r_rel] = vals[..] else { return Err(err()) };
        out.push((k, ErrorPair { t_rel, r_rel }));
    }
    Ok(out)
}

pub fn read_error_table(path: &Path, header: &str) -> Result<Vec<(f64, ErrorPair)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_error_table(&text, header, path)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Fixed-width table: one row per sequence and a mean row.
pub fn summary_text(rows: &[SequenceSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>10} {:>11} {:>11} {:>9} {:>15}",
        "sequence", "frames", "path_m", "endpoint_m", "endpoint_%", "t_rel_%", "r_rel_deg/100m"
    );
    let line = |s: &mut String, id: &str, frames: String, r: (f64, f64, f64, Option<f64>, Option<f64>)| {
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>10.3} {:>11.4} {:>11.3} {:>9} {:>15}",
            id,
            frames,
            r.0,
            r.1,
            r.2,
            opt(r.3, 3),
            opt(r.4, 3)
        );
    };
    for r in rows {
        line(
            &mut s,
            &r.id,
            r.frames.to_string(),
            (r.path_length, r.endpoint_error, r.endpoint_percent(), r.t_rel_percent, r.r_rel_deg_per_100m),
        );
    }
    if !rows.is_empty() {
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&SequenceSummary) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mean_opt = |f: &dyn Fn(&SequenceSummary) -> Option<f64>| {
            let vals: Vec<f64> = rows.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        line(
            &mut s,
            "mean",
            String::new(),
            (
                mean(&|r| r.path_length),
                mean(&|r| r.endpoint_error),
                mean(&|r| r.endpoint_percent()),
                mean_opt(&|r| r.t_rel_percent),
                mean_opt(&|r| r.r_rel_deg_per_100m),
            ),
        );
    }
    s
}

/// Writes `lengths.csv`, `speeds.csv` and `summary.txt` into `dir`. Without
/// a report (no subsequence long enough) the tables hold only headers.
pub fn write_report(dir: &Path, report: Option<&EvalReport>, summaries: &[SequenceSummary]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (lengths, speeds) = match report {
        Some(r) => (r.per_length.as_slice(), r.per_speed.as_slice()),
        None => (&[][..], &[][..]),
    };
    let files = [
        ("lengths.csv", table(LENGTH_TABLE_HEADER, lengths)),
        ("speeds.csv", table(SPEED_TABLE_HEADER, speeds)),
        ("summary.txt", summary_text(summaries)),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
