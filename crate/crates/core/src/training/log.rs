use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plot::{LinePlot, Series};

pub const LOSS_TABLE_HEADER: &str = "epoch,train_loss,val_loss,seconds";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

/// Per-epoch losses and the epoch with the lowest validation loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    /// Appends a record; the best marker moves only on strict improvement.
    pub fn push(&mut self, rec: EpochRecord) -> bool {
        let improved = match self.best() {
            Some(b) => rec.val_loss < b.val_loss,
            None => true,
        };
        self.epochs.push(rec);
        if improved {
            self.best_epoch = Some(rec.epoch);
        }
        improved
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        let e = self.best_epoch?;
        self.epochs.iter().find(|r| r.epoch == e)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Comma-separated table. Values use the shortest representation that
    /// parses back to the same number.
    pub fn to_table(&self) -> String {
        let mut s = format!("{LOSS_TABLE_HEADER}\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.seconds);
        }
        s
    }

    /// Parses [`to_table`](Self::to_table) output; the best marker is
    /// recomputed from the validation column.
    pub fn parse_table(text: &str, origin: &Path) -> Result<TrainLog> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LOSS_TABLE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: 1,
                    msg: format!("expected header {LOSS_TABLE_HEADER:?}"),
                })
            }
        }
        let mut log = TrainLog::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: msg.to_string(),
            };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(err("expected 4 columns"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("invalid number"));
            log.push(EpochRecord {
                epoch: cols[0].parse().map_err(|_| err("invalid epoch"))?,
                train_loss: num(cols[1])?,
                val_loss: num(cols[2])?,
                seconds: num(cols[3])?,
            });
        }
        Ok(log)
    }

    pub fn read_table(path: &Path) -> Result<TrainLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(&text, path)
    }

    /// Training and validation curves, log-scaled when every loss is positive.
    pub fn curves(&self) -> LinePlot {
        let series = |label: &str, f: fn(&EpochRecord) -> f64| Series {
            label: label.into(),
            points: self.epochs.iter().map(|r| (r.epoch as f64, f(r))).collect(),
        };
        let log_y = self.epochs.iter().all(|r| r.train_loss > 0.0 && r.val_loss > 0.0);
        LinePlot {
            title: "Training and validation loss".into(),
            x_label: "epoch".into(),
            y_label: if log_y { "loss (log10)".into() } else { "loss".into() },
            log_y,
            equal_aspect: false,
            series: vec![series("training", |r| r.train_loss), series("validation", |r| r.val_loss)],
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.svg` into `dir`.
pub fn emit_loss_curves(log: &TrainLog, dir: &Path, stem: &str) -> Result<()> {
    if log.epochs.is_empty() {
        return Err(Error::invalid("emit_loss_curves", "empty training log"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = dir.join(format!("{stem}.csv"));
    std::fs::write(&table, log.to_table()).map_err(|e| Error::io(&table, e))?;
    log.curves().write(&dir.join(format!("{stem}.svg")))
}
