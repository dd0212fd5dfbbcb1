//! KITTI odometry drift metrics over 100–800 m subsequences, speed-binned
//! errors, report tables and trajectory export.

mod report;

pub use report::{
    parse_error_table, read_error_table, summary_text, write_report, SequenceSummary, LENGTH_TABLE_HEADER,
    SPEED_TABLE_HEADER,
};

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{compose_trajectory, relative_pose, rotation_angle, Pose6, PoseSE3};
use crate::kitti::{sequence_pairs, write_pose_file};
use crate::network::{LstmState, VoModel};
use crate::plot::{LinePlot, Series};
use crate::tensor::Tensor;

pub const SUBSEQUENCE_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];
pub const DEFAULT_START_STRIDE: usize = 10;
pub const DEFAULT_SPEED_BIN: f64 = 2.0;

/// Absolute poses with timestamps `k / frame_rate`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<PoseSE3>,
    pub frame_rate: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<PoseSE3>, frame_rate: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("trajectory", "no poses"));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::invalid("trajectory", format!("frame rate must be positive, got {frame_rate}")));
        }
        Ok(Trajectory { poses, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.poses.len()).map(|k| k as f64 / self.frame_rate).collect()
    }

    pub fn path_length(&self) -> f64 {
        *cumulative_distances(self).last().expect("non-empty")
    }
}

/// Distance travelled along the trajectory up to each frame.
pub fn cumulative_distances(traj: &Trajectory) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len());
    let mut d = 0.0;
    out.push(0.0);
    for w in traj.poses.windows(2) {
        d += (w[1].translation - w[0].translation).norm();
        out.push(d);
    }
    out
}

/// Drift over one subsequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentError {
    pub start: usize,
    pub length: f64,
    /// Translation error as a fraction of `length`.
    pub t_err: f64,
    /// Rotation error in radians per meter.
    pub r_err: f64,
    /// Meters per second over the subsequence.
    pub speed: f64,
}

/// Errors of every subsequence starting each `start_stride` frames, for each
/// target length. The endpoint is the first frame whose travelled distance
/// from the start reaches the length; starts without one are skipped.
pub fn segment_errors(
    gt: &Trajectory,
    est: &Trajectory,
    lengths: &[f64],
    start_stride: usize,
) -> Result<Vec<SegmentError>> {
    if gt.len() != est.len() {
        return Err(Error::Data(format!(
            "ground truth has {} poses but estimate has {}",
            gt.len(),
            est.len()
        )));
    }
    if start_stride == 0 {
        return Err(Error::invalid("segment_errors", "start stride must be positive"));
    }
    let dist = cumulative_distances(gt);
    let mut rows = Vec::new();
    for start in (0..gt.len()).step_by(start_stride) {
        for &length in lengths {
            let Some(end) = (start..gt.len()).find(|&j| dist[j] - dist[start] >= length) else {
                continue;
            };
            let gt_rel = relative_pose(&gt.poses[start], &gt.poses[end]);
            let est_rel = relative_pose(&est.poses[start], &est.poses[end]);
            let e = relative_pose(&gt_rel, &est_rel);
            let secs = (end - start) as f64 / gt.frame_rate;
            rows.push(SegmentError {
                start,
                length,
                t_err: e.translation.norm() / length,
                r_err: rotation_angle(&e.rotation) / length,
                speed: (dist[end] - dist[start]) / secs,
            });
        }
    }
    Ok(rows)
}

/// Mean translation and rotation error of a group of rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorPair {
    /// Fraction of distance travelled.
    pub t_rel: f64,
    /// Radians per meter.
    pub r_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// `(length in m, mean errors)`, ascending.
    pub per_length: Vec<(f64, ErrorPair)>,
    /// `(bin lower edge in m/s, mean errors)`, ascending.
    pub per_speed: Vec<(f64, ErrorPair)>,
    /// Mean over all rows, in percent.
    pub t_rel_percent: f64,
    /// Mean over all rows, in degrees per 100 m.
    pub r_rel_deg_per_100m: f64,
}

pub fn rad_per_m_to_deg_per_100m(r: f64) -> f64 {
    r.to_degrees() * 100.0
}

fn row_order(a: &SegmentError, b: &SegmentError) -> Ordering {
    a.t_err
        .total_cmp(&b.t_err)
        .then(a.r_err.total_cmp(&b.r_err))
        .then(a.length.total_cmp(&b.length))
        .then(a.speed.total_cmp(&b.speed))
}

// Means over a canonically sorted copy, so the result does not depend on
// row order.
fn mean_pair(rows: &[SegmentError]) -> ErrorPair {
    let n = rows.len() as f64;
    ErrorPair {
        t_rel: rows.iter().map(|r| r.t_err).sum::<f64>() / n,
        r_rel: rows.iter().map(|r| r.r_err).sum::<f64>() / n,
    }
}

fn grouped(sorted: &[SegmentError], key: impl Fn(&SegmentError) -> f64) -> Vec<(f64, ErrorPair)> {
    let mut keys: Vec<f64> = sorted.iter().map(&key).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    keys.into_iter()
        .map(|k| {
            let members: Vec<SegmentError> = sorted.iter().filter(|r| key(r) == k).copied().collect();
            (k, mean_pair(&members))
        })
        .collect()
}

/// Per-length and per-speed-bin means plus overall drift in percent and
/// degrees per 100 m.
pub fn aggregate(rows: &[SegmentError], speed_bin: f64) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::invalid("aggregate", "no subsequence errors to aggregate"));
    }
    if !(speed_bin > 0.0) {
        return Err(Error::invalid("aggregate", format!("speed bin width must be positive, got {speed_bin}")));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(row_order);
    let overall = mean_pair(&sorted);
    Ok(EvalReport {
        per_length: grouped(&sorted, |r| r.length),
        per_speed: grouped(&sorted, |r| (r.speed / speed_bin).floor() * speed_bin),
        t_rel_percent: overall.t_rel * 100.0,
        r_rel_deg_per_100m: rad_per_m_to_deg_per_100m(overall.r_rel),
    })
}

/// Runs the model over consecutive frame pairs, `chunk` pairs at a time
/// (0 means all at once) with recurrent state carried across chunks, and
/// chains the relative estimates from the identity. No rescaling or
/// alignment is applied.
pub fn infer_trajectory(model: &VoModel, frames: &[Tensor], frame_rate: f64, chunk: usize) -> Result<Trajectory> {
    if frames.len() < 2 {
        return Err(Error::Data(format!("need at least two frames, got {}", frames.len())));
    }
    let pairs = frames.len() - 1;
    let chunk = if chunk == 0 { pairs } else { chunk };
    let mut states: Option<[LstmState; 2]> = None;
    let mut motions: Vec<Pose6> = Vec::with_capacity(pairs);
    let mut start = 0;
    while start < pairs {
        let end = (start + chunk).min(pairs);
        let batch = sequence_pairs(&frames[start..=end])?;
        let (est, next) = model.predict(&batch, states.as_ref())?;
        motions.extend(est);
        states = Some(next);
        start = end;
    }
    Trajectory::new(compose_trajectory(&motions, &PoseSE3::identity()), frame_rate)
}

pub fn export_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    write_pose_file(path, &traj.poses)
}

/// Ground-plane (x, z) paths of each trajectory.
pub fn trajectory_plot(title: &str, trajs: &[(&str, &Trajectory)]) -> LinePlot {
    LinePlot {
        title: title.into(),
        x_label: "x (m)".into(),
        y_label: "z (m)".into(),
        log_y: false,
        equal_aspect: true,
        series: trajs
            .iter()
            .map(|(label, t)| Series {
                label: label.to_string(),
                points: t.poses.iter().map(|p| (p.translation.x, p.translation.z)).collect(),
            })
            .collect(),
    }
}

pub fn emit_trajectory_plot(title: &str, trajs: &[(&str, &Trajectory)], path: &Path) -> Result<()> {
    trajectory_plot(title, trajs).write(path)
}
