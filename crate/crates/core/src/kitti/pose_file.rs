//! KITTI ground-truth pose files: one pose per line, 12 reals forming the
//! row-major 3x4 matrix `[R | t]`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, orthonormality_error, PoseSE3};

/// Rotations violating orthonormality by more than this are projected onto
/// the nearest rotation. Files written by [`format_pose_line`] stay below it,
/// so they are read back unchanged.
pub const REPROJECT_THRESHOLD: f64 = 1e-7;

/// Violations above this are reported as warnings.
pub const WARN_THRESHOLD: f64 = 1e-4;

/// C-style `%.12e`: thirteen significant digits, exponent with sign and at
/// least two digits. Positions of several hundred meters keep sub-nanometer
/// resolution.
pub fn format_real(v: f64) -> String {
    let s = format!("{v:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn format_pose_line(pose: &PoseSE3) -> String {
    pose.to_row_major_3x4()
        .iter()
        .map(|&v| format_real(v))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn format_poses(poses: &[PoseSE3]) -> String {
    let mut s = String::new();
    for p in poses {
        let _ = writeln!(s, "{}", format_pose_line(p));
    }
    s
}

pub fn write_pose_file(path: &Path, poses: &[PoseSE3]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, format_poses(poses)).map_err(|e| Error::io(path, e))
}

/// Parses pose lines; `origin` is used in diagnostics.
pub fn parse_poses(text: &str, origin: &Path) -> Result<Vec<PoseSE3>> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let vals = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("invalid number {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 12 {
            return Err(parse_err(format!("expected 12 values, found {}", vals.len())));
        }
        let mut rotation = Matrix3::new(
            vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
        );
        let translation = Vector3::new(vals[3], vals[7], vals[11]);
        let err = orthonormality_error(&rotation);
        if err > REPROJECT_THRESHOLD {
            if err > WARN_THRESHOLD {
                log::warn!(
                    "{}:{}: rotation off by {err:.2e}; projecting onto nearest rotation",
                    origin.display(),
                    i + 1
                );
            }
            if rotation.determinant() <= 0.0 {
                return Err(parse_err("rotation block has non-positive determinant".into()));
            }
            rotation = nearest_rotation(&rotation);
        }
        poses.push(PoseSE3 {
            rotation,
            translation,
        });
    }
    if poses.is_empty() {
        return Err(Error::Format {
            path: origin.to_path_buf(),
            msg: "pose file contains no poses".into(),
        });
    }
    Ok(poses)
}

pub fn load_pose_file(path: &Path) -> Result<Vec<PoseSE3>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, path)
}
