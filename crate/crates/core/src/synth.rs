//! Synthetic sequences with exact ground truth.
//!
//! A camera glides over a procedurally textured ground plane. Each frame is
//! an orthographic top-down view of the plane around the camera: image
//! columns follow the camera x axis and image rows run against its z axis, so
//! forward motion scrolls the texture downwards and yaw rotates it about the
//! image center. Poses use the KITTI camera convention (yaw about y).

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{rot_y, PoseSE3};
use crate::kitti::{pose_path, save_png, sequence_dir, write_pose_file, DEFAULT_CAMERA};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionProfile {
    Straight,
    Turn,
    /// Four moving frames, then two stationary ones, repeating.
    StopAndGo,
}

impl std::str::FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(MotionProfile::Straight),
            "turn" => Ok(MotionProfile::Turn),
            "stop_and_go" | "stop-and-go" => Ok(MotionProfile::StopAndGo),
            other => Err(Error::Config(format!(
                "unknown motion profile {other:?} (expected straight, turn or stop_and_go)"
            ))),
        }
    }
}

impl MotionProfile {
    pub fn name(self) -> &'static str {
        match self {
            MotionProfile::Straight => "straight",
            MotionProfile::Turn => "turn",
            MotionProfile::StopAndGo => "stop_and_go",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub profile: MotionProfile,
    /// Meters per frame while moving.
    pub speed: f64,
    /// Radians per frame for the turning profile.
    pub yaw_rate: f64,
    pub pixels_per_meter: f64,
    /// Seeds the ground texture.
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 64,
            width: 64,
            frames: 24,
            profile: MotionProfile::Straight,
            speed: 1.0,
            yaw_rate: 0.05,
            pixels_per_meter: 4.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Wave {
    kx: f64,
    kz: f64,
    phase: f64,
    amp: f64,
}

/// Sum of random plane waves per colour channel, centered on mid-gray.
#[derive(Clone, Debug)]
pub struct GroundTexture {
    channels: [Vec<Wave>; 3],
}

impl GroundTexture {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed).split(0);
        let mut channel = || {
            (0..8)
                .map(|_| {
                    let wavelength = rng.uniform_range(1.5, 8.0);
                    let dir = rng.uniform_range(0.0, std::f64::consts::TAU);
                    let k = std::f64::consts::TAU / wavelength;
                    Wave {
                        kx: k * dir.cos(),
                        kz: k * dir.sin(),
                        phase: rng.uniform_range(0.0, std::f64::consts::TAU),
                        amp: rng.uniform_range(6.0, 14.0),
                    }
                })
                .collect()
        };
        GroundTexture {
            channels: [channel(), channel(), channel()],
        }
    }

    /// Intensity at ground point `(x, z)`, 0–255, unquantized.
    pub fn sample(&self, channel: usize, x: f64, z: f64) -> f64 {
        let v: f64 = self.channels[channel]
            .iter()
            .map(|w| w.amp * (w.kx * x + w.kz * z + w.phase).sin())
            .sum();
        (128.0 + v).clamp(0.0, 255.0)
    }
}

/// Ground point seen by pixel `(row, col)` in the camera's own frame.
pub fn pixel_to_camera(row: f64, col: f64, cfg: &SynthConfig) -> (f64, f64) {
    let x = (col + 0.5 - cfg.width as f64 / 2.0) / cfg.pixels_per_meter;
    let z = (cfg.height as f64 / 2.0 - row - 0.5) / cfg.pixels_per_meter;
    (x, z)
}

/// Inverse of [`pixel_to_camera`].
pub fn camera_to_pixel(x: f64, z: f64, cfg: &SynthConfig) -> (f64, f64) {
    let col = x * cfg.pixels_per_meter + cfg.width as f64 / 2.0 - 0.5;
    let row = cfg.height as f64 / 2.0 - 0.5 - z * cfg.pixels_per_meter;
    (row, col)
}

/// Renders the view from `pose`, quantized to whole intensity levels.
pub fn render(texture: &GroundTexture, pose: &PoseSE3, cfg: &SynthConfig) -> Tensor {
    let (h, w) = (cfg.height, cfg.width);
    let mut data = vec![0.0; 3 * h * w];
    for r in 0..h {
        for c in 0..w {
            let (x, z) = pixel_to_camera(r as f64, c as f64, cfg);
            let world = pose.transform_point(&Vector3::new(x, 0.0, z));
            for ch in 0..3 {
                data[ch * h * w + r * w + c] = texture.sample(ch, world.x, world.z).round();
            }
        }
    }
    Tensor::new(vec![3, h, w], data).expect("finite texture")
}

/// Motion from frame `k - 1` to frame `k` (`k >= 1`).
pub fn step_motion(cfg: &SynthConfig, k: usize) -> PoseSE3 {
    let (v, yaw) = match cfg.profile {
        MotionProfile::Straight => (cfg.speed, 0.0),
        MotionProfile::Turn => (cfg.speed, cfg.yaw_rate),
        MotionProfile::StopAndGo => (if (k - 1) % 6 < 4 { cfg.speed } else { 0.0 }, 0.0),
    };
    PoseSE3 {
        rotation: rot_y(yaw),
        translation: Vector3::new(0.0, 0.0, v),
    }
}

pub fn trajectory(cfg: &SynthConfig) -> Vec<PoseSE3> {
    let mut poses = Vec::with_capacity(cfg.frames);
    let mut current = PoseSE3::identity();
    for k in 0..cfg.frames {
        if k > 0 {
            current = current.compose(&step_motion(cfg, k));
        }
        poses.push(current);
    }
    poses
}

#[derive(Clone, Debug)]
pub struct SynthSequence {
    pub poses: Vec<PoseSE3>,
    pub images: Vec<Tensor>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthSequence> {
    if cfg.frames == 0 || cfg.height == 0 || cfg.width == 0 {
        return Err(Error::Config("synthetic sequence needs positive frames and extents".into()));
    }
    if !(cfg.pixels_per_meter > 0.0) || !cfg.speed.is_finite() || !cfg.yaw_rate.is_finite() {
        return Err(Error::Config("synthetic motion parameters must be finite and pixels_per_meter positive".into()));
    }
    let texture = GroundTexture::new(cfg.seed);
    let poses = trajectory(cfg);
    let images = poses.iter().map(|p| render(&texture, p, cfg)).collect();
    Ok(SynthSequence { poses, images })
}

/// Writes a sequence in KITTI layout under `root`.
pub fn write_sequence(root: &Path, id: &str, seq: &SynthSequence) -> Result<()> {
    let dir = sequence_dir(root, id, DEFAULT_CAMERA);
    for (k, img) in seq.images.iter().enumerate() {
        save_png(&dir.join(format!("{k:06}.png")), img)?;
    }
    write_pose_file(&pose_path(root, id), &seq.poses)
}
