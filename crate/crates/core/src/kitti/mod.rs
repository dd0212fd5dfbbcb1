//! KITTI odometry data: sequence layout, pose files, frame preprocessing and
//! segmentation into training samples.
//!
//! Layout: `<root>/sequences/<NN>/<camera>/%06d.png` with ground truth in
//! `<root>/poses/<NN>.txt`. A flat image directory with an optional pose file
//! is also accepted.

mod image;
mod pose_file;

pub use self::image::{
    bilinear_resize, compute_mean_rgb, load_image, make_pair, preprocess_image, save_png, unstack_pair, MeanRgb,
};
pub use pose_file::{
    format_pose_line, format_poses, format_real, load_pose_file, parse_poses, write_pose_file, REPROJECT_THRESHOLD,
    WARN_THRESHOLD,
};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{relative_motions, Pose6, PoseSE3};
use crate::network::stack_pairs;
use crate::tensor::{Rng, Tensor};

pub const DEFAULT_FRAME_RATE: f64 = 10.0;
pub const DEFAULT_CAMERA: &str = "image_2";

/// One image sequence with optional absolute ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub id: String,
    pub frames: Vec<PathBuf>,
    pub poses: Option<Vec<PoseSE3>>,
    pub frame_rate: f64,
}

pub fn sequence_dir(root: &Path, id: &str, camera: &str) -> PathBuf {
    root.join("sequences").join(id).join(camera)
}

pub fn pose_path(root: &Path, id: &str) -> PathBuf {
    root.join("poses").join(format!("{id}.txt"))
}

/// PNG files of `dir` ordered by their numeric stem.
fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::Data(format!("{}: frame name is not a number", path.display())))?;
        frames.push((index, path));
    }
    frames.sort();
    if let Some(w) = frames.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Data(format!("duplicate frame index {} in {}", w[0].0, dir.display())));
    }
    if frames.is_empty() {
        return Err(Error::Data(format!("{}: no PNG frames", dir.display())));
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

impl SequenceDataset {
    /// Opens `<root>/sequences/<id>/<camera>`. Ground truth is read from
    /// `<root>/poses/<id>.txt` when `require_poses` is set or the file exists.
    pub fn open_kitti(root: &Path, id: &str, camera: &str, require_poses: bool) -> Result<Self> {
        let images = sequence_dir(root, id, camera);
        let poses = pose_path(root, id);
        let poses = (require_poses || poses.exists()).then_some(poses);
        Self::open_dir(id, &images, poses.as_deref())
    }

    pub fn open_dir(id: &str, images: &Path, pose_file: Option<&Path>) -> Result<Self> {
        let frames = list_frames(images)?;
        let poses = pose_file.map(load_pose_file).transpose()?;
        let ds = SequenceDataset {
            id: id.to_string(),
            frames,
            poses,
            frame_rate: DEFAULT_FRAME_RATE,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.poses {
            if p.len() != self.frames.len() {
                return Err(Error::Data(format!(
                    "sequence {}: {} frames but {} poses",
                    self.id,
                    self.frames.len(),
                    p.len()
                )));
            }
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::Data(format!("sequence {}: frame rate must be positive", self.id)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn ground_truth(&self) -> Result<&[PoseSE3]> {
        self.poses
            .as_deref()
            .ok_or_else(|| Error::Data(format!("sequence {} has no ground truth", self.id)))
    }

    /// Decodes every frame and preprocesses it to `target` extents.
    pub fn load_frames(&self, mean: &MeanRgb, target: (usize, usize)) -> Result<Vec<Tensor>> {
        self.frames
            .iter()
            .map(|p| preprocess_image(&load_image(p)?, mean, target))
            .collect()
    }
}

/// Mean colour of every frame of `datasets`, decoding one image at a time.
pub fn dataset_mean_rgb(datasets: &[SequenceDataset]) -> Result<MeanRgb> {
    let mut sums = [0.0; 3];
    let mut pixels = 0usize;
    for ds in datasets {
        for path in &ds.frames {
            let img = load_image(path)?;
            let n = img.shape()[1] * img.shape()[2];
            let m = compute_mean_rgb([&img])?;
            for c in 0..3 {
                sums[c] += m.0[c] * n as f64;
            }
            pixels += n;
        }
    }
    if pixels == 0 {
        return Err(Error::Data("no training images".into()));
    }
    Ok(MeanRgb(sums.map(|s| s / pixels as f64)))
}

/// A training sample: `len` consecutive frame pairs with their relative
/// motions.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub sequence: String,
    pub start: usize,
    /// `[len, 6, H, W]`
    pub pairs: Tensor,
    pub targets: Vec<Pose6>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}@{}+{}", self.sequence, self.start, self.len())
    }
}

/// All consecutive pairs of a preprocessed frame list, `[N - 1, 6, H, W]`.
pub fn sequence_pairs(frames: &[Tensor]) -> Result<Tensor> {
    if frames.len() < 2 {
        return Err(Error::Data("need at least two frames".into()));
    }
    let pairs = frames
        .windows(2)
        .map(|w| make_pair(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    stack_pairs(&pairs)
}

/// Windows start every `stride` frames; each window's length is drawn
/// uniformly from `[min_len, max_len]`, capped by the frames left. A window
/// of length `L` at `s` covers frames `s..=s + L`. Sequences shorter than
/// `min_len + 1` frames produce no segments.
pub fn segment_dataset(
    ds: &SequenceDataset,
    frames: &[Tensor],
    min_len: usize,
    max_len: usize,
    stride: usize,
    rng: &mut Rng,
) -> Result<Vec<Segment>> {
    if min_len == 0 || min_len > max_len || stride == 0 {
        return Err(Error::Config(format!(
            "segmentation needs 1 <= min_len <= max_len and stride >= 1 (got {min_len}, {max_len}, {stride})"
        )));
    }
    let gt = ds.ground_truth()?;
    if frames.len() != gt.len() {
        return Err(Error::Data(format!(
            "sequence {}: {} frames but {} poses",
            ds.id,
            frames.len(),
            gt.len()
        )));
    }
    let motions = relative_motions(gt)?;
    let mut out = Vec::new();
    let mut start = 0;
    while start + min_len < frames.len() {
        let longest = max_len.min(frames.len() - 1 - start);
        let len = rng.range_inclusive(min_len, longest);
        out.push(Segment {
            sequence: ds.id.clone(),
            start,
            pairs: sequence_pairs(&frames[start..=start + len])?,
            targets: motions[start..start + len].to_vec(),
        });
        start += stride;
    }
    Ok(out)
}
