use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rcnn_vo_core::evaluation::{DEFAULT_SPEED_BIN, DEFAULT_START_STRIDE};
use rcnn_vo_core::kitti::{DEFAULT_CAMERA, DEFAULT_FRAME_RATE};
use rcnn_vo_core::network::{DEFAULT_HIDDEN, DOWNSAMPLING};
use rcnn_vo_core::synth::{MotionProfile, SynthConfig};
use rcnn_vo_core::{KeyValues, TrainConfig};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Keys shared by every subcommand, in addition to [`TrainConfig::KEYS`].
pub const RUN_KEYS: [&str; 26] = [
    "output_dir",
    "run_label",
    "dataset_root",
    "camera",
    "frame_rate",
    "image_height",
    "image_width",
    "train_sequences",
    "val_sequences",
    "test_sequences",
    "sequences",
    "hidden",
    "segment_min_len",
    "segment_max_len",
    "segment_stride",
    "checkpoint",
    "infer_chunk",
    "estimate_dir",
    "start_stride",
    "speed_bin",
    "synth_sequences",
    "synth_frames",
    "synth_speed",
    "synth_yaw_rate",
    "synth_pixels_per_meter",
    "synth_seed",
];

pub fn allowed_keys() -> Vec<&'static str> {
    RUN_KEYS.iter().chain(TrainConfig::KEYS.iter()).copied().collect()
}

/// Everything a subcommand may read, parsed and checked up front.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// The effective key-value set after overrides.
    pub kv: KeyValues,
    pub output_dir: PathBuf,
    pub run_label: Option<String>,
    pub dataset_root: Option<PathBuf>,
    pub camera: String,
    pub frame_rate: f64,
    /// `None` when unset, so inference can defer to the checkpoint.
    pub image_extents: Option<(usize, usize)>,
    pub train_sequences: Vec<String>,
    pub val_sequences: Vec<String>,
    pub test_sequences: Vec<String>,
    pub sequences: Vec<String>,
    pub hidden: usize,
    pub segment_min_len: usize,
    pub segment_max_len: usize,
    pub segment_stride: usize,
    pub checkpoint: Option<PathBuf>,
    pub infer_chunk: usize,
    pub estimate_dir: Option<PathBuf>,
    pub start_stride: usize,
    pub speed_bin: f64,
    pub synth_sequences: Vec<(String, MotionProfile)>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

fn id_list(kv: &KeyValues, key: &str) -> Vec<String> {
    kv.get(key)
        .map(|v| {
            v.split([',', ' '])
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default()
}

fn disjoint(a: (&str, &[String]), b: (&str, &[String])) -> Result<(), CliError> {
    let left: BTreeSet<&String> = a.1.iter().collect();
    if let Some(shared) = b.1.iter().find(|id| left.contains(id)) {
        return Err(CliError::config(format!(
            "sequence {shared} appears in both {} and {}",
            a.0, b.0
        )));
    }
    Ok(())
}

fn synth_list(raw: &str) -> Result<Vec<(String, MotionProfile)>, CliError> {
    let mut out: Vec<(String, MotionProfile)> = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, profile) = item.split_once(':').ok_or_else(|| {
            CliError::config(format!("synth_sequences entry {item:?} is not `id:profile`"))
        })?;
        let id = id.trim().to_string();
        if id.is_empty() || out.iter().any(|(seen, _)| *seen == id) {
            return Err(CliError::config(format!("synth_sequences has an empty or repeated id in {item:?}")));
        }
        out.push((id, profile.trim().parse().map_err(CliError::from_core)?));
    }
    Ok(out)
}

impl RunConfig {
    /// Reads `path`, applies `key=value` overrides and parses the result.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let mut kv = KeyValues::read(path).map_err(|e| CliError::config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects key=value, got {o:?}")))?;
            kv.set(k.trim(), v.trim());
        }
        Self::from_kv(kv)
    }

    pub fn from_kv(kv: KeyValues) -> Result<Self, CliError> {
        kv.reject_unknown(&allowed_keys()).map_err(CliError::from_core)?;
        let get = |k: &str| kv.get(k).filter(|v| !v.is_empty());
        let num = |k: &str| -> Result<Option<f64>, CliError> { kv.parse_value(k).map_err(CliError::from_core) };
        let count = |k: &str| -> Result<Option<usize>, CliError> { kv.parse_value(k).map_err(CliError::from_core) };

        let image_extents = match (count("image_height")?, count("image_width")?) {
            (None, None) => None,
            (Some(h), Some(w)) => Some((h, w)),
            _ => return Err(CliError::config("image_height and image_width must be set together")),
        };
        if let Some((h, w)) = image_extents {
            if h == 0 || w == 0 || h % DOWNSAMPLING != 0 || w % DOWNSAMPLING != 0 {
                return Err(CliError::config(format!(
                    "image extents {h}x{w} must be positive multiples of {DOWNSAMPLING}"
                )));
            }
        }

        let d = SynthConfig::default();
        let (sh, sw) = image_extents.unwrap_or((d.height, d.width));
        let synth = SynthConfig {
            height: sh,
            width: sw,
            frames: count("synth_frames")?.unwrap_or(d.frames),
            profile: d.profile,
            speed: num("synth_speed")?.unwrap_or(d.speed),
            yaw_rate: num("synth_yaw_rate")?.unwrap_or(d.yaw_rate),
            pixels_per_meter: num("synth_pixels_per_meter")?.unwrap_or(d.pixels_per_meter),
            seed: kv.parse_value("synth_seed").map_err(CliError::from_core)?.unwrap_or(d.seed),
        };

        let cfg = RunConfig {
            output_dir: PathBuf::from(get("output_dir").unwrap_or("runs")),
            run_label: get("run_label").map(String::from),
            dataset_root: get("dataset_root").map(PathBuf::from),
            camera: get("camera").unwrap_or(DEFAULT_CAMERA).to_string(),
            frame_rate: num("frame_rate")?.unwrap_or(DEFAULT_FRAME_RATE),
            image_extents,
            train_sequences: id_list(&kv, "train_sequences"),
            val_sequences: id_list(&kv, "val_sequences"),
            test_sequences: id_list(&kv, "test_sequences"),
            sequences: id_list(&kv, "sequences"),
            hidden: count("hidden")?.unwrap_or(DEFAULT_HIDDEN),
            segment_min_len: count("segment_min_len")?.unwrap_or(5),
            segment_max_len: count("segment_max_len")?.unwrap_or(10),
            segment_stride: count("segment_stride")?.unwrap_or(5),
            checkpoint: get("checkpoint").map(PathBuf::from),
            infer_chunk: count("infer_chunk")?.unwrap_or(0),
            estimate_dir: get("estimate_dir").map(PathBuf::from),
            start_stride: count("start_stride")?.unwrap_or(DEFAULT_START_STRIDE),
            speed_bin: num("speed_bin")?.unwrap_or(DEFAULT_SPEED_BIN),
            synth_sequences: synth_list(get("synth_sequences").unwrap_or("00:straight,01:turn"))?,
            synth,
            train: TrainConfig::from_kv(&kv).map_err(CliError::from_core)?,
            kv,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        disjoint(("train_sequences", &self.train_sequences), ("test_sequences", &self.test_sequences))?;
        disjoint(("train_sequences", &self.train_sequences), ("val_sequences", &self.val_sequences))?;
        disjoint(("val_sequences", &self.val_sequences), ("test_sequences", &self.test_sequences))?;
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(CliError::config(format!("frame_rate must be positive, got {}", self.frame_rate)));
        }
        if self.hidden == 0 {
            return Err(CliError::config("hidden must be at least 1"));
        }
        if self.start_stride == 0 {
            return Err(CliError::config("start_stride must be at least 1"));
        }
        if !(self.speed_bin > 0.0 && self.speed_bin.is_finite()) {
            return Err(CliError::config(format!("speed_bin must be positive, got {}", self.speed_bin)));
        }
        Ok(())
    }

    /// `<output_dir>/<label>-<hash>`: the hash covers the subcommand and
    /// every effective key, sorted, so the name is stable across runs.
    pub fn run_dir(&self, command: &str) -> PathBuf {
        let mut entries: Vec<(&str, &str)> = self.kv.iter().collect();
        entries.sort();
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(b"\n");
        for (k, v) in entries {
            hasher.update(format!("{k} = {v}\n").as_bytes());
        }
        let hex: String = hasher.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect();
        let label = self.run_label.as_deref().unwrap_or(command);
        self.output_dir.join(format!("{label}-{hex}"))
    }

    pub fn require_dataset_root(&self) -> Result<&Path, CliError> {
        self.dataset_root
            .as_deref()
            .ok_or_else(|| CliError::config("missing key \"dataset_root\""))
    }

    /// `sequences`, falling back to `test_sequences`.
    pub fn eval_sequences(&self) -> Result<&[String], CliError> {
        let ids = if self.sequences.is_empty() { &self.test_sequences } else { &self.sequences };
        if ids.is_empty() {
            return Err(CliError::config("no sequences: set \"sequences\" or \"test_sequences\""));
        }
        Ok(ids)
    }

    /// Canonical text of the effective configuration, keys sorted.
    pub fn effective_text(&self) -> String {
        let mut entries: Vec<(&str, &str)> = self.kv.iter().collect();
        entries.sort();
        entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
