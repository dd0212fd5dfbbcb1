use std::path::{Path, PathBuf};

use rcnn_vo_core::evaluation::{
    aggregate, emit_trajectory_plot, export_trajectory, infer_trajectory, segment_errors, write_report,
    SequenceSummary, SUBSEQUENCE_LENGTHS,
};
use rcnn_vo_core::kitti::{dataset_mean_rgb, load_pose_file, pose_path, segment_dataset};
use rcnn_vo_core::network::{build_model, load_checkpoint, save_checkpoint};
use rcnn_vo_core::synth::{generate, write_sequence, SynthConfig};
use rcnn_vo_core::training::{emit_loss_curves, mean_segment_loss, split_validation, train_with_validator};
use rcnn_vo_core::{Error, Rng, Segment, SequenceDataset, Trajectory};

use crate::{CliError, RunConfig};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LOSS_STEM: &str = "loss";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Infer,
    Eval,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Infer => "infer",
            Command::Eval => "eval",
            Command::Synth => "synth",
        }
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    match command {
        Command::Train => cmd_train(cfg),
        Command::Infer => cmd_infer(cfg),
        Command::Eval => cmd_eval(cfg),
        Command::Synth => cmd_synth(cfg),
    }
}

fn prepare_run_dir(cfg: &RunConfig, command: Command) -> Result<PathBuf, CliError> {
    let dir = cfg.run_dir(command.name());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.effective_text()).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(dir)
}

fn open_sequences(cfg: &RunConfig, ids: &[String], require_poses: bool) -> Result<Vec<SequenceDataset>, CliError> {
    let root = cfg.require_dataset_root()?;
    ids.iter()
        .map(|id| {
            let mut ds = SequenceDataset::open_kitti(root, id, &cfg.camera, require_poses)?;
            ds.frame_rate = cfg.frame_rate;
            Ok(ds)
        })
        .collect()
}

/// Loads and segments each sequence in order, drawing lengths from `rng`.
fn segments_of(
    cfg: &RunConfig,
    datasets: &[SequenceDataset],
    model_meta: &rcnn_vo_core::network::ModelMeta,
    rng: &mut Rng,
) -> Result<Vec<Segment>, CliError> {
    let extents = (model_meta.image_height, model_meta.image_width);
    let mut out = Vec::new();
    for ds in datasets {
        let frames = ds.load_frames(&model_meta.mean_rgb, extents)?;
        out.extend(segment_dataset(
            ds,
            &frames,
            cfg.segment_min_len,
            cfg.segment_max_len,
            cfg.segment_stride,
            rng,
        )?);
    }
    Ok(out)
}

/// Trains on `train_sequences` and writes the best checkpoint plus the
/// loss table and plot. Validation uses `val_sequences` when given, else the
/// trailing fraction of the training segments.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    if cfg.train_sequences.is_empty() {
        return Err(CliError::config("missing key \"train_sequences\""));
    }
    let train_ds = open_sequences(cfg, &cfg.train_sequences, true)?;
    let val_ds = open_sequences(cfg, &cfg.val_sequences, true)?;
    let (height, width) = cfg.image_extents.unwrap_or((cfg.synth.height, cfg.synth.width));
    let tc = &cfg.train;
    let base = Rng::new(tc.seed);

    let mut model = build_model(height, width, cfg.hidden, &mut base.split(0))?;
    model.meta.mean_rgb = dataset_mean_rgb(&train_ds)?;

    let mut seg_rng = base.split(1);
    let segments = segments_of(cfg, &train_ds, &model.meta, &mut seg_rng)?;
    let (train_set, val_set) = if val_ds.is_empty() {
        split_validation(segments, tc.validation_fraction)
    } else {
        (segments, segments_of(cfg, &val_ds, &model.meta, &mut seg_rng)?)
    };
    log::info!("{} training and {} validation segments", train_set.len(), val_set.len());

    let dir = prepare_run_dir(cfg, Command::Train)?;
    let outcome = train_with_validator(model, &train_set, tc, |m, _epoch, train_loss| {
        if val_set.is_empty() {
            Ok(train_loss)
        } else {
            mean_segment_loss(m, &val_set, tc.kappa)
        }
    })?;
    save_checkpoint(&dir.join(CHECKPOINT_DIR), &outcome.best, tc.kappa, tc.seed)?;
    emit_loss_curves(&outcome.log, &dir, LOSS_STEM)?;
    if outcome.stopped_early {
        log::info!("stopped early after {} epochs", outcome.log.epochs.len());
    }
    Ok(dir)
}

/// Writes `<id>.txt` in KITTI pose format for each requested sequence.
pub fn cmd_infer(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let ckpt = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::config("missing key \"checkpoint\""))?;
    let (model, _) = load_checkpoint(ckpt)?;
    let expected = (model.meta.image_height, model.meta.image_width);
    let extents = cfg.image_extents.unwrap_or(expected);
    if extents != expected {
        return Err(CliError::config(format!(
            "checkpoint {} expects {}x{} frames but the configuration asks for {}x{}",
            ckpt.display(),
            expected.0,
            expected.1,
            extents.0,
            extents.1
        )));
    }
    let ids = cfg.eval_sequences()?;
    let datasets = open_sequences(cfg, ids, false)?;
    let dir = prepare_run_dir(cfg, Command::Infer)?;
    for ds in &datasets {
        let frames = ds.load_frames(&model.meta.mean_rgb, extents)?;
        let traj = infer_trajectory(&model, &frames, ds.frame_rate, cfg.infer_chunk)?;
        export_trajectory(&traj, &dir.join(format!("{}.txt", ds.id)))?;
        log::info!("sequence {}: {} poses", ds.id, traj.len());
    }
    Ok(dir)
}

fn load_trajectory(path: &Path, frame_rate: f64) -> Result<Trajectory, Error> {
    Trajectory::new(load_pose_file(path)?, frame_rate)
}

/// Compares `<estimate_dir>/<id>.txt` with the dataset ground truth and
/// writes the error tables, the summary and one trajectory plot per sequence.
pub fn cmd_eval(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let est_dir = cfg
        .estimate_dir
        .as_deref()
        .ok_or_else(|| CliError::config("missing key \"estimate_dir\""))?;
    let root = cfg.require_dataset_root()?;
    let ids = cfg.eval_sequences()?;

    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let gt = load_trajectory(&pose_path(root, id), cfg.frame_rate)?;
        let est = load_trajectory(&est_dir.join(format!("{id}.txt")), cfg.frame_rate)?;
        if gt.len() != est.len() {
            return Err(CliError::data(format!(
                "sequence {id}: estimate has {} poses but ground truth has {}",
                est.len(),
                gt.len()
            )));
        }
        pairs.push((id, gt, est));
    }

    let dir = prepare_run_dir(cfg, Command::Eval)?;
    let mut all_rows = Vec::new();
    let mut summaries = Vec::with_capacity(pairs.len());
    for (id, gt, est) in &pairs {
        let rows = segment_errors(gt, est, &SUBSEQUENCE_LENGTHS, cfg.start_stride)?;
        let seq_report = (!rows.is_empty()).then(|| aggregate(&rows, cfg.speed_bin)).transpose()?;
        let last = |t: &Trajectory| t.poses.last().map(|p| p.translation).unwrap_or_default();
        summaries.push(SequenceSummary {
            id: id.to_string(),
            frames: gt.len(),
            path_length: gt.path_length(),
            endpoint_error: (last(gt) - last(est)).norm(),
            t_rel_percent: seq_report.as_ref().map(|r| r.t_rel_percent),
            r_rel_deg_per_100m: seq_report.as_ref().map(|r| r.r_rel_deg_per_100m),
        });
        emit_trajectory_plot(
            &format!("Sequence {id}"),
            &[("ground truth", gt), ("estimate", est)],
            &dir.join(format!("{id}.svg")),
        )?;
        all_rows.extend(rows);
    }
    let report = (!all_rows.is_empty()).then(|| aggregate(&all_rows, cfg.speed_bin)).transpose()?;
    write_report(&dir, report.as_ref(), &summaries)?;
    Ok(dir)
}

/// Writes each `synth_sequences` entry in KITTI layout under the run
/// directory, which then serves as a `dataset_root`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = prepare_run_dir(cfg, Command::Synth)?;
    for (i, (id, profile)) in cfg.synth_sequences.iter().enumerate() {
        let sc = SynthConfig {
            profile: *profile,
            seed: cfg.synth.seed.wrapping_add(i as u64),
            ..cfg.synth.clone()
        };
        write_sequence(&dir, id, &generate(&sc)?)?;
        log::info!("sequence {id}: {} {} frames", profile.name(), sc.frames);
    }
    Ok(dir)
}
