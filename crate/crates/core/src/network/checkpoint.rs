//! Checkpoint directories: `manifest.txt` (plain `key = value` text) next to
//! `params.rvt` (every parameter tensor in [`VoModel::params`] order).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::kitti::MeanRgb;
use crate::tensor::{read_tensors, write_tensors};

use super::{ConvLayerSpec, ModelMeta, VoModel, CONV_TABLE};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PARAMS_FILE: &str = "params.rvt";
const FORMAT: &str = "rcnn-vo-checkpoint-1";

/// Self-description stored alongside the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Manifest {
    pub meta: ModelMeta,
    pub kappa: f64,
    pub seed: u64,
}

fn layer_line(l: &ConvLayerSpec) -> String {
    format!(
        "{} k={} pad={} stride={} out={} relu={}",
        l.name, l.receptive_field, l.padding, l.stride, l.out_channels, l.relu_after as u8
    )
}

fn dims(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn manifest_text(model: &VoModel, kappa: f64, seed: u64) -> String {
    let m = &model.meta;
    let mut kv = KeyValues::new();
    kv.set("format", FORMAT);
    kv.set("image_height", m.image_height);
    kv.set("image_width", m.image_width);
    kv.set("hidden", m.hidden);
    let [r, g, b] = m.mean_rgb.0;
    kv.set("mean_rgb", format!("{r} {g} {b}"));
    kv.set("kappa", kappa);
    kv.set("seed", seed);
    for (i, c) in model.convs.iter().enumerate() {
        kv.set(format!("layer.{i}"), layer_line(&c.spec));
    }
    for (i, (name, t)) in model.params().iter().enumerate() {
        kv.set(format!("param.{i}"), format!("{name} {}", dims(t.shape())));
    }
    kv.to_text()
}

pub fn save_checkpoint(dir: &Path, model: &VoModel, kappa: f64, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest, manifest_text(model, kappa, seed)).map_err(|e| Error::io(&manifest, e))?;
    let params = dir.join(PARAMS_FILE);
    let file = File::create(&params).map_err(|e| Error::io(&params, e))?;
    let mut out = BufWriter::new(file);
    write_tensors(&mut out, model.params().into_iter().map(|(_, t)| t))?;
    out.flush().map_err(|e| Error::io(&params, e))
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(kv: &KeyValues, key: &str, path: &Path) -> Result<T> {
    let raw = kv.get(key).ok_or_else(|| bad(path, format!("missing {key}")))?;
    raw.parse().map_err(|_| bad(path, format!("invalid {key}: {raw:?}")))
}

/// Reads a checkpoint and verifies layer list, parameter names and shapes.
pub fn load_checkpoint(dir: &Path) -> Result<(VoModel, Manifest)> {
    let path = dir.join(MANIFEST_FILE);
    let kv = KeyValues::read(&path)?;
    if kv.get("format") != Some(FORMAT) {
        return Err(bad(&path, format!("unsupported format {:?}", kv.get("format"))));
    }
    let height: usize = field(&kv, "image_height", &path)?;
    let width: usize = field(&kv, "image_width", &path)?;
    let hidden: usize = field(&kv, "hidden", &path)?;
    let rgb: Vec<f64> = kv
        .get("mean_rgb")
        .unwrap_or("")
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(&path, format!("invalid mean_rgb value {s:?}"))))
        .collect::<Result<_>>()?;
    let mean_rgb = match rgb[..] {
        [r, g, b] => MeanRgb([r, g, b]),
        _ => return Err(bad(&path, "mean_rgb needs three values")),
    };
    let kappa: f64 = field(&kv, "kappa", &path)?;
    let seed: u64 = field(&kv, "seed", &path)?;
    for (i, spec) in CONV_TABLE.iter().enumerate() {
        let key = format!("layer.{i}");
        let expected = layer_line(spec);
        if kv.get(&key) != Some(expected.as_str()) {
            return Err(bad(
                &path,
                format!("{key} is {:?}, expected {expected:?}", kv.get(&key)),
            ));
        }
    }
    if kv.get(&format!("layer.{}", CONV_TABLE.len())).is_some() {
        return Err(bad(&path, "unexpected extra layer"));
    }

    let mut model = VoModel::zeros(height, width, hidden)?;
    model.meta.mean_rgb = mean_rgb;
    let expected: Vec<(String, Vec<usize>)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    for (i, (name, shape)) in expected.iter().enumerate() {
        let line = format!("{name} {}", dims(shape));
        if kv.get(&format!("param.{i}")) != Some(line.as_str()) {
            return Err(bad(&path, format!("param.{i} does not match {line:?}")));
        }
    }

    let params_path = dir.join(PARAMS_FILE);
    let file = File::open(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let tensors = read_tensors(&mut BufReader::new(file))?;
    if tensors.len() != expected.len() {
        return Err(bad(
            &params_path,
            format!("expected {} tensors, found {}", expected.len(), tensors.len()),
        ));
    }
    for ((slot, t), (name, shape)) in model.params_mut().into_iter().zip(tensors).zip(&expected) {
        if t.shape() != shape.as_slice() {
            return Err(bad(
                &params_path,
                format!("{name}: shape {:?}, expected {shape:?}", t.shape()),
            ));
        }
        *slot = t;
    }
    let meta = model.meta;
    Ok((model, Manifest { meta, kappa, seed }))
}
