//! Segment-wise training with Adagrad, validation tracking and early
//! stopping.

mod adagrad;
mod log;
mod loss;

pub use adagrad::{adagrad_step, clip_global_norm, global_norm, AdagradState};
pub use log::{emit_loss_curves, EpochRecord, TrainLog, LOSS_TABLE_HEADER};
pub use loss::{batch_pose_loss, pose_loss, pose_loss_value};

use std::time::Instant;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::geometry::Pose6;
use crate::kitti::Segment;
use crate::network::{cnn_forward, rnn_forward, LstmState, VoModel};
use crate::tensor::{Graph, Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kappa: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub dropout_rate: f64,
    pub adagrad_epsilon: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    /// When false the `seconds` column is left at 0 so logs are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kappa: 100.0,
            learning_rate: 1e-3,
            max_epochs: 200,
            dropout_rate: 0.5,
            adagrad_epsilon: 1e-8,
            early_stop_patience: 10,
            seed: 0,
            validation_fraction: 0.1,
            grad_clip: 5.0,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "kappa",
        "learning_rate",
        "max_epochs",
        "dropout_rate",
        "adagrad_epsilon",
        "early_stop_patience",
        "seed",
        "validation_fraction",
        "grad_clip",
        "record_wall_time",
    ];

    /// Reads the keys in [`KEYS`](Self::KEYS), keeping defaults for absent
    /// ones. Other keys are ignored here.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = TrainConfig::default();
        let c = TrainConfig {
            kappa: kv.parse_value("kappa")?.unwrap_or(d.kappa),
            learning_rate: kv.parse_value("learning_rate")?.unwrap_or(d.learning_rate),
            max_epochs: kv.parse_value("max_epochs")?.unwrap_or(d.max_epochs),
            dropout_rate: kv.parse_value("dropout_rate")?.unwrap_or(d.dropout_rate),
            adagrad_epsilon: kv.parse_value("adagrad_epsilon")?.unwrap_or(d.adagrad_epsilon),
            early_stop_patience: kv.parse_value("early_stop_patience")?.unwrap_or(d.early_stop_patience),
            seed: kv.parse_value("seed")?.unwrap_or(d.seed),
            validation_fraction: kv.parse_value("validation_fraction")?.unwrap_or(d.validation_fraction),
            grad_clip: kv.parse_value("grad_clip")?.unwrap_or(d.grad_clip),
            record_wall_time: kv.parse_value("record_wall_time")?.unwrap_or(d.record_wall_time),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("kappa", self.kappa);
        kv.set("learning_rate", self.learning_rate);
        kv.set("max_epochs", self.max_epochs);
        kv.set("dropout_rate", self.dropout_rate);
        kv.set("adagrad_epsilon", self.adagrad_epsilon);
        kv.set("early_stop_patience", self.early_stop_patience);
        kv.set("seed", self.seed);
        kv.set("validation_fraction", self.validation_fraction);
        kv.set("grad_clip", self.grad_clip);
        kv.set("record_wall_time", self.record_wall_time);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("learning_rate", self.learning_rate),
            ("adagrad_epsilon", self.adagrad_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Config(format!("grad_clip must be >= 0, got {}", self.grad_clip)));
        }
        Ok(())
    }
}

/// Splits off the trailing `fraction` of segments for validation: at least
/// one when there are two or more segments, and never all of them.
pub fn split_validation(mut segments: Vec<Segment>, fraction: f64) -> (Vec<Segment>, Vec<Segment>) {
    let n = segments.len();
    let n_val = if n < 2 {
        0
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    };
    let val = segments.split_off(n - n_val);
    (segments, val)
}

/// Loss of one segment with dropout off.
pub fn segment_loss(model: &VoModel, seg: &Segment, kappa: f64) -> Result<f64> {
    let (est, _) = model.predict(&seg.pairs, None)?;
    pose_loss_value(&est, &seg.targets, kappa)
}

pub fn mean_segment_loss(model: &VoModel, segs: &[Segment], kappa: f64) -> Result<f64> {
    if segs.is_empty() {
        return Err(Error::invalid("mean_segment_loss", "no segments"));
    }
    let mut sum = 0.0;
    for s in segs {
        sum += segment_loss(model, s, kappa)?;
    }
    Ok(sum / segs.len() as f64)
}

/// Gradients of one segment's loss (dropout on) plus the same segment's
/// loss with dropout off, both at the current parameters.
pub fn segment_gradients(
    model: &VoModel,
    seg: &Segment,
    config: &TrainConfig,
    dropout_rng: &mut Rng,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let x = g.constant_ref(&seg.pairs);
    let feats = cnn_forward(&mut g, model, &vars, x)?;
    let zero = LstmState::zeros(model.meta.hidden);
    let states = [zero.bind(&mut g), zero.bind(&mut g)];
    let (est, _) = rnn_forward(&mut g, &vars, feats, states, config.dropout_rate, true, dropout_rng)?;
    let loss = pose_loss(&mut g, &est, &seg.targets, config.kappa)?;
    let clean = if config.dropout_rate > 0.0 {
        let states = [zero.bind(&mut g), zero.bind(&mut g)];
        let (plain, _) = rnn_forward(&mut g, &vars, feats, states, 0.0, false, dropout_rng)?;
        let plain: Vec<Pose6> = plain.iter().map(|&v| Pose6::from_slice(g.value(v).data())).collect();
        pose_loss_value(&plain, &seg.targets, config.kappa)?
    } else {
        g.value(loss).item()
    };
    let mut grads = g.backward(loss)?;
    let grads = vars
        .all()
        .into_iter()
        .map(|v| grads.take(v).unwrap_or_else(|| Tensor::zeros(g.shape(v).to_vec())))
        .collect();
    Ok((clean, grads))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation epoch.
    pub best: VoModel,
    pub log: TrainLog,
    pub stopped_early: bool,
}

/// Trains on `segments` after holding out the trailing validation fraction.
/// Without validation segments the training loss stands in for it.
pub fn train(model: VoModel, segments: Vec<Segment>, config: &TrainConfig) -> Result<TrainOutcome> {
    let (train_set, val_set) = split_validation(segments, config.validation_fraction);
    let kappa = config.kappa;
    train_with_validator(model, &train_set, config, |m, _epoch, train_loss| {
        if val_set.is_empty() {
            Ok(train_loss)
        } else {
            mean_segment_loss(m, &val_set, kappa)
        }
    })
}

/// The epoch loop. `validator(model, epoch, train_loss)` supplies each
/// epoch's validation loss.
pub fn train_with_validator(
    mut model: VoModel,
    segments: &[Segment],
    config: &TrainConfig,
    mut validator: impl FnMut(&VoModel, usize, f64) -> Result<f64>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if segments.is_empty() {
        return Err(Error::Data("no training segments".into()));
    }
    let base = Rng::new(config.seed);
    let mut shuffle_rng = base.split(10);
    let mut dropout_rng = base.split(11);
    let mut state = AdagradState::new(model.params().into_iter().map(|(_, t)| t));
    let mut log = TrainLog::default();
    let mut best = model.clone();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..segments.len()).collect();
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for &i in &order {
            let seg = &segments[i];
            let non_finite = || Error::NonFiniteLoss {
                epoch,
                segment: seg.label(),
            };
            let (loss, mut grads) = match segment_gradients(&model, seg, config, &mut dropout_rng) {
                Err(Error::NonFinite { .. }) => return Err(non_finite()),
                other => other?,
            };
            if !loss.is_finite() {
                return Err(non_finite());
            }
            total += loss;
            clip_global_norm(&mut grads, config.grad_clip);
            adagrad_step(
                &mut model.params_mut(),
                &grads,
                &mut state,
                config.learning_rate,
                config.adagrad_epsilon,
            )?;
        }
        let train_loss = total / segments.len() as f64;
        let val_loss = validator(&model, epoch, train_loss)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                segment: "validation".into(),
            });
        }
        let seconds = if config.record_wall_time {
            t0.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let improved = log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds,
        });
        ::log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        if improved {
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        best,
        log,
        stopped_early,
    })
}
