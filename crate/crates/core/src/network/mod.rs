//! Recurrent convolutional pose regressor.
//!
//! A stacked frame pair `[6, H, W]` goes through nine convolutions (the
//! [`CONV_TABLE`]), the flattened Conv6 map feeds two stacked LSTM layers, and
//! an affine head maps the top hidden state to a 6-DoF relative pose
//! `[px, py, pz, phi_x, phi_y, phi_z]` per time step.
//!
//! Forward functions operate on a [`Graph`] so the same code serves training
//! (parameters as differentiable leaves) and inference (parameters as
//! constants). [`VoModel::predict`] wraps the inference path.

mod checkpoint;
mod lstm;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, MANIFEST_FILE, PARAMS_FILE};
pub use lstm::{lstm_cell, lstm_layer, lstm_step, LstmParams, LstmState, LstmVars, StateVars};

use crate::error::{Error, Result};
use crate::geometry::Pose6;
use crate::kitti::MeanRgb;
use crate::tensor::{Graph, Rng, Tensor, Var};

pub const DEFAULT_HIDDEN: usize = 1000;
pub const POSE_DIM: usize = 6;
pub const PAIR_CHANNELS: usize = 6;
/// Total spatial downsampling of the encoder (six stride-2 layers).
pub const DOWNSAMPLING: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub name: &'static str,
    pub receptive_field: usize,
    pub padding: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub relu_after: bool,
}

const fn conv(
    name: &'static str,
    receptive_field: usize,
    padding: usize,
    stride: usize,
    out_channels: usize,
    relu_after: bool,
) -> ConvLayerSpec {
    ConvLayerSpec {
        name,
        receptive_field,
        padding,
        stride,
        out_channels,
        relu_after,
    }
}

/// Encoder configuration, in order.
pub const CONV_TABLE: [ConvLayerSpec; 9] = [
    conv("Conv1", 7, 3, 2, 64, true),
    conv("Conv2", 5, 2, 2, 128, true),
    conv("Conv3", 5, 2, 2, 256, true),
    conv("Conv3_1", 3, 1, 1, 256, true),
    conv("Conv4", 3, 1, 2, 512, true),
    conv("Conv4_1", 3, 1, 1, 512, true),
    conv("Conv5", 3, 1, 2, 512, true),
    conv("Conv5_1", 3, 1, 1, 512, true),
    conv("Conv6", 3, 1, 2, 1024, false),
];

impl ConvLayerSpec {
    pub fn output_extent(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.receptive_field) / self.stride + 1
    }
}

/// `[channels, height, width]` after every encoder layer.
pub fn conv_output_shapes(height: usize, width: usize) -> Vec<[usize; 3]> {
    let (mut h, mut w) = (height, width);
    CONV_TABLE
        .iter()
        .map(|l| {
            h = l.output_extent(h);
            w = l.output_extent(w);
            [l.out_channels, h, w]
        })
        .collect()
}

pub fn feature_len(height: usize, width: usize) -> usize {
    let [c, h, w] = *conv_output_shapes(height, width).last().expect("table is non-empty");
    c * h * w
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvLayerSpec,
    /// `[out_channels, in_channels, k, k]`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelMeta {
    pub image_height: usize,
    pub image_width: usize,
    pub hidden: usize,
    pub mean_rgb: MeanRgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoModel {
    pub meta: ModelMeta,
    pub convs: Vec<ConvLayer>,
    pub lstm1: LstmParams,
    pub lstm2: LstmParams,
    /// `[6, hidden]`
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

fn check_extents(height: usize, width: usize) -> Result<()> {
    for (what, v) in [("height", height), ("width", width)] {
        if v == 0 || v % DOWNSAMPLING != 0 {
            return Err(Error::invalid(
                "build_model",
                format!("image {what} {v} is not a positive multiple of {DOWNSAMPLING}"),
            ));
        }
    }
    Ok(())
}

/// Builds a randomly initialized model for `height x width` frames.
///
/// Convolution, LSTM and head weights are uniform in `±1/sqrt(fan_in)`. The
/// LSTM forget-gate bias starts at 1; every other bias starts at 0.
pub fn build_model(height: usize, width: usize, hidden: usize, rng: &mut Rng) -> Result<VoModel> {
    check_extents(height, width)?;
    if hidden == 0 {
        return Err(Error::invalid("build_model", "hidden size must be positive"));
    }
    let mut in_ch = PAIR_CHANNELS;
    let mut convs = Vec::with_capacity(CONV_TABLE.len());
    for spec in CONV_TABLE {
        let k = spec.receptive_field;
        let bound = 1.0 / ((in_ch * k * k) as f64).sqrt();
        convs.push(ConvLayer {
            spec,
            weight: Tensor::uniform(vec![spec.out_channels, in_ch, k, k], -bound, bound, rng),
            bias: Tensor::zeros(vec![spec.out_channels]),
        });
        in_ch = spec.out_channels;
    }
    let features = feature_len(height, width);
    let lstm1 = LstmParams::init(features, hidden, rng);
    let lstm2 = LstmParams::init(hidden, hidden, rng);
    let bound = 1.0 / (hidden as f64).sqrt();
    Ok(VoModel {
        meta: ModelMeta {
            image_height: height,
            image_width: width,
            hidden,
            mean_rgb: MeanRgb::default(),
        },
        convs,
        lstm1,
        lstm2,
        head_weight: Tensor::uniform(vec![POSE_DIM, hidden], -bound, bound, rng),
        head_bias: Tensor::zeros(vec![POSE_DIM]),
    })
}

/// Parameters bound into a graph, in [`VoModel::params`] order.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub convs: Vec<(Var, Var)>,
    pub lstm1: LstmVars,
    pub lstm2: LstmVars,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl ModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.convs.iter().flat_map(|&(w, b)| [w, b]).collect();
        v.extend(self.lstm1.all());
        v.extend(self.lstm2.all());
        v.push(self.head_weight);
        v.push(self.head_bias);
        v
    }
}

impl VoModel {
    /// Same architecture with every parameter zero.
    pub fn zeros(height: usize, width: usize, hidden: usize) -> Result<VoModel> {
        check_extents(height, width)?;
        if hidden == 0 {
            return Err(Error::invalid("build_model", "hidden size must be positive"));
        }
        let mut in_ch = PAIR_CHANNELS;
        let mut convs = Vec::with_capacity(CONV_TABLE.len());
        for spec in CONV_TABLE {
            let k = spec.receptive_field;
            convs.push(ConvLayer {
                spec,
                weight: Tensor::zeros(vec![spec.out_channels, in_ch, k, k]),
                bias: Tensor::zeros(vec![spec.out_channels]),
            });
            in_ch = spec.out_channels;
        }
        Ok(VoModel {
            meta: ModelMeta {
                image_height: height,
                image_width: width,
                hidden,
                mean_rgb: MeanRgb::default(),
            },
            convs,
            lstm1: LstmParams::zeros(feature_len(height, width), hidden),
            lstm2: LstmParams::zeros(hidden, hidden),
            head_weight: Tensor::zeros(vec![POSE_DIM, hidden]),
            head_bias: Tensor::zeros(vec![POSE_DIM]),
        })
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.meta.image_height, self.meta.image_width)
    }

    /// Every parameter with a stable dotted name, in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for c in &self.convs {
            let n = c.spec.name.to_lowercase();
            out.push((format!("{n}.weight"), &c.weight));
            out.push((format!("{n}.bias"), &c.bias));
        }
        for (prefix, l) in [("lstm1", &self.lstm1), ("lstm2", &self.lstm2)] {
            for (name, t) in l.named() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.push(("head.weight".into(), &self.head_weight));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.extend(self.lstm1.tensors_mut());
        out.extend(self.lstm2.tensors_mut());
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records the parameters on `graph`: as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind<'p>(&'p self, graph: &mut Graph<'p>, trainable: bool) -> ModelVars {
        let mut put = |t: &'p Tensor| {
            if trainable {
                graph.param(t)
            } else {
                graph.constant_ref(t)
            }
        };
        let convs = self.convs.iter().map(|c| (put(&c.weight), put(&c.bias))).collect();
        let lstm1 = self.lstm1.bind(&mut put);
        let lstm2 = self.lstm2.bind(&mut put);
        let head_weight = put(&self.head_weight);
        let head_bias = put(&self.head_bias);
        ModelVars {
            convs,
            lstm1,
            lstm2,
            head_weight,
            head_bias,
        }
    }

    /// Checks a stacked pair (or batch of pairs) against the model's extents.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (c, h, w) = match *shape {
            [c, h, w] | [_, c, h, w] => (c, h, w),
            _ => return Err(Error::invalid("cnn_forward", format!("bad input shape {shape:?}"))),
        };
        if c != PAIR_CHANNELS {
            return Err(Error::invalid(
                "cnn_forward",
                format!("expected {PAIR_CHANNELS} channels (two stacked RGB frames), got {c}"),
            ));
        }
        if (h, w) != (self.meta.image_height, self.meta.image_width) {
            return Err(Error::invalid(
                "cnn_forward",
                format!(
                    "input extents {h}x{w} do not match model extents {}x{}",
                    self.meta.image_height, self.meta.image_width
                ),
            ));
        }
        Ok(())
    }

    /// Inference over stacked pairs `[T, 6, H, W]`, threading `states`
    /// (zeros when `None`). Returns one pose per pair and the final states.
    pub fn predict(&self, pairs: &Tensor, states: Option<&[LstmState; 2]>) -> Result<(Vec<Pose6>, [LstmState; 2])> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant_ref(pairs);
        let feats = cnn_forward(&mut g, self, &vars, x)?;
        let zero = LstmState::zeros(self.meta.hidden);
        let st = match states {
            Some([a, b]) => [a.bind(&mut g), b.bind(&mut g)],
            None => [zero.bind(&mut g), zero.bind(&mut g)],
        };
        let mut rng = Rng::new(0);
        let (poses, out_states) = rnn_forward(&mut g, &vars, feats, st, 0.0, false, &mut rng)?;
        let poses = poses.iter().map(|&p| Pose6::from_slice(g.value(p).data())).collect();
        Ok((poses, [out_states[0].value(&g), out_states[1].value(&g)]))
    }
}

/// Stacks `[6, H, W]` pair tensors into a `[T, 6, H, W]` batch.
pub fn stack_pairs(pairs: &[Tensor]) -> Result<Tensor> {
    let first = pairs.first().ok_or_else(|| Error::invalid("stack_pairs", "no pairs"))?;
    let mut data = Vec::with_capacity(first.len() * pairs.len());
    for p in pairs {
        if p.shape() != first.shape() {
            return Err(Error::shape("stack_pairs", first.shape(), p.shape()));
        }
        data.extend_from_slice(p.data());
    }
    let mut shape = vec![pairs.len()];
    shape.extend_from_slice(first.shape());
    Tensor::new(shape, data)
}

/// Runs the encoder. A single pair `[6, H, W]` yields a feature vector
/// `[F]`; a batch `[T, 6, H, W]` yields a matrix `[T, F]`.
pub fn cnn_forward(g: &mut Graph<'_>, model: &VoModel, vars: &ModelVars, pairs: Var) -> Result<Var> {
    model.check_input(g.shape(pairs))?;
    let batched = g.shape(pairs).len() == 4;
    let mut x = pairs;
    for (layer, &(w, b)) in model.convs.iter().zip(&vars.convs) {
        x = g.conv2d(x, w, b, layer.spec.stride, layer.spec.padding)?;
        if layer.spec.relu_after {
            x = g.relu(x)?;
        }
    }
    let shape = g.shape(x).to_vec();
    if batched {
        let f = shape[1..].iter().product::<usize>();
        g.reshape(x, vec![shape[0], f])
    } else {
        let f = shape.iter().product::<usize>();
        g.reshape(x, vec![f])
    }
}

/// Stacked recurrence over a feature matrix `[T, F]` (rows are time steps).
///
/// Per step: LSTM 1, dropout, LSTM 2, dropout, affine head. The layers are
/// evaluated one after the other across the whole sequence, which is the
/// same computation as interleaving them step by step.
pub fn rnn_forward(
    g: &mut Graph<'_>,
    vars: &ModelVars,
    features: Var,
    states: [StateVars; 2],
    dropout_rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Vec<Var>, [StateVars; 2])> {
    let shape = g.shape(features).to_vec();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::invalid("rnn_forward", format!("expected features [T, F], got {shape:?}")));
    }
    let [s1, s2] = states;
    let xs = g.transpose(features)?;
    let (h1, s1) = lstm_layer(g, &vars.lstm1, xs, s1)?;
    let d1 = h1
        .into_iter()
        .map(|h| g.dropout(h, dropout_rate, training, rng))
        .collect::<Result<Vec<_>>>()?;
    let x2 = g.stack_columns(&d1)?;
    let (h2, s2) = lstm_layer(g, &vars.lstm2, x2, s2)?;
    let mut poses = Vec::with_capacity(h2.len());
    for h in h2 {
        let d = g.dropout(h, dropout_rate, training, rng)?;
        let y = g.matmul(vars.head_weight, d)?;
        poses.push(g.add(y, vars.head_bias)?);
    }
    Ok((poses, [s1, s2]))
}

/// Encoder then recurrence from zero states over `[T, 6, H, W]` pairs.
pub fn model_forward(
    g: &mut Graph<'_>,
    model: &VoModel,
    vars: &ModelVars,
    pairs: Var,
    dropout_rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<Vec<Var>> {
    if g.shape(pairs).len() != 4 {
        return Err(Error::invalid("model_forward", "expected a [T, 6, H, W] sequence"));
    }
    let feats = cnn_forward(g, model, vars, pairs)?;
    let zero = LstmState::zeros(model.meta.hidden);
    let states = [zero.bind(g), zero.bind(g)];
    Ok(rnn_forward(g, vars, feats, states, dropout_rate, training, rng)?.0)
}
