//! Independent oracles shared by the integration tests and the acceptance
//! suite. Each check returns a short summary on success and a diagnostic on
//! failure.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rcnn_vo_core::evaluation::{segment_errors, SUBSEQUENCE_LENGTHS};
use rcnn_vo_core::geometry::{
    compose_trajectory, euler_to_rotation, relative_motions, relative_pose, rotation_to_euler,
};
use rcnn_vo_core::kitti::{format_poses, parse_poses};
use rcnn_vo_core::network::{
    build_model, cnn_forward, conv_output_shapes, feature_len, lstm_step, LstmParams, LstmState, VoModel, CONV_TABLE,
};
use rcnn_vo_core::training::{pose_loss, pose_loss_value, train_with_validator, TrainConfig};
use rcnn_vo_core::{Graph, Pose6, PoseSE3, Rng, Segment, Tensor, Trajectory, Var};

pub type Check = Result<String, String>;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Relative error with a floor on the denominator, so coordinates whose
/// true derivative is zero are judged by absolute error.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn random_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

/// Entries in `[-1, 1]` but at least `margin` away from zero.
fn away_from_zero(shape: Vec<usize>, margin: f64, rng: &mut Rng) -> Tensor {
    let mut t = random_tensor(shape, rng);
    for v in t.data_mut() {
        while v.abs() < margin {
            *v = rng.uniform_range(-1.0, 1.0);
        }
    }
    t
}

type Op = Box<dyn Fn(&mut Graph<'_>, &[Var]) -> rcnn_vo_core::Result<Var>>;

/// A primitive under test: its inputs and the expression built from them.
struct Case {
    inputs: Vec<Tensor>,
    op: Op,
}

/// Loss `sum(op(inputs) * weights)` for a fixed random weighting, so every
/// output element contributes a distinct amount.
fn weighted_loss(case: &Case, inputs: &[Tensor], weights: &mut Option<Tensor>, rng: &mut Rng) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let y = (case.op)(&mut g, &vars).expect("primitive");
    let w = weights.get_or_insert_with(|| random_tensor(g.shape(y).to_vec(), rng)).clone();
    let wv = g.constant(w);
    let prod = g.mul(y, wv).expect("mul");
    let loss = g.sum(prod).expect("sum");
    let value = g.value(loss).item();
    let mut grads = g.backward(loss).expect("backward");
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect();
    (value, grads)
}

/// Largest relative error over every input coordinate of one case.
fn check_case(case: &Case, rng: &mut Rng) -> f64 {
    let mut weights = None;
    let (_, analytic) = weighted_loss(case, &case.inputs, &mut weights, rng);
    let mut worst = 0.0f64;
    for (i, input) in case.inputs.iter().enumerate() {
        for j in 0..input.len() {
            let eval = |delta: f64, weights: &mut Option<Tensor>, rng: &mut Rng| {
                let mut inputs = case.inputs.clone();
                inputs[i].data_mut()[j] += delta;
                weighted_loss(case, &inputs, weights, rng).0
            };
            let numeric = (eval(FD_STEP, &mut weights, rng) - eval(-FD_STEP, &mut weights, rng)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[i].data()[j], numeric, 1e-6));
        }
    }
    worst
}

fn dims(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    rng.range_inclusive(lo, hi)
}

fn primitive_case(name: &str, rng: &mut Rng) -> Case {
    match name {
        "conv2d" => {
            let k = [1, 3, 5][rng.below(3) as usize];
            let stride = dims(rng, 1, 2);
            let padding = dims(rng, 0, k / 2);
            let (ci, co) = (dims(rng, 1, 3), dims(rng, 1, 3));
            let h = dims(rng, k.saturating_sub(2 * padding).max(1), 6);
            let w = dims(rng, k.saturating_sub(2 * padding).max(1), 6);
            let mut shape = vec![ci, h, w];
            if rng.below(2) == 1 {
                shape.insert(0, dims(rng, 1, 2));
            }
            Case {
                inputs: vec![
                    random_tensor(shape, rng),
                    random_tensor(vec![co, ci, k, k], rng),
                    random_tensor(vec![co], rng),
                ],
                op: Box::new(move |g, v| g.conv2d(v[0], v[1], v[2], stride, padding)),
            }
        }
        "relu" => Case {
            inputs: vec![away_from_zero(vec![dims(rng, 1, 4), dims(rng, 1, 4)], 1e-3, rng)],
            op: Box::new(|g, v| g.relu(v[0])),
        },
        "sigmoid" => Case {
            inputs: vec![random_tensor(vec![dims(rng, 1, 6)], rng)],
            op: Box::new(|g, v| g.sigmoid(v[0])),
        },
        "tanh" => Case {
            inputs: vec![random_tensor(vec![dims(rng, 1, 6)], rng)],
            op: Box::new(|g, v| g.tanh(v[0])),
        },
        "matmul" => {
            let (m, n) = (dims(rng, 1, 4), dims(rng, 1, 4));
            let b = if rng.below(2) == 0 { vec![n] } else { vec![n, dims(rng, 1, 4)] };
            Case {
                inputs: vec![random_tensor(vec![m, n], rng), random_tensor(b, rng)],
                op: Box::new(|g, v| g.matmul(v[0], v[1])),
            }
        }
        "transpose" => Case {
            inputs: vec![random_tensor(vec![dims(rng, 1, 4), dims(rng, 1, 4)], rng)],
            op: Box::new(|g, v| g.transpose(v[0])),
        },
        "add" | "sub" | "mul" => {
            let shape = vec![dims(rng, 1, 3), dims(rng, 1, 3)];
            let op: Op = match name {
                "add" => Box::new(|g, v| g.add(v[0], v[1])),
                "sub" => Box::new(|g, v| g.sub(v[0], v[1])),
                _ => Box::new(|g, v| g.mul(v[0], v[1])),
            };
            Case {
                inputs: vec![random_tensor(shape.clone(), rng), random_tensor(shape, rng)],
                op,
            }
        }
        "scale" => {
            let s = rng.uniform_range(-3.0, 3.0);
            Case {
                inputs: vec![random_tensor(vec![dims(rng, 1, 5)], rng)],
                op: Box::new(move |g, v| g.scale(v[0], s)),
            }
        }
        "sum" => Case {
            inputs: vec![random_tensor(vec![dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 3)], rng)],
            op: Box::new(|g, v| g.sum(v[0])),
        },
        "reshape" => {
            let (a, b) = (dims(rng, 1, 4), dims(rng, 1, 4));
            Case {
                inputs: vec![random_tensor(vec![a, b], rng)],
                op: Box::new(move |g, v| g.reshape(v[0], vec![b * a])),
            }
        }
        "column" => {
            let cols = dims(rng, 1, 4);
            let k = rng.below(cols as u64) as usize;
            Case {
                inputs: vec![random_tensor(vec![dims(rng, 1, 4), cols], rng)],
                op: Box::new(move |g, v| g.column(v[0], k)),
            }
        }
        "stack_columns" => {
            let rows = dims(rng, 1, 4);
            let n = dims(rng, 1, 3);
            Case {
                inputs: (0..n).map(|_| random_tensor(vec![rows], rng)).collect(),
                op: Box::new(|g, v| g.stack_columns(v)),
            }
        }
        "dropout" => {
            let rate = rng.uniform_range(0.0, 0.9);
            let seed = rng.next_u64();
            Case {
                inputs: vec![random_tensor(vec![dims(rng, 1, 8)], rng)],
                op: Box::new(move |g, v| g.dropout(v[0], rate, true, &mut Rng::new(seed))),
            }
        }
        other => panic!("unknown primitive {other}"),
    }
}

pub const PRIMITIVES: [&str; 15] = [
    "conv2d",
    "relu",
    "sigmoid",
    "tanh",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "scale",
    "sum",
    "reshape",
    "column",
    "stack_columns",
    "dropout",
];

/// Central differences against the analytic gradient for `trials` random
/// cases of every primitive.
pub fn primitive_gradients(trials: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut report = Vec::new();
    for name in PRIMITIVES {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let case = primitive_case(name, &mut rng);
            worst = worst.max(check_case(&case, &mut rng));
        }
        if worst >= FD_TOLERANCE {
            return Err(format!("{name}: max relative error {worst:.3e} over {trials} trials"));
        }
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("{trials} trials each; worst: {}", report.join(", ")))
}

/// Two 64x64 frame pairs with smooth random content on a 0-255 scale,
/// mean-subtracted.
pub fn smooth_pairs(steps: usize, height: usize, width: usize, rng: &mut Rng) -> Tensor {
    let mut data = Vec::with_capacity(steps * 6 * height * width);
    for _ in 0..steps * 6 {
        let (fx, fy, ph) = (rng.uniform_range(0.05, 0.4), rng.uniform_range(0.05, 0.4), rng.uniform_range(0.0, 6.0));
        let amp = rng.uniform_range(10.0, 40.0);
        for r in 0..height {
            for c in 0..width {
                data.push(amp * (fx * c as f64 + fy * r as f64 + ph).sin());
            }
        }
    }
    Tensor::new(vec![steps, 6, height, width], data).expect("pairs")
}

fn model_loss(model: &VoModel, pairs: &Tensor, targets: &[Pose6], kappa: f64) -> f64 {
    let (est, _) = model.predict(pairs, None).expect("predict");
    pose_loss_value(&est, targets, kappa).expect("loss")
}

/// End-to-end check at 64x64 with T = 2: analytic gradients of the pose
/// loss against central differences on `coords` sampled parameter
/// coordinates, spread over every parameter tensor.
pub fn end_to_end_gradients(coords: usize, hidden: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut model = build_model(64, 64, hidden, &mut rng.split(0)).map_err(|e| e.to_string())?;
    let pairs = smooth_pairs(2, 64, 64, &mut rng);
    let targets: Vec<Pose6> = (0..2)
        .map(|_| {
            let v: Vec<f64> = (0..6).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            Pose6::from_slice(&v)
        })
        .collect();
    let kappa = 100.0;

    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let vars = model.bind(&mut g, true);
        let x = g.constant_ref(&pairs);
        let est = rcnn_vo_core::network::model_forward(&mut g, &model, &vars, x, 0.0, false, &mut Rng::new(0))
            .map_err(|e| e.to_string())?;
        let loss = pose_loss(&mut g, &est, &targets, kappa).map_err(|e| e.to_string())?;
        let mut grads = g.backward(loss).map_err(|e| e.to_string())?;
        vars.all()
            .into_iter()
            .map(|v| grads.take(v).unwrap_or_else(|| Tensor::zeros(g.shape(v).to_vec())))
            .collect()
    };
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    let base = model_loss(&model, &pairs, &targets, kappa);
    // Loss evaluation noise is about machine epsilon times the loss; the
    // floor keeps coordinates with negligible influence from dominating.
    let floor = 1e-6 * base.abs().max(1.0);

    let tensors = names.len();
    let mut worst = (0.0f64, String::new());
    for s in 0..coords {
        let ti = s % tensors;
        let len = analytic[ti].len();
        let j = rng.below(len as u64) as usize;
        let eval = |model: &mut VoModel, delta: f64| {
            let orig = model.params_mut()[ti].data()[j];
            model.params_mut()[ti].data_mut()[j] = orig + delta;
            let l = model_loss(model, &pairs, &targets, kappa);
            model.params_mut()[ti].data_mut()[j] = orig;
            l
        };
        let numeric = (eval(&mut model, FD_STEP) - eval(&mut model, -FD_STEP)) / (2.0 * FD_STEP);
        let a = analytic[ti].data()[j];
        let e = rel_err(a, numeric, floor);
        if e > worst.0 {
            worst = (e, format!("{}[{j}] analytic {a:.6e} numeric {numeric:.6e}", names[ti]));
        }
    }
    if worst.0 >= FD_TOLERANCE {
        return Err(format!("max relative error {:.3e} at {}", worst.0, worst.1));
    }
    Ok(format!("{coords} coordinates over {tensors} tensors, max relative error {:.2e}", worst.0))
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn row_dot(w: &Tensor, r: usize, v: &[f64]) -> f64 {
    let cols = v.len();
    let mut acc = 0.0;
    for c in 0..cols {
        acc += w.data()[r * cols + c] * v[c];
    }
    acc
}

/// Straight-line scalar evaluation of one LSTM step.
pub fn lstm_reference(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let mut h_out = vec![0.0; n];
    let mut c_out = vec![0.0; n];
    for r in 0..n {
        let i = sig(row_dot(&p.w_xi, r, x) + row_dot(&p.w_hi, r, h) + p.b_i.data()[r]);
        let f = sig(row_dot(&p.w_xf, r, x) + row_dot(&p.w_hf, r, h) + p.b_f.data()[r]);
        let g = (row_dot(&p.w_xg, r, x) + row_dot(&p.w_hg, r, h) + p.b_g.data()[r]).tanh();
        c_out[r] = f * c[r] + i * g;
        let o = sig(row_dot(&p.w_xo, r, x) + row_dot(&p.w_ho, r, h) + p.b_o.data()[r]);
        h_out[r] = o * c_out[r].tanh();
    }
    (h_out, c_out)
}

fn run_step(p: &LstmParams, x: &[f64], state: &LstmState) -> (Vec<f64>, Vec<f64>) {
    let mut g = Graph::new();
    let vars = p.bind(&mut |t| g.constant_ref(t));
    let xv = g.constant(Tensor::vector(x.to_vec()).expect("x"));
    let s = state.bind(&mut g);
    let out = lstm_step(&mut g, &vars, xv, s).expect("lstm_step");
    (g.value(out.h).data().to_vec(), g.value(out.c).data().to_vec())
}

fn filled(p: &mut LstmParams, v: f64) {
    for t in p.tensors_mut() {
        t.data_mut().fill(v);
    }
}

/// The three worked examples plus `random` random cases against
/// [`lstm_reference`].
pub fn lstm_oracle(random: usize, seed: u64) -> Check {
    let tol = 1e-12;
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol) && a.len() == b.len();
    let state = |h: Vec<f64>, c: Vec<f64>| LstmState {
        h: Tensor::vector(h).unwrap(),
        c: Tensor::vector(c).unwrap(),
    };

    // Zero parameters, zero cell.
    let p = LstmParams::zeros(3, 2);
    let (h, c) = run_step(&p, &[0.3, -1.0, 2.0], &LstmState::zeros(2));
    if !close(&h, &[0.0, 0.0]) || !close(&c, &[0.0, 0.0]) {
        return Err(format!("zero example: h {h:?} c {c:?}"));
    }
    // Zero parameters, unit cell.
    let p = LstmParams::zeros(1, 1);
    let (h, c) = run_step(&p, &[0.7], &state(vec![0.0], vec![1.0]));
    if !close(&c, &[0.5]) || !close(&h, &[0.5 * 0.5f64.tanh()]) || (h[0] - 0.23105857).abs() > 1e-8 {
        return Err(format!("unit-cell example: h {h:?} c {c:?}"));
    }
    // Unit weights, x = 1, zero state.
    let mut p = LstmParams::zeros(1, 1);
    filled(&mut p, 1.0);
    for b in [&mut p.b_i, &mut p.b_f, &mut p.b_g, &mut p.b_o] {
        b.data_mut().fill(0.0);
    }
    let (h, c) = run_step(&p, &[1.0], &LstmState::zeros(1));
    let s1 = sig(1.0);
    let c_expect = s1 * 1.0f64.tanh();
    if !close(&c, &[c_expect]) || !close(&h, &[s1 * c_expect.tanh()]) {
        return Err(format!("unit-weight example: h {h:?} c {c:?}"));
    }

    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for trial in 0..random {
        let (input, hidden) = (rng.range_inclusive(1, 5), rng.range_inclusive(1, 5));
        let mut p = LstmParams::init(input, hidden, &mut rng);
        for t in p.tensors_mut() {
            for v in t.data_mut() {
                *v = rng.uniform_range(-2.0, 2.0);
            }
        }
        let x: Vec<f64> = (0..input).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let h0: Vec<f64> = (0..hidden).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let c0: Vec<f64> = (0..hidden).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let (h, c) = run_step(&p, &x, &state(h0.clone(), c0.clone()));
        let (hr, cr) = lstm_reference(&p, &x, &h0, &c0);
        for (a, b) in h.iter().chain(&c).zip(hr.iter().chain(&cr)) {
            worst = worst.max((a - b).abs());
        }
        if worst > tol {
            return Err(format!("random case {trial}: max deviation {worst:.3e}"));
        }
    }
    Ok(format!("3 worked examples and {random} random cases, max deviation {worst:.1e}"))
}

/// Encoder table rows, ReLU placement and the stride arithmetic at 64x64 and
/// 384x1280, including a real encoder pass at the KITTI extents.
pub fn architecture() -> Check {
    let rows: Vec<(usize, usize, usize, usize)> = CONV_TABLE
        .iter()
        .map(|l| (l.receptive_field, l.padding, l.stride, l.out_channels))
        .collect();
    let expected = [
        (7, 3, 2, 64),
        (5, 2, 2, 128),
        (5, 2, 2, 256),
        (3, 1, 1, 256),
        (3, 1, 2, 512),
        (3, 1, 1, 512),
        (3, 1, 2, 512),
        (3, 1, 1, 512),
        (3, 1, 2, 1024),
    ];
    if rows != expected {
        return Err(format!("layer table {rows:?}"));
    }
    let names: Vec<&str> = CONV_TABLE.iter().map(|l| l.name).collect();
    let expected_names = ["Conv1", "Conv2", "Conv3", "Conv3_1", "Conv4", "Conv4_1", "Conv5", "Conv5_1", "Conv6"];
    if names != expected_names {
        return Err(format!("layer names {names:?}"));
    }
    let relu: Vec<bool> = CONV_TABLE.iter().map(|l| l.relu_after).collect();
    if relu != [true, true, true, true, true, true, true, true, false] {
        return Err(format!("relu placement {relu:?}"));
    }
    let kitti = conv_output_shapes(384, 1280);
    if kitti.first() != Some(&[64, 192, 640]) || kitti.last() != Some(&[1024, 6, 20]) {
        return Err(format!("384x1280 shapes {kitti:?}"));
    }
    if feature_len(384, 1280) != 122_880 || feature_len(64, 64) != 1024 {
        return Err("flattened feature sizes".into());
    }
    let mut rng = Rng::new(3);
    for (h, w, f) in [(64, 64, 1024), (384, 1280, 122_880)] {
        let model = build_model(h, w, 4, &mut rng).map_err(|e| e.to_string())?;
        if model.lstm1.w_xi.shape() != [4, f] {
            return Err(format!("lstm1 input size {:?} at {h}x{w}", model.lstm1.w_xi.shape()));
        }
        let pair = random_tensor(vec![6, h, w], &mut rng);
        let mut g = Graph::new();
        let vars = model.bind(&mut g, false);
        let x = g.constant_ref(&pair);
        let out = cnn_forward(&mut g, &model, &vars, x).map_err(|e| e.to_string())?;
        if g.shape(out) != [f] {
            return Err(format!("encoder output {:?} at {h}x{w}", g.shape(out)));
        }
    }
    let default = build_model(64, 64, 1000, &mut rng).map_err(|e| e.to_string())?;
    if default.lstm2.w_hi.shape() != [1000, 1000] || default.head_weight.shape() != [6, 1000] {
        return Err("default hidden sizes".into());
    }
    Ok("9 layers match; 384x1280 -> 122880 and 64x64 -> 1024 features".into())
}

/// The three worked loss examples and a finite-difference check of the
/// loss gradient with respect to the estimates.
pub fn loss_conformance(trials: usize, seed: u64) -> Check {
    let p = |x: f64| Pose6::new([x, 0.0, 0.0], [0.0; 3]);
    let r = |x: f64| Pose6::new([0.0; 3], [x, 0.0, 0.0]);
    let cases = [
        (vec![p(0.3)], vec![p(0.3)], 0.0),
        (vec![p(1.0)], vec![Pose6::zero()], 1.0),
        (vec![r(0.1)], vec![Pose6::zero()], 1.0),
    ];
    for (est, tgt, want) in &cases {
        let got = pose_loss_value(est, tgt, 100.0).map_err(|e| e.to_string())?;
        // 100 * 0.1^2 rounds to 1.0000000000000002 in binary.
        if (got - want).abs() > 4.0 * f64::EPSILON {
            return Err(format!("loss example expected {want}, got {got}"));
        }
    }
    // Central differences are exact on a quadratic, so a wide step only
    // shrinks round-off.
    let h = 1e-3;
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let steps = rng.range_inclusive(1, 4);
        let kappa = rng.uniform_range(0.5, 200.0);
        let est: Vec<Tensor> = (0..steps).map(|_| random_tensor(vec![6], &mut rng)).collect();
        let tgt: Vec<Pose6> = (0..steps).map(|_| Pose6::from_slice(random_tensor(vec![6], &mut rng).data())).collect();
        let value = |est: &[Tensor]| {
            let poses: Vec<Pose6> = est.iter().map(|t| Pose6::from_slice(t.data())).collect();
            pose_loss_value(&poses, &tgt, kappa).unwrap()
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = est.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = pose_loss(&mut g, &vars, &tgt, kappa).map_err(|e| e.to_string())?;
        let grads = g.backward(loss).map_err(|e| e.to_string())?;
        for (k, v) in vars.iter().enumerate() {
            let a = grads.get(*v).expect("estimate gradient");
            for j in 0..6 {
                let mut plus = est.clone();
                plus[k].data_mut()[j] += h;
                let mut minus = est.clone();
                minus[k].data_mut()[j] -= h;
                let numeric = (value(&plus) - value(&minus)) / (2.0 * h);
                worst = worst.max(rel_err(a.data()[j], numeric, 1e-6));
            }
        }
    }
    if worst >= 1e-6 {
        return Err(format!("loss gradient relative error {worst:.3e}"));
    }
    Ok(format!("3 worked examples exact; gradient max relative error {worst:.1e} over {trials} trials"))
}

pub fn random_rotation(rng: &mut Rng) -> Matrix3<f64> {
    euler_to_rotation(&Vector3::new(
        rng.uniform_range(-3.1, 3.1),
        rng.uniform_range(-1.5, 1.5),
        rng.uniform_range(-3.1, 3.1),
    ))
}

pub fn random_pose(rng: &mut Rng, reach: f64) -> PoseSE3 {
    PoseSE3 {
        rotation: random_rotation(rng),
        translation: Vector3::new(
            rng.uniform_range(-reach, reach),
            rng.uniform_range(-reach, reach),
            rng.uniform_range(-reach, reach),
        ),
    }
}

fn pose_gap(a: &PoseSE3, b: &PoseSE3) -> f64 {
    (a.rotation - b.rotation).norm().max((a.translation - b.translation).norm())
}

/// Euler round trips off gimbal lock, trajectory decomposition and
/// recomposition, and the composition law of relative poses.
pub fn geometry_round_trips(count: usize, seed: u64) -> Check {
    let tol = 1e-9;
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let phi = Vector3::new(
            rng.uniform_range(-3.14, 3.14),
            rng.uniform_range(-FRAC_PI_2 + 0.1, FRAC_PI_2 - 0.1),
            rng.uniform_range(-3.14, 3.14),
        );
        let back = rotation_to_euler(&euler_to_rotation(&phi)).map_err(|e| e.to_string())?;
        worst = worst.max((back - phi).amax());
    }
    if worst > tol {
        return Err(format!("euler round trip error {worst:.3e}"));
    }
    let euler_worst = worst;

    let poses: Vec<PoseSE3> = (0..count).map(|_| random_pose(&mut rng, 50.0)).collect();
    let rel = relative_motions(&poses).map_err(|e| e.to_string())?;
    let rebuilt = compose_trajectory(&rel, &poses[0]);
    if rebuilt.len() != poses.len() {
        return Err(format!("recomposed {} poses from {}", rebuilt.len(), poses.len()));
    }
    // Errors compound along the chain, so compare every pose.
    let traj_worst = poses.iter().zip(&rebuilt).map(|(a, b)| pose_gap(a, b)).fold(0.0, f64::max);
    if traj_worst > tol {
        return Err(format!("trajectory round trip error {traj_worst:.3e}"));
    }

    let mut law_worst = 0.0f64;
    for w in poses.windows(3) {
        let direct = relative_pose(&w[0], &w[2]);
        let chained = relative_pose(&w[0], &w[1]).compose(&relative_pose(&w[1], &w[2]));
        law_worst = law_worst.max(pose_gap(&direct, &chained));
        law_worst = law_worst.max(pose_gap(&relative_pose(&w[0], &w[0]), &PoseSE3::identity()));
    }
    if law_worst > tol {
        return Err(format!("composition law error {law_worst:.3e}"));
    }
    Ok(format!(
        "{count} poses: euler {euler_worst:.1e}, trajectory {traj_worst:.1e}, composition {law_worst:.1e}"
    ))
}

/// A random smooth trajectory of `frames` poses advancing `step` meters
/// per frame with gentle turns.
pub fn random_trajectory(frames: usize, step: f64, rng: &mut Rng) -> Trajectory {
    let mut poses = vec![random_pose(rng, 10.0)];
    for _ in 1..frames {
        let turn = euler_to_rotation(&Vector3::new(
            rng.uniform_range(-0.01, 0.01),
            rng.uniform_range(-0.05, 0.05),
            rng.uniform_range(-0.01, 0.01),
        ));
        let motion = PoseSE3 {
            rotation: turn,
            translation: Vector3::new(rng.uniform_range(-0.1, 0.1), 0.0, step * rng.uniform_range(0.5, 1.5)),
        };
        let next = poses.last().unwrap().compose(&motion);
        poses.push(next);
    }
    Trajectory::new(poses, 10.0).expect("trajectory")
}

fn straight_line(frames: usize, step: f64) -> Trajectory {
    let poses = (0..frames)
        .map(|k| PoseSE3::from_translation(Vector3::new(0.0, 0.0, step * k as f64)))
        .collect();
    Trajectory::new(poses, 10.0).expect("line")
}

/// Zero error on identical trajectories, 10% drift on a 1.1x scaled line
/// at every length, and invariance under a common rigid transform.
pub fn metric_oracle(count: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let mut rows_seen = 0;
    let mut invariance_worst = 0.0f64;
    for t in 0..count {
        let gt = random_trajectory(120, rng.uniform_range(4.0, 9.0), &mut rng);
        let rows = segment_errors(&gt, &gt, &SUBSEQUENCE_LENGTHS, 10).map_err(|e| e.to_string())?;
        if let Some(r) = rows.iter().find(|r| r.t_err != 0.0 || r.r_err != 0.0) {
            return Err(format!("trajectory {t}: identical estimate gave {r:?}"));
        }
        rows_seen += rows.len();

        let est = random_trajectory(120, 6.0, &mut rng);
        let est = Trajectory::new(est.poses, 10.0).unwrap();
        let common = random_pose(&mut rng, 100.0);
        let moved = |tr: &Trajectory| {
            Trajectory::new(tr.poses.iter().map(|p| common.compose(p)).collect(), tr.frame_rate).unwrap()
        };
        let a = segment_errors(&gt, &est, &SUBSEQUENCE_LENGTHS, 10).map_err(|e| e.to_string())?;
        let b = segment_errors(&moved(&gt), &moved(&est), &SUBSEQUENCE_LENGTHS, 10).map_err(|e| e.to_string())?;
        if a.len() != b.len() {
            return Err(format!("trajectory {t}: {} rows before transform, {} after", a.len(), b.len()));
        }
        for (x, y) in a.iter().zip(&b) {
            invariance_worst = invariance_worst
                .max((x.t_err - y.t_err).abs())
                .max((x.r_err - y.r_err).abs())
                .max((x.speed - y.speed).abs());
        }
    }
    if rows_seen == 0 {
        return Err("no subsequences were long enough".into());
    }
    if invariance_worst > 1e-9 {
        return Err(format!("left-invariance error {invariance_worst:.3e}"));
    }

    let gt = straight_line(900, 1.0);
    let est = straight_line(900, 1.1);
    let rows = segment_errors(&gt, &est, &SUBSEQUENCE_LENGTHS, 10).map_err(|e| e.to_string())?;
    for length in SUBSEQUENCE_LENGTHS {
        let at: Vec<_> = rows.iter().filter(|r| r.length == length).collect();
        if at.is_empty() {
            return Err(format!("no rows at length {length}"));
        }
        if let Some(r) = at.iter().find(|r| (r.t_err - 0.1).abs() > 1e-9 || r.r_err != 0.0) {
            return Err(format!("scaled line at {length} m: {r:?}"));
        }
    }
    Ok(format!(
        "{count} identical pairs all zero ({rows_seen} rows); scaled line 10% at all 8 lengths; invariance {invariance_worst:.1e}"
    ))
}

fn tiny_segment(rng: &mut Rng, label: &str) -> Segment {
    let pairs = Tensor::uniform(vec![2, 6, 64, 64], -20.0, 20.0, rng);
    Segment {
        sequence: label.into(),
        start: 0,
        pairs,
        targets: vec![Pose6::new([0.0, 0.0, 1.0], [0.0; 3]); 2],
    }
}

/// Injected validation losses that improve for `best` epochs and then rise:
/// training must stop exactly `patience` epochs later and return the model
/// as it was after epoch `best`.
pub fn early_stopping(patience: usize, best: usize) -> Check {
    let mut rng = Rng::new(9);
    let model = build_model(64, 64, 8, &mut rng).map_err(|e| e.to_string())?;
    let segments = vec![tiny_segment(&mut rng, "a"), tiny_segment(&mut rng, "b")];
    let config = TrainConfig {
        max_epochs: best + patience + 20,
        early_stop_patience: patience,
        ..TrainConfig::default()
    };
    let mut snapshot = None;
    let outcome = train_with_validator(model, &segments, &config, |m, epoch, _| {
        if epoch == best {
            snapshot = Some(m.clone());
        }
        Ok(if epoch <= best { 10.0 - epoch as f64 } else { 10.0 + epoch as f64 })
    })
    .map_err(|e| e.to_string())?;
    let epochs = outcome.log.epochs.len();
    if epochs != best + patience {
        return Err(format!("ran {epochs} epochs, expected {}", best + patience));
    }
    if !outcome.stopped_early || outcome.log.best_epoch != Some(best) {
        return Err(format!("stopped_early {} best {:?}", outcome.stopped_early, outcome.log.best_epoch));
    }
    if snapshot.as_ref() != Some(&outcome.best) {
        return Err("returned model differs from the best-epoch snapshot".into());
    }
    Ok(format!("stopped after {epochs} epochs; best epoch {best} returned exactly"))
}

/// Written pose files parse back within 1e-7 and the published first line
/// of KITTI sequence 00 parses to the identity.
pub fn format_fidelity(count: usize, seed: u64) -> Check {
    let mut rng = Rng::new(seed);
    let poses: Vec<PoseSE3> = (0..count).map(|_| random_pose(&mut rng, 500.0)).collect();
    let text = format_poses(&poses);
    let back = parse_poses(&text, Path::new("generated")).map_err(|e| e.to_string())?;
    let worst = poses
        .iter()
        .zip(&back)
        .map(|(a, b)| (a.rotation - b.rotation).amax().max((a.translation - b.translation).amax()))
        .fold(0.0, f64::max);
    if back.len() != poses.len() || worst > 1e-7 {
        return Err(format!("{} of {} poses back, max deviation {worst:.3e}", back.len(), poses.len()));
    }
    let first = "1.000000e+00 9.043680e-12 2.326809e-11 5.551115e-17 9.043683e-12 1.000000e+00 2.392370e-10 3.330669e-16 2.326810e-11 2.392370e-10 9.999999e-01 -4.440892e-16\n";
    let parsed = parse_poses(first, Path::new("00.txt")).map_err(|e| e.to_string())?;
    let gap = pose_gap(&parsed[0], &PoseSE3::identity());
    if parsed.len() != 1 || gap > 1e-6 {
        return Err(format!("KITTI 00 first line deviates from identity by {gap:.3e}"));
    }
    let exact = parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n", Path::new("identity")).map_err(|e| e.to_string())?;
    if exact[0] != PoseSE3::identity() {
        return Err("exact identity line".into());
    }
    Ok(format!("{count} poses round trip within {worst:.1e}; KITTI 00 frame 0 is the identity"))
}
