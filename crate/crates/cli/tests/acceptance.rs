//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rcnn_vo_cli::{run, Command, RunConfig};
use rcnn_vo_core::kitti::{load_pose_file, pose_path};
use rcnn_vo_core::TrainLog;
use support::Check;

const OVERFIT_LOSS: f64 = 1e-3;
const OVERFIT_ENDPOINT: f64 = 0.05;
const OVERFIT_BUDGET_SECONDS: f64 = 30.0 * 60.0;

/// Artifacts of one synth, train, infer, eval pass.
struct Closure {
    loss_table: Vec<u8>,
    trajectories: Vec<(String, Vec<u8>)>,
    log: TrainLog,
    /// (sequence, endpoint error, path length)
    endpoints: Vec<(String, f64, f64)>,
    seconds: f64,
}

fn command(cmd: Command, config: &Path, overrides: &[String]) -> Result<PathBuf, String> {
    let cfg = RunConfig::load(config, overrides).map_err(|e| e.message)?;
    run(cmd, &cfg).map_err(|e| format!("{}: {}", cmd.name(), e.message))
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// The overfit fixture: two 24-frame 64x64 sequences (straight, turn), the
/// default training configuration with `max_epochs = 300`, then inference
/// and evaluation on the training sequences themselves.
fn overfit_closure(root: &Path) -> Result<Closure, String> {
    let ids = ["00", "01"];
    let conf = root.join("run.conf");
    fs::create_dir_all(root).map_err(|e| e.to_string())?;
    fs::write(&conf, format!("output_dir = {}\n", root.join("out").display())).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let data = command(Command::Synth, &conf, &["synth_sequences=00:straight,01:turn".into()])?;
    let data_key = format!("dataset_root={}", data.display());
    let train = command(
        Command::Train,
        &conf,
        &[data_key.clone(), "train_sequences=00 01".into(), "max_epochs=300".into()],
    )?;
    let checkpoint = format!("checkpoint={}", train.join("checkpoint").display());
    let infer = command(Command::Infer, &conf, &[data_key.clone(), checkpoint, "sequences=00 01".into()])?;
    let estimates = format!("estimate_dir={}", infer.display());
    command(Command::Eval, &conf, &[data_key, estimates, "sequences=00 01".into()])?;
    let seconds = start.elapsed().as_secs_f64();

    let loss_path = train.join("loss.csv");
    let log = TrainLog::read_table(&loss_path).map_err(|e| e.to_string())?;
    let mut trajectories = Vec::new();
    let mut endpoints = Vec::new();
    for id in ids {
        let est_path = infer.join(format!("{id}.txt"));
        let est = load_pose_file(&est_path).map_err(|e| e.to_string())?;
        let gt = load_pose_file(&pose_path(&data, id)).map_err(|e| e.to_string())?;
        let path_length: f64 = gt.windows(2).map(|w| (w[1].translation - w[0].translation).norm()).sum();
        let (Some(e), Some(g)) = (est.last(), gt.last()) else {
            return Err(format!("sequence {id}: empty trajectory"));
        };
        endpoints.push((id.to_string(), (e.translation - g.translation).norm(), path_length));
        trajectories.push((id.to_string(), read(&est_path)?));
    }
    Ok(Closure {
        loss_table: read(&loss_path)?,
        trajectories,
        log,
        endpoints,
        seconds,
    })
}

fn overfit_check(c: &Closure) -> Check {
    let min_loss = c.log.epochs.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min);
    let last = c.log.epochs.last().ok_or("empty loss table")?;
    let mut detail = format!(
        "{} epochs, min train loss {min_loss:.3e}, last {:.3e}",
        c.log.epochs.len(),
        last.train_loss
    );
    let mut ok = min_loss < OVERFIT_LOSS;
    for (id, err, len) in &c.endpoints {
        let ratio = err / len;
        detail += &format!(", seq {id} endpoint {err:.3} m of {len:.1} m ({:.2}%)", 100.0 * ratio);
        ok &= ratio < OVERFIT_ENDPOINT;
    }
    detail += &format!(", {:.0} s", c.seconds);
    ok &= c.seconds < OVERFIT_BUDGET_SECONDS;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism_check(a: &Closure, b: &Closure) -> Check {
    if a.loss_table != b.loss_table {
        return Err("loss tables differ".into());
    }
    for ((id, x), (_, y)) in a.trajectories.iter().zip(&b.trajectories) {
        if x != y {
            return Err(format!("trajectory {id} differs"));
        }
    }
    Ok(format!(
        "loss table ({} bytes) and {} trajectory files byte-identical",
        a.loss_table.len(),
        a.trajectories.len()
    ))
}

fn timed(limit_seconds: f64, check: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let out = check();
    let secs = start.elapsed().as_secs_f64();
    let with_time = |s: String| format!("{s}, {secs:.1} s");
    match out {
        Ok(s) if secs < limit_seconds => Ok(with_time(s)),
        Ok(s) => Err(with_time(format!("{s}; over the {limit_seconds:.0} s budget"))),
        Err(s) => Err(with_time(s)),
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut first = None;
    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    let mut report = |n: u32, name: &'static str, check: Check| {
        match &check {
            Ok(s) => println!("criterion {n}: PASS {name}: {s}"),
            Err(s) => println!("criterion {n}: FAIL {name}: {s}"),
        }
        results.push((n, name, check));
    };

    report(
        1,
        "gradient correctness",
        timed(300.0, || {
            let p = support::primitive_gradients(100, 1)?;
            let e = support::end_to_end_gradients(200, 1000, 2)?;
            Ok(format!("{p}; {e}"))
        }),
    );
    report(2, "LSTM oracle", support::lstm_oracle(50, 3));
    report(3, "architecture conformance", support::architecture());
    report(4, "loss conformance", support::loss_conformance(200, 4));
    report(5, "geometry round trips", support::geometry_round_trips(1000, 5));
    report(6, "metric oracle", support::metric_oracle(100, 6));

    let closure_a = overfit_closure(&tmp.path().join("a"));
    match &closure_a {
        Ok(c) => report(7, "overfit closure", overfit_check(c)),
        Err(e) => report(7, "overfit closure", Err(e.clone())),
    }
    if let Ok(a) = closure_a {
        first = Some(a);
    }
    let det = match (&first, overfit_closure(&tmp.path().join("b"))) {
        (Some(a), Ok(b)) => determinism_check(a, &b),
        (None, _) => Err("first run failed".into()),
        (_, Err(e)) => Err(format!("second run failed: {e}")),
    };
    report(8, "determinism", det);

    report(
        9,
        "early stopping",
        support::early_stopping(3, 2).and_then(|a| Ok(format!("{a}; {}", support::early_stopping(1, 1)?))),
    );
    report(10, "format fidelity", support::format_fidelity(500, 10));

    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
