use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcnn_vo_cli::{run, Command, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "rcnn-vo", version, about = "Monocular visual odometry with a recurrent convolutional network")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train on the configured sequences and write a checkpoint.
    Train(Common),
    /// Estimate trajectories with a trained checkpoint.
    Infer(Common),
    /// Score estimated trajectories against ground truth.
    Eval(Common),
    /// Generate a synthetic dataset in KITTI layout.
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set max_epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let (command, args) = match cli.command {
        Sub::Train(a) => (Command::Train, a),
        Sub::Infer(a) => (Command::Infer, a),
        Sub::Eval(a) => (Command::Eval, a),
        Sub::Synth(a) => (Command::Synth, a),
    };
    let result = RunConfig::load(&args.config, &args.overrides).and_then(|cfg| run(command, &cfg));
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
