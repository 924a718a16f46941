mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Block compressive-sensing reconstruction: training, inference, classical
/// ISTA and numerical self-checks.
#[derive(Parser, Debug)]
#[command(name = "fsoinet", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// `key = value` settings file; flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Sampling ratio M/N in (0, 1].
    #[arg(long, global = true)]
    ratio: Option<f64>,

    #[arg(long, global = true)]
    block_side: Option<usize>,

    #[arg(long, global = true)]
    channels: Option<usize>,

    #[arg(long, global = true)]
    phases: Option<usize>,

    /// fsoinet, oinet or vnet.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// f32 or f64 arithmetic.
    #[arg(long, global = true)]
    precision: Option<String>,

    #[arg(long, global = true, env = config::OUT_DIR_ENV, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network on image patches and write a checkpoint.
    Train(TrainArgs),
    /// Reconstruct images with a trained checkpoint.
    Reconstruct(ReconstructArgs),
    /// Classical ISTA reconstruction with a Gaussian sampling matrix.
    Pgd(PgdArgs),
    /// Score a checkpoint on every image in a directory.
    Eval(EvalArgs),
    /// Run the gradient and identity self-checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of training images.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patch_limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Also write the initial (ΦᵀY) reconstruction.
    #[arg(long)]
    pub emit_init: bool,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PgdArgs {
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Orthonormalize the rows of Φ before sampling.
    #[arg(long)]
    pub orthonormal_phi: bool,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Round reconstructions to 8-bit levels before scoring.
    #[arg(long)]
    pub quantize_8bit: bool,
    pub dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Corrupt the convolution backward pass (checks that the suite notices).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Settings file first, then environment, then flags.
fn resolve(g: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    let mut set = |key: &str, value: Option<String>| -> Result<()> {
        match value {
            Some(v) => cfg.set(key, &v),
            None => Ok(()),
        }
    };
    set("seed", g.seed.map(|v| v.to_string()))?;
    set("ratio", g.ratio.map(|v| v.to_string()))?;
    set("block_side", g.block_side.map(|v| v.to_string()))?;
    set("channels", g.channels.map(|v| v.to_string()))?;
    set("phases", g.phases.map(|v| v.to_string()))?;
    set("mode", g.mode.clone())?;
    set("precision", g.precision.clone())?;
    set("out_dir", g.out_dir.as_ref().map(|p| p.display().to_string()))?;
    match command {
        Command::Train(a) => {
            set("dataset", a.dataset.as_ref().map(|p| p.display().to_string()))?;
            set("epochs", a.epochs.map(|v| v.to_string()))?;
            set("batch_size", a.batch_size.map(|v| v.to_string()))?;
            set("patch_limit", a.patch_limit.map(|v| v.to_string()))?;
        }
        Command::Pgd(a) => {
            set("step_size", a.step_size.map(|v| v.to_string()))?;
            set("lambda", a.lambda.map(|v| v.to_string()))?;
            set("iters", a.iters.map(|v| v.to_string()))?;
            if a.orthonormal_phi {
                set("orthonormal_phi", Some("true".into()))?;
            }
        }
        Command::Eval(a) => {
            if a.quantize_8bit {
                set("quantize_8bit", Some("true".into()))?;
            }
        }
        Command::Reconstruct(_) | Command::Verify(_) => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = resolve(&cli.global, &cli.command).and_then(|cfg| {
        log::debug!("resolved configuration:\n{}", cfg.render());
        match &cli.command {
            Command::Train(_) => commands::train(&cfg),
            Command::Reconstruct(a) => commands::reconstruct(&cfg, a),
            Command::Pgd(a) => commands::pgd(&cfg, a),
            Command::Eval(a) => commands::eval(&cfg, a),
            Command::Verify(a) => commands::verify(a),
        }
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
