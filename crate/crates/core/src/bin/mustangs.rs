use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mustangs::harness::{collect_runs, compare_runs, run_experiment, sweep, RunConfig, RunStatus};
use mustangs::Result;

#[derive(Parser)]
#[command(name = "mustangs", version, about = "Spatial coevolutionary GAN training on 2-D synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write run.csv, summary.txt and weights.txt.
    Run(RunArgs),
    /// Summarize and test final scores across run directories.
    Compare {
        /// Run directories, or directories containing run directories.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Repeat `run` over a list of seeds; each run goes to OUT/<variant>-seed<seed>.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// mustangs, lip-bce, lip-mse, lip-heu, e-gan or gan-bce.
    #[arg(long)]
    variant: Option<String>,
    /// Grid size as MxN.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// sequential or async.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the flags above.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("variant", self.variant.clone()),
            ("grid", self.grid.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| mustangs::Error::Parse(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let log = run_experiment(&cfg)?;
            let s = &log.summary;
            println!(
                "{} seed {}: {} epochs, best FD {:.6}, TVD {:.4}, coverage {}",
                s.variant, s.seed, s.epochs_completed, s.best_fd, s.tvd, s.coverage
            );
            if let RunStatus::Failed(reason) = &s.status {
                eprintln!("run failed: {reason}");
                return Ok(false);
            }
            Ok(true)
        }
        Command::Compare { inputs, alpha } => {
            let runs = collect_runs(&inputs)?;
            print!("{}", compare_runs(&runs, alpha)?);
            Ok(true)
        }
        Command::Sweep { run, seeds } => {
            let cfg = run.resolve()?;
            let mut ok = true;
            for log in sweep(&cfg, &seeds)? {
                let s = &log.summary;
                println!("{} seed {}: best FD {:.6}, coverage {}", s.variant, s.seed, s.best_fd, s.coverage);
                ok &= s.status == RunStatus::Completed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
