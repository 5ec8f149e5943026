use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use richcld::harness::{run, Command, ExperimentConfig, RunOptions, VERSION};

#[derive(Parser)]
#[command(name = "richcld", version, about = "Experiments on rich-observation continuous latent MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML experiment config; the command's preset when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, then runs/<command>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Print the resolved plan without running anything.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Sample observations and write them as images.
    EnvGen,
    /// Representation learning on a maze, with cluster analysis.
    TrainRep,
    /// Online exploration with the bonus-driven planner.
    Criee,
    /// Version-space exploration over a finite value class.
    Golf,
    /// Offline dynamic programming from logged data.
    Offline,
    /// Exact checks on the counterexample family.
    TheoryChecks,
    /// Empirical TV-Lipschitz audit of the dynamics.
    Audit,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::EnvGen => Command::EnvGen,
            Cmd::TrainRep => Command::TrainRep,
            Cmd::Criee => Command::Criee,
            Cmd::Golf => Command::Golf,
            Cmd::Offline => Command::Offline,
            Cmd::TheoryChecks => Command::TheoryChecks,
            Cmd::Audit => Command::Audit,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = Command::from(cli.command);
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::preset(cmd),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(cmd.name()));
    let opts = RunOptions { out, seed: cli.seed, dry_run: cli.dry_run };
    match run(cmd, &cfg, &opts) {
        Ok(report) => {
            if cli.dry_run {
                print!("{}", report.plan);
            } else {
                print!("{}", report.summary);
                eprintln!("{VERSION}: wrote {} files to {}", report.files.len(), opts.out.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
