use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seamloc::pipeline::{self, RunConfig};
use seamloc::{BackendKind, Error};

/// Seamless GNSS/UWB/PDR pedestrian localization with ESKF, FGO and PF back-ends.
#[derive(Parser)]
#[command(name = "seamloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate observation logs and ground truth from a scenario spec.
    Simulate(Common),
    /// Replay observation logs through the selected back-ends.
    Run(Common),
    /// Score back-end outputs against ground truth.
    Evaluate(Common),
    /// Evaluate several runs and tabulate them side by side.
    Compare {
        /// Run configs, one per scenario.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Directory for compare.csv and compare.txt.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario and particle filter seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated back-ends, e.g. `eskf,pf`.
    #[arg(long, value_delimiter = ',')]
    backend: Option<Vec<BackendKind>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        if let Some(b) = &self.backend {
            cfg.backends = b.clone();
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let sim = pipeline::cmd_simulate(&cfg)?;
            println!(
                "{} steps, {} GNSS fixes, {} UWB range sets -> {}",
                sim.steps.len(),
                sim.gnss.len(),
                sim.uwb.len(),
                cfg.out.display()
            );
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            for r in pipeline::cmd_run(&cfg)? {
                println!(
                    "{}: {} outputs, {} rejected fixes",
                    r.kind,
                    r.outputs.len(),
                    r.rejected_fixes
                );
            }
        }
        Command::Evaluate(c) => {
            let ev = pipeline::cmd_evaluate(&c.load()?)?;
            print!("{}", ev.table.to_text());
        }
        Command::Compare { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| RunConfig::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            print!("{}", pipeline::cmd_compare(&cfgs, &out)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
