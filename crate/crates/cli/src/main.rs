#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod run;
mod svg;

use config::{FileConfig, Overrides, RunConfig, ScenarioKind};
use run::{Failure, Outcome};

#[derive(Parser)]
#[command(name = "fes-lab", version, about = "Sampled-data feedback equilibrium seeking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write trajectory.csv.
    Simulate(Common),
    /// Print the small-gain certificate for (tau, eps); exit 1 when not certified.
    Certify(Common),
    /// Evaluate the certificate over a (tau, eps) grid.
    Sweep(Common),
    /// Building day: FO controller vs thermostat vs feedforward.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let file = FileConfig::load(&self.config)?;
        RunConfig::resolve(
            file,
            Overrides {
                scenario: self.scenario,
                tau: self.tau,
                eps: self.eps,
                horizon: self.horizon,
                seed: self.seed,
                plot: self.plot,
                out: self.out.clone(),
            },
        )
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    type Cmd = fn(&RunConfig) -> Result<Outcome, Failure>;
    let (common, cmd): (&Common, Cmd) = match &cli.command {
        Command::Simulate(c) => (c, run::simulate),
        Command::Certify(c) => (c, run::certify),
        Command::Sweep(c) => (c, run::sweep),
        Command::Compare(c) => (c, run::compare),
    };
    let result = common.resolve().map_err(Failure::Config).and_then(|cfg| cmd(&cfg));
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotCertified) => ExitCode::from(1),
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Diverged { sample, time } => {
                    eprintln!("error: integration diverged in sample interval {sample} (t = {time})")
                }
            }
            ExitCode::from(f.code())
        }
    }
}
