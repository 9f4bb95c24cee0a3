//! `qviterbi` command-line harness.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 bad config or
//! any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qviterbi::experiment::{self, ExperimentConfig, Fault, Mode, Outcome, StepRange};
use qviterbi::Result;

#[derive(Parser)]
#[command(name = "qviterbi", version, about = "Quantum Viterbi decoding laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal phase and success probability per trellis depth.
    Table(Common),
    /// Success probability across the phase unit for one received word.
    Sweep(Common),
    /// Monte Carlo decoding campaign through a binary symmetric channel.
    Decode(Common),
    /// Cross-module consistency checks; exits 1 on any failure.
    Verify(Common),
    /// Dense V block for one received block, with gate counts.
    Circuit(Common),
    /// Runs whatever mode the config (or saved record) names.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config or saved record; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Code as `k,n,m;g1,g2,...` with octal generators.
    #[arg(long)]
    code: Option<String>,
    /// Trellis depth `N` or inclusive range `A..B`.
    #[arg(long)]
    n_steps: Option<StepRange>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<f64>,
    /// Results CSV path; a `<stem>.record.json` is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Received bits for `sweep` (whole word) or `circuit` (one block).
    #[arg(long)]
    received: Option<String>,
    /// Campaign size for `decode`.
    #[arg(long)]
    blocks: Option<u64>,
    /// Decoder for `decode`: classical, iterated-qva, adaptive-qva, probabilistic-qva.
    #[arg(long)]
    mode: Option<Mode>,
    /// Largest error class in the adaptive schedule.
    #[arg(long)]
    max_errors: Option<usize>,
    /// Deliberate defect for `verify`: diffusion-sign or phase-conjugate.
    #[arg(long)]
    inject_fault: Option<Fault>,
}

impl Common {
    fn resolve(self, forced: Option<Mode>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() { cfg.$field = self.$field; }
            )*};
        }
        set!(code, n_steps, epsilon, seed, grid, blocks, max_errors, mode);
        set_opt!(omega, iterations, trials, received, inject_fault, out);
        if let Some(m) = forced {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Table(c) => experiment::cmd_table(&c.resolve(Some(Mode::TableReproduction))?),
        Command::Sweep(c) => experiment::cmd_sweep(&c.resolve(Some(Mode::OmegaSweep))?),
        Command::Verify(c) => experiment::cmd_verify(&c.resolve(Some(Mode::CircuitVerify))?),
        Command::Circuit(c) => experiment::cmd_circuit(&c.resolve(Some(Mode::Circuit))?),
        Command::Decode(c) => {
            let cfg = c.resolve(None)?;
            if !cfg.mode.is_decoder() {
                return Err(qviterbi::Error::Config(format!("decode needs a decoder mode, got {}", cfg.mode)));
            }
            experiment::cmd_decode(&cfg)
        }
        Command::Run(c) => experiment::run(&c.resolve(None)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match execute(cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match &outcome.record.config.out {
        Some(path) => match outcome.write(path) {
            Ok(record) => eprintln!("wrote {} and {}", path.display(), record.display()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => print!("{}", outcome.csv),
    }
    eprintln!("{}", outcome.report);
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
