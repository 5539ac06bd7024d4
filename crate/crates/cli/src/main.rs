//! `timebin`: sweeps, discrimination runs and cutoff scans for the time-bin
//! cavity model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use timebin_core::experiments::{
    self, check_sweep, emit_report, emit_rows, parse_grid, write_output, ExperimentConfig,
    ExperimentError, OutputFormat,
};

#[derive(Parser)]
#[command(name = "timebin", version, about = "Time-bin MUB measurement with a Mach-Zehnder cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check |<m|phi_k>|^2 = 1/d for every pair.
    MubVerify {
        #[arg(long)]
        d: usize,
    },
    /// P_E and P_D2 against |R|^2.
    ErrorSweep(Overrides),
    /// Monte Carlo discrimination experiment.
    Discriminate(Overrides),
    /// Observed error and accepted rate against the cutoff N'.
    Tradeoff(Overrides),
    /// Print the default configuration as JSON.
    Defaults,
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    /// start:stop:step, inclusive, or a single value.
    #[arg(long)]
    r_grid: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n_prime: Option<usize>,
    /// Comma-separated cutoffs for `tradeoff`.
    #[arg(long, value_delimiter = ',')]
    n_prime_list: Option<Vec<usize>>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    p_dc: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

impl Overrides {
    fn resolve(self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(grid) = &self.r_grid {
            cfg.r_grid = parse_grid(grid)?;
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        if self.n_prime.is_some() {
            cfg.n_prime = self.n_prime;
        }
        if self.n_prime_list.is_some() {
            cfg.n_prime_list = self.n_prime_list;
        }
        if let Some(eta) = self.eta {
            cfg.eta = eta;
        }
        if let Some(p) = self.p_dc {
            cfg.p_dc = p;
        }
        if let Some(n) = self.trials {
            cfg.n_trials = n;
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if self.out.is_some() {
            cfg.output_path = self.out;
        }
        if let Some(f) = &self.format {
            cfg.output_format = f.parse::<OutputFormat>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::MubVerify { d } => {
            let report = experiments::mub_verify(d)?;
            println!(
                "d={} max |<m|phi_k>|^2 - 1/d = {:.3e} (tolerance {:.0e}): {}",
                report.d,
                report.max_deviation,
                report.tolerance,
                if report.pass { "PASS" } else { "FAIL" }
            );
            if !report.pass {
                return Err(ExperimentError::Invariant("MUB condition violated".into()));
            }
        }
        Command::ErrorSweep(o) => {
            let cfg = o.resolve()?;
            let rows = experiments::error_sweep(&cfg)?;
            write_output(&emit_rows(&rows, cfg.output_format)?, cfg.output_path.as_deref())?;
            check_sweep(&rows)?;
        }
        Command::Discriminate(o) => {
            let cfg = o.resolve()?;
            let report = experiments::discriminate(&cfg)?;
            write_output(&emit_report(&report, cfg.output_format)?, cfg.output_path.as_deref())?;
            eprint!("{}", report.summary_text());
        }
        Command::Tradeoff(o) => {
            let cfg = o.resolve()?;
            let rows = experiments::tradeoff(&cfg)?;
            write_output(&emit_rows(&rows, cfg.output_format)?, cfg.output_path.as_deref())?;
        }
        Command::Defaults => {
            println!("{}", ExperimentConfig::default().to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
