mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tclmix::DisorderKind;

/// Spectral theory and particle simulation of randomized thermostatic load ensembles.
#[derive(Debug, Parser)]
#[command(name = "tclmix", version)]
pub struct Cli {
    /// Worker threads for the particle simulation.
    #[arg(long, global = true, env = "TCL_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues for |k| <= kmax, or the four leading eigenvalues along a beta sweep.
    Spectrum(SpectrumArgs),
    /// Sweep tau at fixed r and locate the fastest-mixing point.
    Bifurcation(BifurcationArgs),
    /// Closed-form disorder envelopes, optionally next to the quadrature oracle.
    Envelope(EnvelopeArgs),
    /// Run the particle simulation.
    Simulate(SimulateArgs),
    /// Simulate and compare with theory.
    Compare(CompareArgs),
    /// Disorder-hierarchy dataset at r = 100.
    Fig1(PresetArgs),
    /// Theory-versus-simulation dataset at r = 10.
    Fig3(PresetArgs),
}

#[derive(Debug, Args, serde::Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 10.0)]
    pub r: f64,
    #[arg(long, default_value_t = 3.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 5)]
    pub kmax: i32,
    /// Emit the four leading eigenvalues over a log-spaced beta grid instead.
    #[arg(long)]
    pub beta_sweep: bool,
    #[arg(long, default_value_t = 0.05)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// CSV output path; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(allow_negative_numbers = true)]
pub struct BifurcationArgs {
    #[arg(long, default_value_t = 10.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, serde::Serialize)]
#[command(allow_negative_numbers = true)]
pub struct EnvelopeArgs {
    /// gaussian, lorentzian, laplacian, uniform or all.
    #[arg(long, default_value = "all")]
    pub kind: String,
    #[arg(long, default_value_t = 3.0)]
    pub tau0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = 100.0)]
    pub r: f64,
    #[arg(long, default_value_t = 180.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 361)]
    pub points: usize,
    /// Add the quadrature oracle column.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default, serde::Serialize)]
pub struct SimFlags {
    /// JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kind: Option<DisorderKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub record_stride: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    /// Run directory.
    #[arg(long, default_value = "tclmix_simulate")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    #[arg(long, default_value = "tclmix_compare")]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct PresetArgs {
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad input from the user; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<tclmix::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let built = if n == 0 {
            Err("--threads must be at least 1".to_string())
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        };
        if let Err(e) = built {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
