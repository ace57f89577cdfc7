//! Experiment runner for the zygmund workbench.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 calibration or
//! witness failure, 3 invariant-suite failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(
    name = "zygmund",
    about = "Numerical experiments for Zygmund-dilation singular integral commutators",
    version
)]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the kernel decay parameter.
    #[arg(long, global = true)]
    theta: Option<f64>,

    /// Override the oscillation normalization exponent.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Override the source exponent.
    #[arg(long, global = true)]
    p: Option<f64>,

    /// Override the target exponent.
    #[arg(long, global = true)]
    q: Option<f64>,

    /// Override the dyadic depth range, e.g. 0..3
    #[arg(long, global = true, value_parser = parse_depths)]
    depths: Option<(u32, u32)>,

    /// Override the grid resolution, e.g. 12x12x12
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<[usize; 3]>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel health: size and continuity bound checks plus calibration.
    Kernels {
        #[command(subcommand)]
        cmd: KernelsCmd,
    },
    /// Oscillation norms and the Hölder characterization.
    Norms {
        #[command(subcommand)]
        cmd: NormsCmd,
    },
    /// Approximate weak factorization verification.
    Awf {
        #[command(subcommand)]
        cmd: AwfCmd,
    },
    /// Off-diagonal pairing constants.
    Off {
        #[command(subcommand)]
        cmd: OffCmd,
    },
    /// Compactness obstruction probes.
    Compact {
        #[command(subcommand)]
        cmd: CompactCmd,
    },
    /// Frequency multiplier audits.
    Multiplier {
        #[command(subcommand)]
        cmd: MultiplierCmd,
    },
}

#[derive(Subcommand, Debug)]
enum KernelsCmd {
    /// Run the size, continuity and calibration checks.
    Check,
}

#[derive(Subcommand, Debug)]
enum NormsCmd {
    /// Estimate the oscillation norm over the dyadic family.
    Bmo,
    /// Compare the oscillation norm with the Hölder seminorm.
    Equivalence,
}

#[derive(Subcommand, Debug)]
enum AwfCmd {
    /// Factorize and certify oscillation bounds over the rectangle sweep.
    Verify,
}

#[derive(Subcommand, Debug)]
enum OffCmd {
    /// Lower-estimate the off-diagonal pairing constant.
    Estimate,
}

#[derive(Subcommand, Debug)]
enum CompactCmd {
    /// Run the three-axis shrinking probe with certificates and selection.
    Probe,
}

#[derive(Subcommand, Debug)]
enum MultiplierCmd {
    /// Derivative-bound and unboundedness audit of the explicit multiplier.
    Audit,
}

fn parse_depths(s: &str) -> Result<(u32, u32), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("expected MIN..MAX, got '{s}'"))?;
    let lo: u32 = lo.trim().parse().map_err(|e| format!("bad MIN: {e}"))?;
    let hi: u32 = hi.trim().parse().map_err(|e| format!("bad MAX: {e}"))?;
    if lo > hi {
        return Err("MIN must be <= MAX".into());
    }
    Ok((lo, hi))
}

fn parse_resolution(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(format!("expected N1xN2xN3, got '{s}'"));
    }
    let mut out = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p.trim().parse().map_err(|e| format!("bad axis {i}: {e}"))?;
        if out[i] == 0 {
            return Err("resolution axes must be positive".into());
        }
    }
    Ok(out)
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) {
    if let Some(seed) = cli.seed {
        cfg.params.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(theta) = cli.theta {
        cfg.kernel.theta = theta;
    }
    if let Some(alpha) = cli.alpha {
        cfg.params.alpha = Some(alpha);
    }
    if let Some(p) = cli.p {
        cfg.params.p = Some(p);
    }
    if let Some(q) = cli.q {
        cfg.params.q = Some(q);
    }
    if let Some((lo, hi)) = cli.depths {
        cfg.depths.min = lo;
        cfg.depths.max = hi;
    }
    if let Some(res) = cli.resolution {
        cfg.resolution.n = res;
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::from_path(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("[zygmund] {e}");
                return ExitCode::from(1);
            }
        },
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, &cli);
    if let Err(e) = cfg.validate() {
        eprintln!("[zygmund] {e}");
        return ExitCode::from(1);
    }

    let outcome = match &cli.command {
        Command::Kernels { cmd: KernelsCmd::Check } => commands::kernels_check(&cfg),
        Command::Norms { cmd: NormsCmd::Bmo } => commands::norms_bmo(&cfg),
        Command::Norms { cmd: NormsCmd::Equivalence } => commands::norms_equivalence(&cfg),
        Command::Awf { cmd: AwfCmd::Verify } => commands::awf_verify(&cfg),
        Command::Off { cmd: OffCmd::Estimate } => commands::off_estimate(&cfg),
        Command::Compact { cmd: CompactCmd::Probe } => commands::compact_probe(&cfg),
        Command::Multiplier { cmd: MultiplierCmd::Audit } => commands::multiplier_audit(&cfg),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("[zygmund] {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
