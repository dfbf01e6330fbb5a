use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualtv_cli::config::{PartialConfig, RunConfig};
use dualtv_cli::pipeline::{run_compare, run_denoise, run_sweep_delta, run_sweep_domains};
use dualtv_cli::selftest::run_selftest;
use dualtv_cli::{config, CliError, CliResult};

/// Total variation image restoration via the dual formulation: a projected
/// accelerated gradient baseline and an overlapping additive Schwarz
/// solver, with convergence diagnostics.
#[derive(Parser)]
#[command(name = "dualtv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise one image and report energies, gaps and PSNR.
    Denoise(CommonArgs),
    /// Run the Schwarz solver across several overlap widths.
    SweepDelta(SweepDeltaArgs),
    /// Run the Schwarz solver across several subdomain grids at fixed
    /// d/delta.
    SweepDomains(SweepDomainsArgs),
    /// Solve the same problem with both solvers and compare energies.
    Compare(CommonArgs),
    /// Verify the discrete inequalities and plumbing; one line per check.
    Selftest,
}

#[derive(Args)]
struct CommonArgs {
    /// Key=value config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model: rof | tvh1.
    #[arg(long)]
    model: Option<String>,
    /// Fidelity weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Grayscale PGM (P2/P5) input image.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Synthetic image instead of a file: blocks | blocks-ramp.
    #[arg(long)]
    synthetic: Option<String>,
    /// Synthetic image width in pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Synthetic image height in pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Additive Gaussian noise variance.
    #[arg(long)]
    noise_variance: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver: schwarz | fista.
    #[arg(long)]
    solver: Option<String>,
    /// Subdomain grid, e.g. 2x2.
    #[arg(long)]
    domains: Option<String>,
    /// Overlap width in pixel layers.
    #[arg(long)]
    delta: Option<usize>,
    /// Correction damping factor.
    #[arg(long)]
    tau: Option<f64>,
    /// Outer iteration count.
    #[arg(long)]
    outer_iterations: Option<usize>,
    /// Local solver iteration cap.
    #[arg(long)]
    local_max_iterations: Option<usize>,
    /// Local solver stop tolerance (area-scaled divergence measure).
    #[arg(long)]
    local_tolerance: Option<f64>,
    /// Warm-start local solves from the previous corrections.
    #[arg(long)]
    warm_start: bool,
    /// Iteration budget when the solver is fista.
    #[arg(long)]
    fista_iterations: Option<usize>,
    /// Stop tolerance when the solver is fista.
    #[arg(long)]
    fista_tolerance: Option<f64>,
    /// Iteration budget for the reference energy.
    #[arg(long)]
    reference_iterations: Option<usize>,
    /// Record interval for the fista solver.
    #[arg(long)]
    log_every: Option<usize>,
    /// Write the restored image here (PGM binary).
    #[arg(long)]
    out_image: Option<PathBuf>,
    /// Write the convergence log here.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Output quantization depth (defaults to the source depth).
    #[arg(long)]
    out_maxval: Option<u16>,
    /// Zero the wall-time column for byte-reproducible output.
    #[arg(long)]
    omit_wall_time: bool,
    /// Worker count (speed only; results are identical for any value).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepDeltaArgs {
    /// Overlap widths to sweep, e.g. 2,4,8,16.
    #[arg(long, value_delimiter = ',', required = true)]
    deltas: Vec<usize>,
    /// Prefix for the per-point CSV files.
    #[arg(long)]
    csv_prefix: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepDomainsArgs {
    /// Subdomain grids to sweep, e.g. 2x2,4x4.
    #[arg(long, value_delimiter = ',', required = true)]
    domains_list: Vec<String>,
    /// Fixed ratio of image side to overlap width.
    #[arg(long, required = true)]
    d_over_delta: usize,
    /// Prefix for the per-point CSV files.
    #[arg(long)]
    csv_prefix: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

impl CommonArgs {
    fn resolve(self) -> CliResult<RunConfig> {
        let from_file = match &self.config {
            Some(path) => config::load_config_file(path)?,
            None => PartialConfig::default(),
        };
        let from_flags = PartialConfig {
            model: self.model,
            lambda: self.lambda,
            image: self.image,
            synthetic: self.synthetic,
            width: self.width,
            height: self.height,
            noise_variance: self.noise_variance,
            seed: self.seed,
            solver: self.solver,
            domains: self.domains,
            delta: self.delta,
            tau: self.tau,
            outer_iterations: self.outer_iterations,
            local_max_iterations: self.local_max_iterations,
            local_tolerance: self.local_tolerance,
            warm_start: if self.warm_start { Some(true) } else { None },
            fista_iterations: self.fista_iterations,
            fista_tolerance: self.fista_tolerance,
            reference_iterations: self.reference_iterations,
            log_every: self.log_every,
            out_image: self.out_image,
            out_csv: self.out_csv,
            out_maxval: self.out_maxval,
            omit_wall_time: if self.omit_wall_time { Some(true) } else { None },
            threads: self.threads,
        };
        from_flags.or(from_file).resolve()
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Denoise(common) => {
            let cfg = common.resolve()?;
            let artifacts = run_denoise(&cfg)?;
            print!("{}", artifacts.summary);
            Ok(())
        }
        Command::Compare(common) => {
            let cfg = common.resolve()?;
            let artifacts = run_compare(&cfg)?;
            print!("{}", artifacts.summary);
            Ok(())
        }
        Command::SweepDelta(args) => {
            let cfg = args.common.resolve()?;
            let artifacts = run_sweep_delta(&cfg, &args.deltas, args.csv_prefix.as_deref())?;
            print!("{}", artifacts.summary);
            Ok(())
        }
        Command::SweepDomains(args) => {
            let cfg = args.common.resolve()?;
            let mut grids = Vec::new();
            for spec in &args.domains_list {
                grids.push(config::parse_domains(spec)?);
            }
            let artifacts =
                run_sweep_domains(&cfg, &grids, args.d_over_delta, args.csv_prefix.as_deref())?;
            print!("{}", artifacts.summary);
            Ok(())
        }
        Command::Selftest => {
            let outcome = run_selftest();
            print!("{}", outcome.report);
            if outcome.passed {
                println!("selftest: all checks passed");
                Ok(())
            } else {
                Err(CliError::Solver("selftest checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
