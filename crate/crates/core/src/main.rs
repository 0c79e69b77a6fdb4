use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bgk::bounds::{horizon_thm4, horizon_thm5, rate_prop1, rate_thm1, rate_thm2, rate_thm3, RateBound};
use bgk::harness::{
    block_size_sweep, finite_collection_study, run_experiment, run_verify_suite, trial_instance,
    write_verify_csv, ExperimentConfig, ExperimentResult,
};
use bgk::linalg::spectral_summary;
use bgk::{Error, Result};

#[derive(Parser)]
#[command(name = "bgk", version, about = "Block Gaussian Kaczmarz experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method on every trial.
    Solve(ExperimentArgs),
    /// Repeat the experiment for several block sizes.
    Sweep {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Compare fresh Gaussian sketches with finite collections.
    Collection {
        #[command(flatten)]
        common: ExperimentArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<u64>,
    },
    /// Run the Monte Carlo checks.
    Verify {
        #[arg(long, value_delimiter = ',', default_value = "all")]
        checks: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplier on each check's trial count.
        #[arg(long, default_value_t = 1.0)]
        trials_scale: f64,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the theoretical rates for the trial-0 instance.
    Bounds(ExperimentArgs),
}

/// Experiment settings; each flag overrides the config-file key of the same
/// name (with `-` read as `_`).
#[derive(Args)]
struct ExperimentArgs {
    /// `key=value` config file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    normalize_rows: Option<bool>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated methods, e.g. `block:50,gaussian_block:50`.
    #[arg(long, alias = "method")]
    methods: Option<String>,
    #[arg(long)]
    s: Option<usize>,
    /// `none`, `gaussian:LEVEL[:raw]` or `spiky:COUNT:MAGNITUDE[:orth]`.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u64>,
    #[arg(long)]
    max_seconds: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    stride: Option<u64>,
    #[arg(long)]
    horizon_alpha: Option<f64>,
}

impl ExperimentArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides: [(&str, Option<String>); 15] = [
            ("model", self.model.clone()),
            ("normalize_rows", self.normalize_rows.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("methods", self.methods.clone()),
            ("s", self.s.map(|v| v.to_string())),
            ("noise", self.noise.clone()),
            ("trials", self.trials.map(|v| v.to_string())),
            ("threshold", self.threshold.map(|v| format!("{v:?}"))),
            ("max_iterations", self.max_iterations.map(|v| v.to_string())),
            ("max_seconds", self.max_seconds.map(|v| format!("{v:?}"))),
            ("seed", self.seed.map(|v| v.to_string())),
            ("output_dir", self.output_dir.as_ref().map(|p| p.display().to_string())),
            ("stride", self.stride.map(|v| v.to_string())),
            ("horizon_alpha", self.horizon_alpha.map(|v| format!("{v:?}"))),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.apply(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn print_summary(result: &ExperimentResult) {
    println!(
        "{:<24} {:>5} {:>7} {:>12} {:>10} {:>10} {:>14}",
        "method", "s", "reached", "mean_iters", "min", "max", "final_error"
    );
    for a in &result.methods {
        println!(
            "{:<24} {:>5} {:>3}/{:<3} {:>12.1} {:>10} {:>10} {:>14.4e}",
            a.label,
            a.spec.block_size,
            a.reached,
            a.trials,
            a.iterations.mean,
            a.iterations.min,
            a.iterations.max,
            a.final_error.mean
        );
    }
}

fn print_bound(b: &RateBound) {
    let status = if b.applicable { "applicable" } else { "inapplicable" };
    print!("{:<6} beta={:.10} horizon={:.6e} {status}", b.source, b.beta, b.horizon);
    if let Some(f) = b.collection_feasible {
        print!(" collection_feasible={f}");
    }
    if let Some(r) = &b.reason {
        print!(" ({r})");
    }
    println!();
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => print_summary(&run_experiment(&args.build()?)?),
        Command::Sweep { common, sizes } => {
            for (s, result) in block_size_sweep(&common.build()?, &sizes)? {
                println!("# s = {s}");
                print_summary(&result);
            }
        }
        Command::Collection { common, sizes } => {
            print_summary(&finite_collection_study(&common.build()?, &sizes)?);
        }
        Command::Verify {
            checks,
            seed,
            trials_scale,
            output_dir,
        } => {
            let reports = run_verify_suite(&checks, seed, trials_scale)?;
            for r in &reports {
                println!("{r}");
            }
            if let Some(dir) = output_dir {
                write_verify_csv(&reports, &dir.join("verify.csv"))?;
            }
        }
        Command::Bounds(args) => {
            let cfg = args.build()?;
            cfg.validate()?;
            let inst = trial_instance(&cfg, 0)?;
            let (m, n) = inst.a.shape();
            let summary = spectral_summary(&inst.a);
            println!(
                "m={m} n={n} sigma_min={:.6e} sigma_max={:.6e} frobenius={:.6e} kappa^2={:.6e} noise_norm={:.6e}",
                summary.sigma_min,
                summary.sigma_max,
                summary.frob,
                summary.kappa2,
                inst.e_norm()
            );
            let e = inst.e_norm();
            for spec in cfg.resolved_methods()? {
                let s = spec.block_size;
                println!("# {} (s = {s})", spec.label());
                for b in [
                    rate_thm1(&summary, m, s)?,
                    rate_thm2(&summary, s)?,
                    rate_thm3(&summary, m, s)?,
                    rate_prop1(&summary, m, s)?,
                    horizon_thm4(&summary, m, n, s, e)?,
                    horizon_thm5(&summary, n, s, e, cfg.horizon_alpha)?,
                ] {
                    print_bound(&b);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code: Error = e;
            ExitCode::from(code.exit_code() as u8)
        }
    }
}
