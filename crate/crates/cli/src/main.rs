use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dpmono_core::calibration::{psi, psi_inverse};
use dpmono_core::harness::{
    fit_sample, run_study, summary_record, truth_on_grid, write_fit, write_summary_csv, ExperimentConfig,
    StrategyKind,
};
use dpmono_core::{simulate_truth, PointProcessSample, TruthId, TruthIntensity};

#[derive(Parser)]
#[command(name = "dpmono", version, about = "Monotone Poisson intensity estimation with DP mixtures of uniforms")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate events from a benchmark intensity.
    Simulate {
        #[arg(long)]
        truth: TruthId,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit one event file with one strategy.
    Fit {
        #[arg(long)]
        events: PathBuf,
        /// Overrides the truth recorded in the event file.
        #[arg(long)]
        truth: Option<TruthId>,
        #[arg(long, default_value = "empirical")]
        strategy: StrategyKind,
        #[command(flatten)]
        opts: Options,
    },
    /// Run the truths × n × strategies study.
    Study {
        #[command(flatten)]
        opts: Options,
    },
    /// Evaluate Ψ, its inverse, or the calibrated γ of a truth.
    Psi {
        #[arg(long, conflicts_with_all = ["target", "truth"])]
        gamma: Option<f64>,
        #[arg(long, conflicts_with = "truth")]
        target: Option<f64>,
        #[arg(long)]
        truth: Option<TruthId>,
        #[arg(long, default_value_t = 2.0)]
        shape: f64,
        #[arg(long, default_value_t = 8.0)]
        horizon: f64,
    },
}

/// Flags shared by `fit` and `study`. Each one mirrors a config-file key.
#[derive(Args, Default)]
struct Options {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    truths: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    strategies: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    sigma_gamma: Option<String>,
    #[arg(long)]
    sigma_gamma2: Option<String>,
    #[arg(long)]
    sweeps: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    thin: Option<String>,
    #[arg(long)]
    zeta: Option<String>,
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    grid_points: Option<String>,
    #[arg(long)]
    export_points: Option<String>,
    #[arg(long)]
    export_thin: Option<String>,
    #[arg(long)]
    quantile_low: Option<String>,
    #[arg(long)]
    quantile_high: Option<String>,
    #[arg(long)]
    ar_proposal: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long, short)]
    out: Option<String>,
}

impl Options {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        let flags = [
            ("truths", &self.truths),
            ("n", &self.n),
            ("strategies", &self.strategies),
            ("rho", &self.rho),
            ("sigma_gamma", &self.sigma_gamma),
            ("sigma_gamma2", &self.sigma_gamma2),
            ("sweeps", &self.sweeps),
            ("burn_in", &self.burn_in),
            ("thin", &self.thin),
            ("zeta", &self.zeta),
            ("shape", &self.shape),
            ("grid_points", &self.grid_points),
            ("export_points", &self.export_points),
            ("export_thin", &self.export_thin),
            ("quantile_low", &self.quantile_low),
            ("quantile_high", &self.quantile_high),
            ("ar_proposal", &self.ar_proposal),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Simulate { truth, n, seed, out } => {
            let sample = simulate_truth(truth, n, seed)?;
            sample.save(&out)?;
            println!("{} events written to {}", sample.len(), out.display());
        }
        Command::Fit { events, truth, strategy, opts } => {
            let config = opts.config()?;
            let sample = PointProcessSample::load(&events)?;
            let truth = truth.or(sample.truth_id);
            let start = Instant::now();
            let fit = fit_sample(&config, &sample, truth, strategy, config.master_seed)?;
            let truth_grid = truth.map(|t| truth_on_grid(t, &fit.trace.grid));
            write_fit(&config, &fit, truth_grid.as_ref(), &config.out_dir)?;
            let record = summary_record(&fit, &sample, truth, start.elapsed().as_secs_f64())?;
            write_summary_csv(&config.out_dir.join("summary.csv"), std::slice::from_ref(&record))?;
            println!(
                "gamma={} mean_K_nonempty={:.3} mean_M={:.4} L1={:.5} ({:.1}s) -> {}",
                record.gamma,
                record.mean_k_nonempty,
                record.mean_mass,
                record.l1,
                record.wall_time_s,
                config.out_dir.display()
            );
        }
        Command::Study { opts } => {
            let config = opts.config()?;
            let records = run_study(&config)?;
            let failed = records.iter().filter(|r| !r.is_ok()).count();
            println!(
                "{} cells ({failed} failed); summary in {}",
                records.len(),
                config.out_dir.join("summary.csv").display()
            );
        }
        Command::Psi { gamma, target, truth, shape, horizon } => match (gamma, target, truth) {
            (Some(g), None, None) => println!("{}", psi(g, shape, horizon)?),
            (None, Some(x), None) => println!("{}", psi_inverse(x, shape, horizon)?),
            (None, None, Some(t)) => {
                let e = TruthIntensity::with_horizon(t, horizon)?.e_theo();
                println!("E_theo={e} gamma={}", psi_inverse(e, shape, horizon)?);
            }
            _ => bail!("give exactly one of --gamma, --target, --truth"),
        },
    }
    Ok(())
}
