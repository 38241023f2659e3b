//! Command-line driver: simulate streams, run the sampler-assisted online
//! estimation, benchmark sampler modes over replicates, replay load CSVs,
//! and rank sampling functions by the determinant criterion.
//!
//! Exit codes: 0 success, 1 validation error, 2 data error, 3 the
//! determinant check did not rank the threshold rule first significantly.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levstream::commands::{self, Overrides, RunConfig};
use levstream::model::NoiseFamily;

#[derive(Parser)]
#[command(
    name = "levstream",
    version,
    about = "Sampler-assisted online estimation of streaming multivariate time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Every configuration key has a flag twin of the same name; flags win over
/// the file.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// Plain-text key-value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    q0: Option<f64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    pilot: Option<usize>,
    #[arg(long)]
    quantile_window: Option<usize>,
    #[arg(long)]
    threshold_refresh: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Master seed; all stream and sampler randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p1: Option<usize>,
    #[arg(long)]
    p2: Option<usize>,
    #[arg(long)]
    target_radius: Option<f64>,
    #[arg(long)]
    coeff_seed: Option<u64>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    df: Option<f64>,
    #[arg(long)]
    cadence: Option<String>,
    #[arg(long)]
    period: Option<usize>,
    #[arg(long)]
    p2_seasonal: Option<usize>,
    #[arg(long)]
    timestamp_column: Option<String>,
    #[arg(long)]
    policy: Option<String>,
}

impl ConfigFlags {
    fn resolve(&self) -> levstream::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            mode: self.mode.clone(),
            q: self.q,
            q0: self.q0,
            u: self.u,
            pilot: self.pilot,
            quantile_window: self.quantile_window,
            threshold_refresh: self.threshold_refresh,
            n: self.n,
            burn_in: self.burn_in,
            seed: self.seed,
            k: self.k,
            p1: self.p1,
            p2: self.p2,
            target_radius: self.target_radius,
            coeff_seed: self.coeff_seed,
            noise: self.noise.clone(),
            df: self.df,
            cadence: self.cadence.clone(),
            period: self.period,
            p2_seasonal: self.p2_seasonal,
            timestamp_column: self.timestamp_column.clone(),
            policy: self.policy.clone(),
        })?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a stream from a seeded random stable model
    Simulate {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the online estimation over a simulated stream
    Run {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Stream CSV written by `simulate` (sidecar expected next to it)
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Benchmark the three sampler modes over independent replicates
    Bench {
        #[command(flatten)]
        cfg: ConfigFlags,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay a wide-format load CSV under the seasonal model
    Power {
        #[command(flatten)]
        cfg: ConfigFlags,
        /// Input CSV with a timestamp column and one column per series
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated list of value columns, in order
        #[arg(long, value_delimiter = ',', required = true)]
        columns: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rank candidate sampling functions by the determinant criterion
    Doptcheck {
        /// Covariate dimension
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
        #[arg(long, default_value_t = 0.0)]
        q0: f64,
        /// Covariate family: gaussian or student_t
        #[arg(long, default_value = "gaussian")]
        dist: String,
        /// Degrees of freedom for student_t
        #[arg(long)]
        df: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        n_mc: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cli: Cli) -> levstream::Result<ExitCode> {
    match cli.command {
        Command::Simulate { cfg, out } => {
            let cfg = cfg.resolve()?;
            let summary = commands::cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} rows to {} (sidecar {})",
                summary.rows,
                summary.stream_path.display(),
                summary.meta_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { cfg, stream, out } => {
            let cfg = cfg.resolve()?;
            let summary = commands::cmd_run(&cfg, &stream, &out)?;
            println!(
                "processed {} steps, selected {} (rate {:.4}), final estimation error {:.6}",
                summary.n_steps, summary.n_selected, summary.realized_rate, summary.final_est_error
            );
            println!(
                "metrics: {}\ndecisions: {}\nsnapshot: {}",
                summary.metrics_path.display(),
                summary.decisions_path.display(),
                summary.snapshot_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            cfg,
            replicates,
            parallelism,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let summary = commands::cmd_bench(&cfg, replicates, parallelism, &out)?;
            println!(
                "benchmarked {replicates} replicates to common update index {}; table: {}",
                summary.tau_common,
                summary.table_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Power {
            cfg,
            data,
            columns,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let summary = commands::cmd_power(&cfg, &data, &columns, &out)?;
            for event in &summary.policy_events {
                eprintln!("{event}");
            }
            println!(
                "replayed {} rows over {} steps (rate {:.4}), final estimation error {:.6}",
                summary.rows, summary.n_steps, summary.realized_rate, summary.final_est_error
            );
            println!(
                "metrics: {}\nsnapshot: {}",
                summary.metrics_path.display(),
                summary.snapshot_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Doptcheck {
            p,
            q,
            q0,
            dist,
            df,
            n_mc,
            seed,
        } => {
            let family = NoiseFamily::parse(&dist)?;
            let df = match family {
                NoiseFamily::StudentT => Some(df.unwrap_or(3.0)),
                NoiseFamily::Gaussian => None,
            };
            let report = commands::cmd_doptcheck(p, q, q0, family, df, n_mc, seed)?;
            print!("{}", report.text);
            if report.optimum_first && report.significant {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
