//! End-to-end experiment drivers behind the CLI subcommands: simulate a
//! stream, run the online estimation over it, benchmark the sampler modes
//! over replicates, replay a load table, and rank sampling functions by the
//! determinant criterion. Every driver is deterministic given its resolved
//! configuration and master seed, and echoes both into a manifest.

pub mod bench;
mod config;

pub use bench::{final_errors_for, paired_difference, run_bench, BenchResult, BENCH_MODES};
pub use config::{Overrides, RunConfig};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    builtin_candidates, chi_square_upper_quantile, d_optimality_oracle, empirical_upper_quantile,
    write_metrics_csv, RankedCandidate,
};
use crate::error::{Error, Result};
use crate::estimator::batch_ls;
use crate::ingest::{parse_wide_csv, LoadTable, PolicyEvent};
use crate::model::io::{
    read_stream_csv, read_stream_meta, write_stream_csv, write_stream_meta, StreamMeta,
};
use crate::model::{
    suggested_burn_in, EllipticalSampler, LagModel, ModelSpec, NoiseFamily, SeasonalVarxSpec,
    VarxSpec,
};
use crate::pipeline::{run_pairs, run_stream, write_decisions_csv, RecordCadence, RunOutcome};
use crate::seed::{seeded_rng, PURPOSE_CALIBRATION, PURPOSE_MONTE_CARLO};

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Writes the run manifest: tool version, the full resolved config, and a
/// checksum per input file. No timestamps, so reruns are byte-identical.
fn write_manifest(
    out_dir: &Path,
    command: &str,
    config_text: &str,
    inputs: &[(&str, &Path)],
) -> Result<PathBuf> {
    let mut text = String::new();
    text.push_str(&format!("tool = levstream {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("command = {command}\n"));
    for (name, path) in inputs {
        text.push_str(&format!(
            "input_{name} = {}\ninput_{name}_sha256 = {}\n",
            path.display(),
            sha256_hex(path)?
        ));
    }
    text.push_str("\n# resolved configuration\n");
    text.push_str(config_text);
    let path = out_dir.join("manifest.txt");
    fs::write(&path, text)?;
    Ok(path)
}

fn matrix_json(m: &DMatrix<f64>) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect();
    serde_json::json!(rows)
}

fn vector_json(v: &DVector<f64>) -> serde_json::Value {
    serde_json::json!(v.iter().copied().collect::<Vec<f64>>())
}

/// Final estimator snapshot keyed by the update index.
fn write_snapshot(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let snapshot = serde_json::json!({
        "tau": outcome.rls.n_selected(),
        "n_selected": outcome.rls.n_selected(),
        "ridge": outcome.rls.ridge(),
        "b_hat": matrix_json(outcome.rls.b_hat()),
        "omega_hat": matrix_json(outcome.rls.omega_hat()),
        "mu_x_hat": vector_json(outcome.sampler.mu_x_hat()),
        "mu_y_hat": vector_json(outcome.sampler.mu_y_hat()),
        "realized_rate": outcome.realized_rate,
        "skipped_rls_updates": outcome.rls.skipped_updates(),
        "skipped_precision_updates": outcome.sampler.skipped_precision_updates(),
    });
    fs::write(path, serde_json::to_string_pretty(&snapshot)? + "\n")?;
    Ok(())
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidParameter {
            name: "json",
            reason: e.to_string(),
        }
    }
}

#[derive(Debug)]
pub struct SimulateSummary {
    pub stream_path: PathBuf,
    pub meta_path: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: usize,
}

/// Simulates a stream from a seeded random stable model and writes the CSV
/// plus its metadata sidecar.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<SimulateSummary> {
    fs::create_dir_all(out_dir)?;
    let spec = VarxSpec::random_stable(cfg.k, cfg.p1, cfg.p2, cfg.target_radius, cfg.coeff_seed)?;
    let noise = spec.noise(cfg.noise, cfg.df)?;
    let burn_in = cfg.burn_in.unwrap_or(suggested_burn_in(spec.max_lag()));
    let points = spec.simulate(&noise, cfg.n, burn_in, cfg.seed)?;

    let stream_path = out_dir.join("stream.csv");
    write_stream_csv(&stream_path, &points)?;
    let meta_path = out_dir.join("stream.meta");
    write_stream_meta(
        &meta_path,
        &StreamMeta {
            spec: ModelSpec::Varx(spec),
            noise_family: cfg.noise,
            noise_df: cfg.df,
            seed: cfg.seed,
            n: cfg.n,
            burn_in,
        },
    )?;
    let manifest_path = write_manifest(out_dir, "simulate", &cfg.render(), &[])?;
    Ok(SimulateSummary {
        stream_path,
        meta_path,
        manifest_path,
        rows: points.len(),
    })
}

#[derive(Debug)]
pub struct RunSummary {
    pub metrics_path: PathBuf,
    pub decisions_path: PathBuf,
    pub snapshot_path: PathBuf,
    pub manifest_path: PathBuf,
    pub n_steps: usize,
    pub n_selected: usize,
    pub realized_rate: f64,
    pub final_est_error: f64,
}

/// Runs the online estimation over a simulated stream, measuring estimation
/// error against the true coefficients from the stream's sidecar.
pub fn cmd_run(cfg: &RunConfig, stream_path: &Path, out_dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out_dir)?;
    let meta_path = stream_path.with_extension("meta");
    let meta = read_stream_meta(&meta_path)?;
    let points = read_stream_csv(stream_path)?;
    let reference_b = meta.spec.stacked_coefficients();
    let sampler_cfg = cfg.sampler_config()?;
    let outcome = run_stream(
        &meta.spec,
        &points,
        &sampler_cfg,
        &reference_b,
        cfg.cadence,
        cfg.seed,
    )?;

    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &outcome.records)?;
    let decisions_path = out_dir.join("decisions.csv");
    write_decisions_csv(&decisions_path, &outcome.decisions)?;
    let snapshot_path = out_dir.join("snapshot.json");
    write_snapshot(&snapshot_path, &outcome)?;
    let manifest_path = write_manifest(
        out_dir,
        "run",
        &cfg.render(),
        &[("stream", stream_path), ("meta", &meta_path)],
    )?;
    let final_est_error = outcome
        .records
        .last()
        .map(|r| r.est_error)
        .unwrap_or(f64::NAN);
    Ok(RunSummary {
        metrics_path,
        decisions_path,
        snapshot_path,
        manifest_path,
        n_steps: outcome.n_steps,
        n_selected: outcome.rls.n_selected(),
        realized_rate: outcome.realized_rate,
        final_est_error,
    })
}

#[derive(Debug)]
pub struct BenchSummary {
    pub table_path: PathBuf,
    pub manifest_path: PathBuf,
    pub tau_common: usize,
}

/// Runs the replicate benchmark and writes the per-update table.
pub fn cmd_bench(
    cfg: &RunConfig,
    n_replicates: usize,
    parallelism: usize,
    out_dir: &Path,
) -> Result<BenchSummary> {
    fs::create_dir_all(out_dir)?;
    let result = run_bench(cfg, n_replicates, parallelism)?;
    let table_path = out_dir.join("bench.csv");
    fs::write(&table_path, &result.table_csv)?;
    let mut config_text = cfg.render();
    config_text.push_str(&format!("n_replicates = {n_replicates}\n"));
    let manifest_path = write_manifest(out_dir, "bench", &config_text, &[])?;
    Ok(BenchSummary {
        table_path,
        manifest_path,
        tau_common: result.tau_common,
    })
}

#[derive(Debug)]
pub struct PowerSummary {
    pub metrics_path: PathBuf,
    pub snapshot_path: PathBuf,
    pub manifest_path: PathBuf,
    pub rows: usize,
    pub n_steps: usize,
    pub realized_rate: f64,
    pub final_est_error: f64,
    pub policy_events: Vec<PolicyEvent>,
}

/// Replays a load table under the seasonal lag structure, fitting online
/// and measuring estimation error against the full-sample batch fit.
pub fn cmd_power(
    cfg: &RunConfig,
    data_path: &Path,
    columns: &[String],
    out_dir: &Path,
) -> Result<PowerSummary> {
    fs::create_dir_all(out_dir)?;
    let table = parse_wide_csv(data_path, &cfg.timestamp_column, columns, cfg.policy)?;
    let outcome = replay_table(cfg, &table)?;

    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_csv(&metrics_path, &outcome.records)?;
    let snapshot_path = out_dir.join("snapshot.json");
    write_snapshot(&snapshot_path, &outcome)?;
    let manifest_path = write_manifest(out_dir, "power", &cfg.render(), &[("data", data_path)])?;
    let final_est_error = outcome
        .records
        .last()
        .map(|r| r.est_error)
        .unwrap_or(f64::NAN);
    Ok(PowerSummary {
        metrics_path,
        snapshot_path,
        manifest_path,
        rows: table.len(),
        n_steps: outcome.n_steps,
        realized_rate: outcome.realized_rate,
        final_est_error,
        policy_events: table.policy_events.clone(),
    })
}

/// The replay pipeline behind `cmd_power`, exposed for tests that build the
/// table in memory: seasonal embedding, full-sample reference fit, then the
/// online run over the same pairs. Replay metrics are recorded at every
/// time step; the configurable cadence only applies to `run`.
pub fn replay_table(cfg: &RunConfig, table: &LoadTable) -> Result<RunOutcome> {
    let k = table.series_count();
    let zero = DMatrix::zeros(k, k);
    let spec = SeasonalVarxSpec::new(
        vec![zero.clone(); cfg.p1],
        vec![zero; cfg.p2_seasonal],
        cfg.period,
        DMatrix::identity(k, k),
        DVector::zeros(k),
    )?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    for (point, covariate) in table.replay(&spec)? {
        xs.push(covariate.x);
        ys.push(point.y);
        ts.push(point.t);
    }

    // Full-sample reference fit, centered by full-sample means.
    let n = xs.len();
    let p = spec.covariate_dim();
    let mut mu_x = DVector::zeros(p);
    let mut mu_y = DVector::zeros(k);
    for (x, y) in xs.iter().zip(&ys) {
        mu_x += x;
        mu_y += y;
    }
    mu_x /= n as f64;
    mu_y /= n as f64;
    let cx: Vec<DVector<f64>> = xs.iter().map(|x| x - &mu_x).collect();
    let cy: Vec<DVector<f64>> = ys.iter().map(|y| y - &mu_y).collect();
    let reference_b = batch_ls(&cx, &cy)?;

    let sampler_cfg = cfg.sampler_config()?;
    run_pairs(
        &xs,
        &ys,
        &ts,
        &sampler_cfg,
        &reference_b,
        RecordCadence::EveryStep,
        cfg.seed,
    )
}

#[derive(Debug)]
pub struct DoptReport {
    pub ranking: Vec<RankedCandidate>,
    /// The upper-tail threshold rule ranked first.
    pub optimum_first: bool,
    /// It leads the runner-up by more than three paired standard errors.
    pub significant: bool,
    pub text: String,
}

/// Ranks the built-in candidate family by Monte-Carlo determinant and
/// reports whether the threshold rule wins significantly.
pub fn cmd_doptcheck(
    p: usize,
    q: f64,
    q0: f64,
    family: NoiseFamily,
    df: Option<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<DoptReport> {
    if p == 0 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "dimension must be positive".into(),
        });
    }
    if !(0.0..=1.0).contains(&q0) || q0 > q {
        return Err(Error::InvalidParameter {
            name: "q0",
            reason: format!("base rate must lie in [0, q], got {q0}"),
        });
    }
    let mu = DVector::zeros(p);
    let eye = DMatrix::identity(p, p);
    let sampler = EllipticalSampler::centered(eye.clone(), family, df)?;
    let upper_quantile: Box<dyn Fn(f64) -> f64> = match family {
        NoiseFamily::Gaussian => Box::new(chi_square_upper_quantile(p)),
        NoiseFamily::StudentT => {
            let mut rng = seeded_rng(seed, &[PURPOSE_CALIBRATION]);
            let scores: Vec<f64> = (0..400_000)
                .map(|_| sampler.sample(&mut rng).norm_squared())
                .collect();
            Box::new(empirical_upper_quantile(scores))
        }
    };
    let candidates = builtin_candidates(q, q0, &mu, &eye, upper_quantile.as_ref());
    let ranking = d_optimality_oracle(
        q,
        |rng| sampler.sample(rng),
        &mu,
        &candidates,
        n_mc,
        seed.wrapping_add(PURPOSE_MONTE_CARLO),
    )?;

    let optimum_first = ranking[0].name == "upper_tail";
    let significant = if ranking.len() > 1 {
        let gap = ranking[0].det_gamma - ranking[1].det_gamma;
        let se = ranking[0].paired_gap_se(&ranking[1]);
        optimum_first && se.is_finite() && gap > 3.0 * se
    } else {
        optimum_first
    };

    let mut text = format!(
        "d-optimality ranking (p={p}, q={q}, q0={q0}, family={}, n_mc={n_mc})\n",
        family.as_str()
    );
    for (i, r) in ranking.iter().enumerate() {
        text.push_str(&format!(
            "{:>2}. {:<12} det={:.6e}  se={:.3e}  rate={:.4}\n",
            i + 1,
            r.name,
            r.det_gamma,
            r.det_se,
            r.q_hat
        ));
    }
    text.push_str(&format!(
        "optimum_first = {optimum_first}\nsignificant = {significant}\n"
    ));
    Ok(DoptReport {
        ranking,
        optimum_first,
        significant,
        text,
    })
}
