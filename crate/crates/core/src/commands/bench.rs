//! Replicate benchmark: the three sampler modes over independently
//! simulated streams of one fixed model, aligned by update index.
//!
//! Within a replicate all modes see the same stream and the same sampler
//! randomness, so mode comparisons are paired; across replicates seeds are
//! derived from the master seed by replicate index, so the output does not
//! depend on how the work is scheduled.

use rayon::prelude::*;

use crate::commands::RunConfig;
use crate::error::{Error, Result};
use crate::model::{suggested_burn_in, LagModel, VarxSpec};
use crate::pipeline::{run_pairs, RecordCadence};
use crate::samplers::{SamplerConfig, SamplerMode};
use crate::seed::{derive_seed, PURPOSE_REPLICATE_SAMPLER, PURPOSE_REPLICATE_STREAM};

/// Mode order of every per-mode array in the bench output.
pub const BENCH_MODES: [SamplerMode; 3] = [
    SamplerMode::Bernoulli,
    SamplerMode::Lss,
    SamplerMode::Relaxed,
];

#[derive(Debug)]
pub struct BenchResult {
    /// Last update index reached by every replicate under every mode.
    pub tau_common: usize,
    /// Rendered table: one row per update index, mean and standard
    /// deviation per mode.
    pub table_csv: String,
    /// Estimation error at `tau_common` per replicate, in [`BENCH_MODES`]
    /// order.
    pub final_errors: Vec<[f64; 3]>,
    /// Realized selection rates per replicate, in [`BENCH_MODES`] order.
    pub realized_rates: Vec<[f64; 3]>,
}

fn mode_config(cfg: &RunConfig, mode: SamplerMode) -> Result<SamplerConfig> {
    let mut sampler = SamplerConfig::new(mode, cfg.q, cfg.q0, cfg.u, cfg.pilot)?;
    sampler.quantile_window = cfg.quantile_window;
    sampler.threshold_refresh = cfg.threshold_refresh;
    Ok(sampler)
}

/// Runs `n_replicates` independent replicates with at most `parallelism`
/// worker threads. The output is byte-identical for any parallelism.
pub fn run_bench(cfg: &RunConfig, n_replicates: usize, parallelism: usize) -> Result<BenchResult> {
    if n_replicates < 2 {
        return Err(Error::InvalidParameter {
            name: "n_replicates",
            reason: "benchmarks need at least two replicates".into(),
        });
    }
    if parallelism == 0 {
        return Err(Error::InvalidParameter {
            name: "parallelism",
            reason: "must be at least 1".into(),
        });
    }
    let spec = VarxSpec::random_stable(cfg.k, cfg.p1, cfg.p2, cfg.target_radius, cfg.coeff_seed)?;
    let noise = spec.noise(cfg.noise, cfg.df)?;
    let b_true = spec.stacked_coefficients();
    let burn_in = cfg.burn_in.unwrap_or(suggested_burn_in(spec.max_lag()));
    let configs: Vec<SamplerConfig> = BENCH_MODES
        .iter()
        .map(|&m| mode_config(cfg, m))
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidParameter {
            name: "parallelism",
            reason: e.to_string(),
        })?;

    type ReplicateOut = ([Vec<f64>; 3], [f64; 3]);
    let replicate = |r: usize| -> Result<ReplicateOut> {
        let stream_seed = derive_seed(cfg.seed, &[r as u64, PURPOSE_REPLICATE_STREAM]);
        let sampler_seed = derive_seed(cfg.seed, &[r as u64, PURPOSE_REPLICATE_SAMPLER]);
        let points = spec.simulate(&noise, cfg.n, burn_in, stream_seed)?;
        let start = spec.max_lag();
        let mut xs = Vec::with_capacity(points.len() - start);
        let mut ys = Vec::with_capacity(points.len() - start);
        let mut ts = Vec::with_capacity(points.len() - start);
        for t in start..points.len() {
            xs.push(spec.embed(&points[..t])?.x);
            ys.push(points[t].y.clone());
            ts.push(points[t].t);
        }
        let mut curves: [Vec<f64>; 3] = Default::default();
        let mut rates = [0.0; 3];
        for (slot, sampler_cfg) in configs.iter().enumerate() {
            let out = run_pairs(
                &xs,
                &ys,
                &ts,
                sampler_cfg,
                &b_true,
                RecordCadence::EveryUpdate,
                sampler_seed,
            )?;
            curves[slot] = out.records.iter().map(|rec| rec.est_error).collect();
            rates[slot] = out.realized_rate;
        }
        Ok((curves, rates))
    };

    let results: Vec<ReplicateOut> = pool.install(|| {
        (0..n_replicates)
            .into_par_iter()
            .map(replicate)
            .collect::<Result<Vec<_>>>()
    })?;

    let tau_common = results
        .iter()
        .flat_map(|(curves, _)| curves.iter().map(Vec::len))
        .min()
        .unwrap_or(0);
    if tau_common == 0 {
        return Err(Error::InsufficientData {
            what: "estimator updates in every replicate",
            needed: 1,
            actual: 0,
        });
    }

    let mut table =
        String::from("tau,bernoulli_mean,bernoulli_sd,lss_mean,lss_sd,relaxed_mean,relaxed_sd\n");
    for tau in 1..=tau_common {
        let mut row = tau.to_string();
        for slot in 0..3 {
            let values: Vec<f64> = results
                .iter()
                .map(|(curves, _)| curves[slot][tau - 1])
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let var =
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
            row.push_str(&format!(",{},{}", mean, var.sqrt()));
        }
        table.push_str(&row);
        table.push('\n');
    }

    let final_errors = results
        .iter()
        .map(|(curves, _)| {
            [
                curves[0][tau_common - 1],
                curves[1][tau_common - 1],
                curves[2][tau_common - 1],
            ]
        })
        .collect();
    let realized_rates = results.iter().map(|(_, rates)| *rates).collect();

    Ok(BenchResult {
        tau_common,
        table_csv: table,
        final_errors,
        realized_rates,
    })
}

/// Mean and two-sided paired t-style statistic of `a - b` over replicates.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len().min(b.len());
    let diffs: Vec<f64> = a[..n].iter().zip(&b[..n]).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    (mean, se)
}

/// Convenience accessor: a column of per-replicate finals for one mode.
pub fn final_errors_for(result: &BenchResult, mode: SamplerMode) -> Vec<f64> {
    let slot = BENCH_MODES
        .iter()
        .position(|&m| m == mode)
        .expect("mode in bench set");
    result.final_errors.iter().map(|row| row[slot]).collect()
}
