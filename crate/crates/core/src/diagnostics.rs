//! Numerical checks of the design theory: the moment matrix of a sampling
//! function, the asymptotic precision matrix, a determinant-ranking oracle
//! over candidate samplers, and the error metrics used by the runners.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::check_positive_definite;
use crate::seed::{seeded_rng, PURPOSE_MONTE_CARLO};

/// Number of batches used for Monte-Carlo standard errors.
const MC_BATCHES: usize = 20;

/// Monte-Carlo estimate of the design moment matrix
/// `Gamma(s) = E[s(x) (x - mu)(x - mu)']` together with the realized rate
/// and a 20-fold batched standard error for the determinant.
#[derive(Debug, Clone)]
pub struct DesignSummary {
    pub gamma_hat: DMatrix<f64>,
    pub q_hat: f64,
    pub det_gamma: f64,
    pub det_se: f64,
    /// Per-batch determinants behind `det_se`; summaries computed on a
    /// common draw stream can be compared batch by batch.
    pub batch_dets: Vec<f64>,
    pub n_mc: usize,
}

impl DesignSummary {
    /// Plain-text key-value block.
    pub fn render_kv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("n_mc = {}\n", self.n_mc));
        s.push_str(&format!("q_hat = {}\n", self.q_hat));
        s.push_str(&format!("det_gamma = {}\n", self.det_gamma));
        s.push_str(&format!("det_se = {}\n", self.det_se));
        s.push_str("gamma_hat =");
        for r in 0..self.gamma_hat.nrows() {
            for c in 0..self.gamma_hat.ncols() {
                s.push(' ');
                s.push_str(&self.gamma_hat[(r, c)].to_string());
            }
        }
        s.push('\n');
        s
    }

    /// JSON-style structured record.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.gamma_hat.nrows())
            .map(|r| {
                (0..self.gamma_hat.ncols())
                    .map(|c| self.gamma_hat[(r, c)])
                    .collect()
            })
            .collect();
        serde_json::json!({
            "n_mc": self.n_mc,
            "q_hat": self.q_hat,
            "det_gamma": self.det_gamma,
            "det_se": self.det_se,
            "gamma_hat": rows,
        })
    }

    /// Batched standard error of `self.det_gamma - other.det_gamma` for two
    /// summaries computed on the same draw stream; pairing removes the
    /// common fluctuations.
    pub fn paired_gap_se(&self, other: &DesignSummary) -> f64 {
        let n = self.batch_dets.len().min(other.batch_dets.len());
        if n < 2 {
            return f64::NAN;
        }
        let diffs: Vec<f64> = self.batch_dets[..n]
            .iter()
            .zip(&other.batch_dets[..n])
            .map(|(a, b)| a - b)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Estimates `Gamma(s)` by Monte Carlo. The sampling function receives the
/// raw draw; candidates that score centered covariates carry their own mean.
/// Draws come from a generator seeded only by `seed`, so two calls with the
/// same seed see identical draws.
pub fn estimate_gamma<S, D>(
    sampling_fn: S,
    mut draw: D,
    mu_x: &DVector<f64>,
    n_mc: usize,
    seed: u64,
) -> Result<DesignSummary>
where
    S: Fn(&DVector<f64>) -> f64,
    D: FnMut(&mut ChaCha12Rng) -> DVector<f64>,
{
    if n_mc == 0 {
        return Err(Error::InvalidParameter {
            name: "n_mc",
            reason: "Monte-Carlo sample count must be positive".into(),
        });
    }
    let p = mu_x.len();
    let batches = if n_mc >= MC_BATCHES { MC_BATCHES } else { 1 };
    let mut rng = seeded_rng(seed, &[PURPOSE_MONTE_CARLO]);
    let mut batch_gamma = vec![DMatrix::<f64>::zeros(p, p); batches];
    let mut batch_count = vec![0usize; batches];
    let mut q_sum = 0.0;
    for i in 0..n_mc {
        let x = draw(&mut rng);
        if x.len() != p {
            return Err(Error::Dimension {
                what: "Monte-Carlo draw",
                expected: p,
                actual: x.len(),
            });
        }
        let s = sampling_fn(&x);
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter {
                name: "sampling function",
                reason: format!("value {s} outside [0, 1]"),
            });
        }
        let b = i * batches / n_mc;
        let c = &x - mu_x;
        batch_gamma[b] += (&c * c.transpose()) * s;
        batch_count[b] += 1;
        q_sum += s;
    }
    let mut gamma_hat = DMatrix::zeros(p, p);
    for g in &batch_gamma {
        gamma_hat += g;
    }
    gamma_hat /= n_mc as f64;
    let det_gamma = gamma_hat.determinant();

    let batch_dets: Vec<f64> = batch_gamma
        .iter()
        .zip(batch_count.iter())
        .filter(|(_, &m)| m > 0)
        .map(|(g, &m)| (g / m as f64).determinant())
        .collect();
    let det_se = if batch_dets.len() > 1 {
        let mean = batch_dets.iter().sum::<f64>() / batch_dets.len() as f64;
        let var = batch_dets.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
            / (batch_dets.len() - 1) as f64;
        (var / batch_dets.len() as f64).sqrt()
    } else {
        f64::NAN
    };

    Ok(DesignSummary {
        gamma_hat,
        q_hat: q_sum / n_mc as f64,
        det_gamma,
        det_se,
        batch_dets,
        n_mc,
    })
}

/// Asymptotic precision matrix `omega^{-1} (x) (gamma / q)` with the
/// Kronecker factors in that order and columns of `B` stacked left to right.
pub fn precision_matrix(
    omega: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    q: f64,
) -> Result<DMatrix<f64>> {
    if q <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: "sampling rate must be positive".into(),
        });
    }
    check_positive_definite(omega, "error covariance")?;
    let omega_inv = omega
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { what: "omega" })?;
    if gamma.clone().try_inverse().is_none() {
        return Err(Error::Singular { what: "gamma" });
    }
    Ok(omega_inv.kronecker(&(gamma / q)))
}

/// Boxed sampling function taking a raw covariate draw.
pub type SamplingFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// A named sampling function for the determinant-ranking oracle.
pub struct Candidate {
    pub name: String,
    pub s: SamplingFn,
}

impl Candidate {
    pub fn new(
        name: impl Into<String>,
        s: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            s: Box::new(s),
        }
    }
}

/// Oracle output: candidates ranked by decreasing determinant.
#[derive(Debug, Clone)]
pub struct RankedCandidate {
    pub name: String,
    pub det_gamma: f64,
    pub det_se: f64,
    pub q_hat: f64,
    /// Per-batch determinants, for paired gap comparisons between
    /// candidates evaluated on the common draw stream.
    pub batch_dets: Vec<f64>,
}

impl RankedCandidate {
    /// Batched standard error of the determinant gap to `other` under
    /// common random numbers.
    pub fn paired_gap_se(&self, other: &RankedCandidate) -> f64 {
        let n = self.batch_dets.len().min(other.batch_dets.len());
        if n < 2 {
            return f64::NAN;
        }
        let diffs: Vec<f64> = self.batch_dets[..n]
            .iter()
            .zip(&other.batch_dets[..n])
            .map(|(a, b)| a - b)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Evaluates `det(Gamma(s))` for every candidate on a common draw stream and
/// returns the ranking. Every candidate must realize the target rate within
/// 0.01 or the oracle rejects it.
pub fn d_optimality_oracle<D>(
    q: f64,
    mut draw: D,
    mu_x: &DVector<f64>,
    candidates: &[Candidate],
    n_mc: usize,
    seed: u64,
) -> Result<Vec<RankedCandidate>>
where
    D: FnMut(&mut ChaCha12Rng) -> DVector<f64>,
{
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "q",
            reason: format!("sampling rate must lie in (0, 1], got {q}"),
        });
    }
    let mut ranked = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let summary = estimate_gamma(&cand.s, &mut draw, mu_x, n_mc, seed)?;
        if (summary.q_hat - q).abs() > 0.01 {
            return Err(Error::RateMiscalibrated {
                name: cand.name.clone(),
                target: q,
                realized: summary.q_hat,
            });
        }
        ranked.push(RankedCandidate {
            name: cand.name.clone(),
            det_gamma: summary.det_gamma,
            det_se: summary.det_se,
            q_hat: summary.q_hat,
            batch_dets: summary.batch_dets,
        });
    }
    // Stable sort: exact ties keep the input order, so the upper-tail rule
    // leads when the family degenerates to identical functions.
    ranked.sort_by(|a, b| b.det_gamma.total_cmp(&a.det_gamma));
    Ok(ranked)
}

/// The built-in candidate family at rate `q` with base-rate floor `q0`.
/// Every leverage rule takes the mixture form `q0 + (1 - q0) * indicator`
/// with the indicator's mass calibrated to `(q - q0) / (1 - q0)`, so each
/// member realizes rate `q` while honoring the floor:
///
/// - `upper_tail`: indicator on high leverage. At `q0 = 0` this is the pure
///   threshold rule; at `q0 > 0` it is the relaxed mixture, so the family's
///   "relaxed" member coincides with it and is not listed twice.
/// - `lower_tail`: indicator on low leverage (the mirror rule).
/// - `middle_band`: indicator on a central leverage band.
/// - `bernoulli`: the constant rule.
///
/// At `q0 = q` every member collapses to the constant rule.
///
/// `upper_quantile(tail)` must return the `r` with `P(l > r) = tail`,
/// mapping `tail <= 0` to infinity and `tail >= 1` to zero.
pub fn builtin_candidates(
    q: f64,
    q0: f64,
    mu: &DVector<f64>,
    sigma_inv: &DMatrix<f64>,
    upper_quantile: &dyn Fn(f64) -> f64,
) -> Vec<Candidate> {
    let lev = {
        let mu = mu.clone();
        let prec = sigma_inv.clone();
        move |x: &DVector<f64>| {
            let c = x - &mu;
            (&prec * &c).dot(&c)
        }
    };
    let beta = if q0 >= 1.0 {
        0.0
    } else {
        (q - q0) / (1.0 - q0)
    };
    let r_upper = upper_quantile(beta);
    let r_lower = upper_quantile(1.0 - beta);
    let band_lo = upper_quantile((1.0 + beta) / 2.0);
    let band_hi = upper_quantile((1.0 - beta) / 2.0);

    let l1 = lev.clone();
    let l2 = lev.clone();
    let l3 = lev;
    vec![
        Candidate::new("upper_tail", move |x| {
            q0 + (1.0 - q0) * if l1(x) > r_upper { 1.0 } else { 0.0 }
        }),
        Candidate::new("lower_tail", move |x| {
            q0 + (1.0 - q0) * if l2(x) < r_lower { 1.0 } else { 0.0 }
        }),
        Candidate::new("middle_band", move |x| {
            let l = l3(x);
            q0 + (1.0 - q0)
                * if l > band_lo && l <= band_hi {
                    1.0
                } else {
                    0.0
                }
        }),
        Candidate::new("bernoulli", move |_| q),
    ]
}

/// Upper-quantile function of the chi-square leverage law holding for
/// Gaussian covariates.
pub fn chi_square_upper_quantile(p: usize) -> impl Fn(f64) -> f64 {
    move |tail: f64| {
        if tail <= 0.0 {
            f64::INFINITY
        } else if tail >= 1.0 {
            0.0
        } else {
            crate::samplers::chi_square_threshold(p, tail).expect("tail in (0,1)")
        }
    }
}

/// Empirical upper-quantile function from a calibration sample of leverage
/// scores, for covariate families without a closed-form leverage law.
pub fn empirical_upper_quantile(mut scores: Vec<f64>) -> impl Fn(f64) -> f64 {
    scores.sort_by(f64::total_cmp);
    move |tail: f64| {
        let m = scores.len();
        if tail <= 0.0 || m == 0 {
            f64::INFINITY
        } else {
            let allowed = (tail * m as f64).floor() as usize;
            if allowed >= m {
                0.0
            } else {
                scores[m - 1 - allowed]
            }
        }
    }
}

/// Agreement report between replicate estimates and the asymptotic law.
#[derive(Debug, Clone)]
pub struct NormalityReport {
    pub n_replicates: usize,
    /// `||C_hat - P^{-1}||_F / ||P^{-1}||_F`.
    pub relative_frobenius: f64,
    /// Diagonal of the empirical covariance over the theoretical one.
    pub variance_ratios: DVector<f64>,
    pub empirical_covariance: DMatrix<f64>,
}

impl NormalityReport {
    /// Plain-text key-value block.
    pub fn render_kv(&self) -> String {
        let ratios: Vec<String> = self.variance_ratios.iter().map(|v| v.to_string()).collect();
        format!(
            "n_replicates = {}\nrelative_frobenius = {}\nvariance_ratios = {}\n",
            self.n_replicates,
            self.relative_frobenius,
            ratios.join(" ")
        )
    }

    /// JSON-style structured record.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_replicates": self.n_replicates,
            "relative_frobenius": self.relative_frobenius,
            "variance_ratios": self.variance_ratios.iter().copied().collect::<Vec<f64>>(),
        })
    }
}

/// Compares the empirical covariance of `sqrt(N) vec(B_hat - B)` across
/// replicates to the inverse of the given precision matrix. `vec` stacks
/// columns left to right.
pub fn normality_check(
    replicate_estimates: &[(DMatrix<f64>, usize)],
    b_true: &DMatrix<f64>,
    precision: &DMatrix<f64>,
) -> Result<NormalityReport> {
    if replicate_estimates.len() < 50 {
        return Err(Error::InsufficientData {
            what: "replicates",
            needed: 50,
            actual: replicate_estimates.len(),
        });
    }
    let dim = b_true.nrows() * b_true.ncols();
    if precision.nrows() != dim {
        return Err(Error::Dimension {
            what: "precision matrix",
            expected: dim,
            actual: precision.nrows(),
        });
    }
    let r = replicate_estimates.len();
    let mut zs = Vec::with_capacity(r);
    for (b_hat, n_sel) in replicate_estimates {
        let diff = b_hat - b_true;
        // Column-major storage: the slice is already the column-stacked vec.
        let z = DVector::from_column_slice(diff.as_slice()) * (*n_sel as f64).sqrt();
        zs.push(z);
    }
    let mean = zs.iter().fold(DVector::zeros(dim), |acc, z| acc + z) / r as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for z in &zs {
        let c = z - &mean;
        cov += &c * c.transpose();
    }
    cov /= (r - 1) as f64;

    let target = precision
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { what: "precision" })?;
    let relative_frobenius = (&cov - &target).norm() / target.norm();
    let variance_ratios = DVector::from_fn(dim, |i, _| cov[(i, i)] / target[(i, i)]);
    Ok(NormalityReport {
        n_replicates: r,
        relative_frobenius,
        variance_ratios,
        empirical_covariance: cov,
    })
}

/// Stationary covariance of the lag-embedded covariate of a pure VAR model,
/// by fixed-point iteration of the Lyapunov recursion on the companion form.
/// Supplies the theoretical moment matrix to normality checks.
pub fn stationary_covariance(spec: &crate::model::VarxSpec) -> Result<DMatrix<f64>> {
    if spec.p2 != 0 {
        return Err(Error::InvalidParameter {
            name: "spec",
            reason: "stationary covariance helper covers pure VAR models".into(),
        });
    }
    let k = spec.k;
    let p1 = spec.p1;
    let dim = k * p1;
    let mut companion = DMatrix::zeros(dim, dim);
    for (i, phi) in spec.phi.iter().enumerate() {
        companion.view_mut((0, i * k), (k, k)).copy_from(phi);
    }
    for r in 1..p1 {
        companion
            .view_mut((r * k, (r - 1) * k), (k, k))
            .copy_from(&DMatrix::identity(k, k));
    }
    let mut noise = DMatrix::zeros(dim, dim);
    noise.view_mut((0, 0), (k, k)).copy_from(&spec.omega);
    let mut sigma = noise.clone();
    for _ in 0..10_000 {
        let next = &companion * &sigma * companion.transpose() + &noise;
        let delta = (&next - &sigma).amax();
        sigma = next;
        if delta < 1e-14 {
            break;
        }
    }
    Ok(sigma)
}

/// Mean of the finite values in an iterator; NaN when none are finite.
pub fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        if v.is_finite() {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Relative Frobenius estimation error `||b_hat - b_ref||_F / ||b_ref||_F`.
pub fn estimation_error(b_hat: &DMatrix<f64>, b_ref: &DMatrix<f64>) -> Result<f64> {
    crate::linalg::relative_frobenius(b_hat, b_ref)
}

/// Relative Euclidean prediction error `||y_hat - y|| / ||y||`.
pub fn prediction_error(y_hat: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if y_hat.len() != y.len() {
        return Err(Error::Dimension {
            what: "prediction",
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    let denom = y.norm();
    if denom == 0.0 {
        return Err(Error::EmptyInput {
            what: "reference response is all zeros",
        });
    }
    Ok((y_hat - y).norm() / denom)
}

/// Per-update metrics emitted by the runners.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub tau: usize,
    pub t: usize,
    pub est_error: f64,
    pub pred_error: f64,
    pub n_selected: usize,
}

/// Writes records as `tau,t,est_error,pred_error,n_selected`.
pub fn write_metrics_csv(path: &std::path::Path, records: &[MetricRecord]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "tau,t,est_error,pred_error,n_selected")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.tau, r.t, r.est_error, r.pred_error, r.n_selected
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
