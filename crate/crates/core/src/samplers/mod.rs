//! Online sample-selection rules and their auxiliary estimates.
//!
//! Three rules share one code path. Each arriving covariate gets a leverage
//! score `l = (x - mu_x_hat)' P (x - mu_x_hat)` from a sparsely updated
//! precision matrix `P`, and the point is selected when a uniform draw falls
//! below
//!
//! ```text
//! s_hat = q0 + (1 - q0) * 1{ l > r_hat }
//! ```
//!
//! The mode only fixes the effective base rate: `bernoulli` pins `q0 = q`
//! (the threshold becomes unreachable and every point is a coin flip at
//! rate q), `lss` pins `q0 = 0` (pure thresholding), `relaxed` uses the
//! configured `q0`. Because the draw sequence and the arithmetic are
//! identical across modes, relaxed with `q0 = q` reproduces bernoulli
//! decision-for-decision, and relaxed with `q0 = 0` reproduces lss.
//!
//! The threshold `r_hat` starts at the chi-square quantile matching the
//! target exceedance rate and is then replaced by the empirical upper
//! quantile of the observed scores.

mod quantile;

pub use quantile::ScoreTracker;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::OpenClosed01;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::seed::{seeded_rng, PURPOSE_UNIFORM, PURPOSE_UPDATE_COIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    Bernoulli,
    Lss,
    Relaxed,
}

impl SamplerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerMode::Bernoulli => "bernoulli",
            SamplerMode::Lss => "lss",
            SamplerMode::Relaxed => "relaxed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(SamplerMode::Bernoulli),
            "lss" => Ok(SamplerMode::Lss),
            "relaxed" => Ok(SamplerMode::Relaxed),
            other => Err(Error::InvalidParameter {
                name: "mode",
                reason: format!("unknown sampler mode {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    /// Target sampling rate in (0, 1].
    pub q: f64,
    /// Base rate in [0, q]; only the relaxed mode reads it directly.
    pub q0: f64,
    /// Precision update rate in [0, 1]; 0 freezes the pilot precision.
    pub u: f64,
    /// Pilot size; must be at least p + 1.
    pub n0: usize,
    /// Retained leverage scores for the empirical threshold; 0 = unbounded.
    pub quantile_window: usize,
    /// Recompute the threshold every this many steps; 1 = every step.
    pub threshold_refresh: usize,
}

impl SamplerConfig {
    pub fn new(mode: SamplerMode, q: f64, q0: f64, u: f64, n0: usize) -> Result<Self> {
        let cfg = Self {
            mode,
            q,
            q0,
            u,
            n0,
            quantile_window: 0,
            threshold_refresh: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("sampling rate must lie in (0, 1], got {}", self.q),
            });
        }
        if !(0.0..=1.0).contains(&self.q0) || self.q0 > self.q {
            return Err(Error::InvalidParameter {
                name: "q0",
                reason: format!("base rate must lie in [0, q], got {}", self.q0),
            });
        }
        if !(0.0..=1.0).contains(&self.u) {
            return Err(Error::InvalidParameter {
                name: "u",
                reason: format!("update rate must lie in [0, 1], got {}", self.u),
            });
        }
        if self.threshold_refresh == 0 {
            return Err(Error::InvalidParameter {
                name: "threshold_refresh",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Base rate actually applied: the mode overrides the configured q0.
    pub fn effective_q0(&self) -> f64 {
        match self.mode {
            SamplerMode::Bernoulli => self.q,
            SamplerMode::Lss => 0.0,
            SamplerMode::Relaxed => self.q0,
        }
    }

    /// Target exceedance rate of the leverage threshold,
    /// `(q - q0) / (1 - q0)`; zero when the base rate already spends the
    /// whole budget.
    pub fn tail_target(&self) -> f64 {
        let q0 = self.effective_q0();
        if q0 >= 1.0 {
            return 0.0;
        }
        ((self.q - q0) / (1.0 - q0)).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Base,
    Leverage,
    Rejected,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Base => "base",
            Branch::Leverage => "leverage",
            Branch::Rejected => "rejected",
        }
    }
}

/// Outcome of one selection decision, sufficient to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub selected: bool,
    pub leverage: f64,
    pub threshold: f64,
    pub s_hat: f64,
    pub uniform_draw: f64,
    pub branch: Branch,
}

/// All auxiliary estimates a sampler carries along the stream.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub(crate) mu_x_hat: DVector<f64>,
    pub(crate) mu_y_hat: DVector<f64>,
    pub(crate) count: usize,
    /// Current precision estimate, `precision_count * gram_inv`.
    pub(crate) precision: DMatrix<f64>,
    /// Inverse of the accumulated rank-one sum (pilot Gram included).
    pub(crate) gram_inv: DMatrix<f64>,
    /// Rank-one terms absorbed, pilot points included.
    pub(crate) precision_count: usize,
    pub(crate) r_hat: f64,
    pub(crate) scores: ScoreTracker,
    uniform_rng: ChaCha12Rng,
    coin_rng: ChaCha12Rng,
    pub(crate) skipped_precision_updates: usize,
}

impl SamplerState {
    /// Initializes every auxiliary estimate from the pilot sample: means,
    /// regularized precision, chi-square threshold, and the score tracker
    /// seeded with the pilot leverage scores.
    pub fn pilot_fit(
        xs: &[DVector<f64>],
        ys: &[DVector<f64>],
        config: &SamplerConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidParameter {
                name: "pilot",
                reason: "pilot responses and covariates must pair up".into(),
            });
        }
        let p = xs[0].len();
        if config.n0 < p + 1 {
            return Err(Error::InsufficientData {
                what: "configured pilot size n0",
                needed: p + 1,
                actual: config.n0,
            });
        }
        if xs.len() < config.n0 {
            return Err(Error::InsufficientData {
                what: "pilot sample",
                needed: config.n0,
                actual: xs.len(),
            });
        }
        let n0 = xs.len();
        let k = ys[0].len();
        let mut mu_x = DVector::zeros(p);
        for x in xs {
            if x.len() != p {
                return Err(Error::Dimension {
                    what: "pilot covariate",
                    expected: p,
                    actual: x.len(),
                });
            }
            mu_x += x;
        }
        mu_x /= n0 as f64;
        let mut mu_y = DVector::zeros(k);
        for y in ys {
            if y.len() != k {
                return Err(Error::Dimension {
                    what: "pilot response",
                    expected: k,
                    actual: y.len(),
                });
            }
            mu_y += y;
        }
        mu_y /= n0 as f64;

        let mut cov = DMatrix::zeros(p, p);
        for x in xs {
            let c = x - &mu_x;
            cov += &c * c.transpose();
        }
        cov /= n0 as f64;
        let ridge = 1e-6 * cov.trace() / p as f64;
        let regularized = &cov + DMatrix::identity(p, p) * ridge;
        let precision = spd_inverse(&regularized, "pilot covariance")?;
        // Streaming form: precision = M * (accumulated rank-one sum)^{-1},
        // seeded with the pilot Gram n0 * (cov + ridge I) and M = n0.
        let gram_inv = &precision / n0 as f64;

        let tail = config.tail_target();
        let r_hat = if tail <= 0.0 {
            f64::INFINITY
        } else if tail >= 1.0 {
            0.0
        } else {
            chi_square_threshold(p, tail)?
        };

        let mut scores = ScoreTracker::new(config.quantile_window);
        for x in xs {
            let c = x - &mu_x;
            scores.insert((&precision * &c).dot(&c));
        }

        Ok(Self {
            mu_x_hat: mu_x,
            mu_y_hat: mu_y,
            count: n0,
            precision,
            gram_inv,
            precision_count: n0,
            r_hat,
            scores,
            uniform_rng: seeded_rng(seed, &[PURPOSE_UNIFORM]),
            coin_rng: seeded_rng(seed, &[PURPOSE_UPDATE_COIN]),
            skipped_precision_updates: 0,
        })
    }

    pub fn covariate_dim(&self) -> usize {
        self.mu_x_hat.len()
    }

    pub fn mu_x_hat(&self) -> &DVector<f64> {
        &self.mu_x_hat
    }

    pub fn mu_y_hat(&self) -> &DVector<f64> {
        &self.mu_y_hat
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn r_hat(&self) -> f64 {
        self.r_hat
    }

    pub fn retained_scores(&self) -> usize {
        self.scores.len()
    }

    pub fn skipped_precision_updates(&self) -> usize {
        self.skipped_precision_updates
    }

    /// Incremental mean update, applied at every step whether or not the
    /// point is selected.
    pub fn update_means(&mut self, y: &DVector<f64>, x: &DVector<f64>) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        self.mu_x_hat += (x - &self.mu_x_hat) * w;
        self.mu_y_hat += (y - &self.mu_y_hat) * w;
    }

    /// Leverage score of `x` under the current precision and mean: one
    /// matrix-vector product.
    pub fn leverage(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.mu_x_hat.len() {
            return Err(Error::Dimension {
                what: "covariate",
                expected: self.mu_x_hat.len(),
                actual: x.len(),
            });
        }
        let c = x - &self.mu_x_hat;
        Ok((&self.precision * &c).dot(&c))
    }

    /// Feeds an observed leverage score to the quantile tracker.
    pub fn observe_score(&mut self, leverage: f64) {
        self.scores.insert(leverage);
    }

    /// Recomputes the threshold as the empirical upper quantile of the
    /// retained scores at the config's tail target; `+inf` when the tail
    /// target is zero.
    pub fn update_threshold(&mut self, config: &SamplerConfig) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::EmptyInput {
                what: "retained leverage scores",
            });
        }
        let tail = config.tail_target();
        self.r_hat = if tail <= 0.0 {
            f64::INFINITY
        } else {
            self.scores
                .upper_quantile(tail)
                .expect("tracker checked non-empty")
        };
        Ok(())
    }

    /// With probability `u`, absorbs the rank-one term of the centered
    /// covariate into the running inverse via Sherman-Morrison and rescales
    /// the precision estimate. A denominator under 1e-12 skips the update
    /// and bumps a counter.
    pub fn sparse_precision_update(
        &mut self,
        x: &DVector<f64>,
        config: &SamplerConfig,
    ) -> Result<()> {
        if x.len() != self.mu_x_hat.len() {
            return Err(Error::Dimension {
                what: "covariate",
                expected: self.mu_x_hat.len(),
                actual: x.len(),
            });
        }
        let coin: f64 = self.coin_rng.gen();
        if coin >= config.u {
            return Ok(());
        }
        let w = x - &self.mu_x_hat;
        if w.norm_squared() == 0.0 {
            return Ok(());
        }
        let g = &self.gram_inv * &w;
        let denom = 1.0 + w.dot(&g);
        if denom.abs() < 1e-12 {
            self.skipped_precision_updates += 1;
            return Ok(());
        }
        self.gram_inv -= &g * g.transpose() / denom;
        // Symmetrize to keep round-off from accumulating.
        let sym = (&self.gram_inv + self.gram_inv.transpose()) * 0.5;
        self.gram_inv = sym;
        self.precision_count += 1;
        self.precision = &self.gram_inv * self.precision_count as f64;
        Ok(())
    }

    /// Draws the selection uniform and applies the plugged-in sampling
    /// function. The uniform lies in (0, 1], so a zero base rate can never
    /// fire the base branch and `s_hat = 1` always selects.
    pub fn decide(&mut self, config: &SamplerConfig, x: &DVector<f64>) -> Result<Decision> {
        let leverage = self.leverage(x)?;
        let uniform_draw: f64 = self.uniform_rng.sample(OpenClosed01);
        let q0 = config.effective_q0();
        let exceeds = leverage > self.r_hat;
        let s_hat = q0 + (1.0 - q0) * if exceeds { 1.0 } else { 0.0 };
        let selected = uniform_draw <= s_hat;
        let branch = if !selected {
            Branch::Rejected
        } else if uniform_draw <= q0 {
            Branch::Base
        } else {
            Branch::Leverage
        };
        Ok(Decision {
            selected,
            leverage,
            threshold: self.r_hat,
            s_hat,
            uniform_draw,
            branch,
        })
    }
}

/// Upper-tail chi-square quantile: the `r` with `P(chi2_p > r) = tail`,
/// found by a bracketed bisection on the regularized incomplete gamma
/// function to absolute tolerance 1e-10.
pub fn chi_square_threshold(p: usize, tail: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: "degrees of freedom must be positive".into(),
        });
    }
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::InvalidParameter {
            name: "tail",
            reason: format!("tail probability must lie in (0, 1), got {tail}"),
        });
    }
    let survival = |r: f64| gamma_ur(p as f64 / 2.0, r / 2.0);
    let mut lo = 0.0;
    let mut hi = p as f64;
    while survival(hi) > tail {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidParameter {
                name: "tail",
                reason: "failed to bracket the quantile".into(),
            });
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if survival(mid) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Fraction of selected decisions, `N / n`.
pub fn realized_rate(decisions: &[Decision]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::EmptyInput { what: "decisions" });
    }
    Ok(decisions.iter().filter(|d| d.selected).count() as f64 / decisions.len() as f64)
}
