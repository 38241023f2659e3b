//! Linear multivariate time-series models: VARX and seasonal VARX.
//!
//! A model is a set of lag coefficient matrices, an innovation covariance
//! and means. The centered form ties everything together: with `B` the
//! stacked coefficient matrix and `x_t` the lag embedding,
//!
//! ```text
//! y[t] - mu_y = B' * (x[t] - mu_x) + e[t]
//! ```
//!
//! Simulation, lag embedding and the stacked `B` all follow that single
//! convention, which the tests verify against each other.

mod elliptical;
pub mod io;

pub use elliptical::EllipticalSampler;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{check_positive_definite, spectral_radius};
use crate::seed::{seeded_rng, PURPOSE_EXOGENOUS, PURPOSE_NOISE};

/// Innovation family for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Gaussian,
    StudentT,
}

impl NoiseFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::StudentT => "student_t",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseFamily::Gaussian),
            "student_t" => Ok(NoiseFamily::StudentT),
            other => Err(Error::InvalidParameter {
                name: "noise family",
                reason: format!("unknown family {other:?}"),
            }),
        }
    }
}

/// Distribution of an innovation or exogenous process: family, degrees of
/// freedom (Student-t only) and scatter matrix.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub df: Option<f64>,
    pub scale: DMatrix<f64>,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, df: Option<f64>, scale: DMatrix<f64>) -> Result<Self> {
        let spec = Self { family, df, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(scale: DMatrix<f64>) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, None, scale)
    }

    pub fn student_t(df: f64, scale: DMatrix<f64>) -> Result<Self> {
        Self::new(NoiseFamily::StudentT, Some(df), scale)
    }

    /// Same family and degrees of freedom with a different scatter.
    pub fn with_scale(&self, scale: DMatrix<f64>) -> Result<Self> {
        Self::new(self.family, self.df, scale)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive_definite(&self.scale, "noise scale")?;
        match self.family {
            NoiseFamily::Gaussian => Ok(()),
            NoiseFamily::StudentT => match self.df {
                Some(df) if df > 2.0 => Ok(()),
                Some(df) => Err(Error::InvalidParameter {
                    name: "df",
                    reason: format!("degrees of freedom must exceed 2, got {df}"),
                }),
                None => Err(Error::InvalidParameter {
                    name: "df",
                    reason: "student_t requires degrees of freedom".into(),
                }),
            },
        }
    }
}

/// One time step of a stream: the response and, when the model has an
/// exogenous part, the exogenous input observed at the same step.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPoint {
    pub t: usize,
    pub y: DVector<f64>,
    pub v: Option<DVector<f64>>,
}

/// Lag-embedded regressor for time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub t: usize,
    pub x: DVector<f64>,
}

/// Common surface of VARX and seasonal VARX needed by streaming consumers.
pub trait LagModel {
    fn response_dim(&self) -> usize;
    fn covariate_dim(&self) -> usize;
    /// Deepest lag entering the embedding.
    fn max_lag(&self) -> usize;
    /// Embeds the covariate for the step following `history`. The history
    /// must hold at least `max_lag` points with consecutive time indices.
    fn embed(&self, history: &[StreamPoint]) -> Result<Covariate>;
    /// Stacked coefficient matrix `B` (p x K) of the centered form.
    fn stacked_coefficients(&self) -> DMatrix<f64>;
    /// Stationary mean of the embedded covariate.
    fn mean_covariate(&self) -> DVector<f64>;
}

/// VARX(p1, p2) specification.
#[derive(Debug, Clone, PartialEq)]
pub struct VarxSpec {
    pub k: usize,
    pub p1: usize,
    pub p2: usize,
    pub phi: Vec<DMatrix<f64>>,
    pub psi: Vec<DMatrix<f64>>,
    pub omega: DMatrix<f64>,
    pub mu_y: DVector<f64>,
    pub mu_v: DVector<f64>,
}

/// Seasonal VARX: short lags `1..=p1` plus seasonal lags at multiples of
/// `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalVarxSpec {
    pub k: usize,
    pub p1: usize,
    pub p2_seasonal: usize,
    pub period: usize,
    pub phi: Vec<DMatrix<f64>>,
    pub theta: Vec<DMatrix<f64>>,
    pub omega: DMatrix<f64>,
    pub mu_y: DVector<f64>,
}

/// Either model kind, as read back from stream metadata.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Varx(VarxSpec),
    Seasonal(SeasonalVarxSpec),
}

impl LagModel for ModelSpec {
    fn response_dim(&self) -> usize {
        match self {
            ModelSpec::Varx(s) => s.response_dim(),
            ModelSpec::Seasonal(s) => s.response_dim(),
        }
    }

    fn covariate_dim(&self) -> usize {
        match self {
            ModelSpec::Varx(s) => s.covariate_dim(),
            ModelSpec::Seasonal(s) => s.covariate_dim(),
        }
    }

    fn max_lag(&self) -> usize {
        match self {
            ModelSpec::Varx(s) => s.max_lag(),
            ModelSpec::Seasonal(s) => s.max_lag(),
        }
    }

    fn embed(&self, history: &[StreamPoint]) -> Result<Covariate> {
        match self {
            ModelSpec::Varx(s) => s.embed(history),
            ModelSpec::Seasonal(s) => s.embed(history),
        }
    }

    fn stacked_coefficients(&self) -> DMatrix<f64> {
        match self {
            ModelSpec::Varx(s) => s.stacked_coefficients(),
            ModelSpec::Seasonal(s) => s.stacked_coefficients(),
        }
    }

    fn mean_covariate(&self) -> DVector<f64> {
        match self {
            ModelSpec::Varx(s) => s.mean_covariate(),
            ModelSpec::Seasonal(s) => s.mean_covariate(),
        }
    }
}

impl ModelSpec {
    pub fn simulate(
        &self,
        noise: &NoiseSpec,
        n: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Vec<StreamPoint>> {
        match self {
            ModelSpec::Varx(s) => s.simulate(noise, n, burn_in, seed),
            ModelSpec::Seasonal(s) => s.simulate(noise, n, burn_in, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Varx(s) => s.validate(),
            ModelSpec::Seasonal(s) => s.validate(),
        }
    }
}

/// Builds the block companion matrix for coefficient matrices placed at the
/// given lags; every other lag block is zero.
fn companion(k: usize, blocks: &[(usize, &DMatrix<f64>)]) -> DMatrix<f64> {
    let max_lag = blocks.iter().map(|(lag, _)| *lag).max().unwrap_or(0);
    if max_lag == 0 {
        return DMatrix::zeros(0, 0);
    }
    let dim = k * max_lag;
    let mut c = DMatrix::zeros(dim, dim);
    for (lag, m) in blocks {
        c.view_mut((0, (lag - 1) * k), (k, k)).copy_from(*m);
    }
    for r in 1..max_lag {
        c.view_mut((r * k, (r - 1) * k), (k, k))
            .copy_from(&DMatrix::identity(k, k));
    }
    c
}

fn check_square_blocks(mats: &[DMatrix<f64>], k: usize, what: &'static str) -> Result<()> {
    for m in mats {
        if m.nrows() != k || m.ncols() != k {
            return Err(Error::Dimension {
                what,
                expected: k,
                actual: if m.nrows() != k { m.nrows() } else { m.ncols() },
            });
        }
    }
    Ok(())
}

fn check_vector(v: &DVector<f64>, k: usize, what: &'static str) -> Result<()> {
    if v.len() != k {
        return Err(Error::Dimension {
            what,
            expected: k,
            actual: v.len(),
        });
    }
    Ok(())
}

/// Checks the tail of `history` used for embedding: enough points, strictly
/// consecutive time indices, responses of the right dimension.
fn check_history(history: &[StreamPoint], need: usize, k: usize) -> Result<&[StreamPoint]> {
    if history.len() < need {
        return Err(Error::InsufficientData {
            what: "lag history",
            needed: need,
            actual: history.len(),
        });
    }
    let tail = &history[history.len() - need..];
    for w in tail.windows(2) {
        if w[1].t != w[0].t + 1 {
            return Err(Error::InvalidParameter {
                name: "history",
                reason: format!(
                    "time indices must be consecutive, got {} after {}",
                    w[1].t, w[0].t
                ),
            });
        }
    }
    for p in tail {
        check_vector(&p.y, k, "history response")?;
    }
    Ok(tail)
}

/// Random-stable draw shared by both generators: i.i.d. standard normal
/// entries for each lag block, then the lag-`l` block is scaled by `c^l`,
/// which rescales every companion eigenvalue by exactly `c`.
fn scale_blocks_to_radius(k: usize, lags: &[usize], mats: &mut [DMatrix<f64>], target: f64) {
    let blocks: Vec<(usize, &DMatrix<f64>)> = lags.iter().copied().zip(mats.iter()).collect();
    let radius = spectral_radius(&companion(k, &blocks));
    if radius > 0.0 {
        let c = target / radius;
        for (lag, m) in lags.iter().zip(mats.iter_mut()) {
            *m *= c.powi(*lag as i32);
        }
    }
}

fn random_omega(k: usize, rng: &mut rand_chacha::ChaCha12Rng) -> DMatrix<f64> {
    use rand::Rng;
    let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(k, k) * 0.1
}

impl VarxSpec {
    pub fn new(
        phi: Vec<DMatrix<f64>>,
        psi: Vec<DMatrix<f64>>,
        omega: DMatrix<f64>,
        mu_y: DVector<f64>,
        mu_v: DVector<f64>,
    ) -> Result<Self> {
        let k = omega.nrows();
        let spec = Self {
            k,
            p1: phi.len(),
            p2: psi.len(),
            phi,
            psi,
            omega,
            mu_y,
            mu_v,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every invariant: block dimensions, symmetric positive-definite
    /// innovation covariance, and stationarity of the autoregressive part.
    pub fn validate(&self) -> Result<()> {
        if self.phi.len() != self.p1 || self.psi.len() != self.p2 {
            return Err(Error::InvalidParameter {
                name: "lag orders",
                reason: "declared orders do not match coefficient counts".into(),
            });
        }
        check_square_blocks(&self.phi, self.k, "autoregressive coefficient")?;
        check_square_blocks(&self.psi, self.k, "exogenous coefficient")?;
        check_vector(&self.mu_y, self.k, "response mean")?;
        check_vector(&self.mu_v, self.k, "exogenous mean")?;
        check_positive_definite(&self.omega, "innovation covariance")?;
        let radius = self.companion_spectral_radius();
        if radius >= 1.0 {
            return Err(Error::NonStationary { radius });
        }
        Ok(())
    }

    /// Spectral radius of the companion matrix of the autoregressive part.
    pub fn companion_spectral_radius(&self) -> f64 {
        let blocks: Vec<(usize, &DMatrix<f64>)> = (1..=self.p1).zip(self.phi.iter()).collect();
        spectral_radius(&companion(self.k, &blocks))
    }

    /// Seeded generator of a stationary spec: i.i.d. N(0,1) coefficient
    /// entries with the autoregressive block rescaled to the target
    /// companion spectral radius, and `omega = A A' + 0.1 I`.
    pub fn random_stable(
        k: usize,
        p1: usize,
        p2: usize,
        target_radius: f64,
        seed: u64,
    ) -> Result<Self> {
        use rand::Rng;
        if !(target_radius > 0.0 && target_radius < 1.0) {
            return Err(Error::InvalidParameter {
                name: "target_radius",
                reason: format!("must lie in (0, 1), got {target_radius}"),
            });
        }
        let mut rng = seeded_rng(seed, &[]);
        let mut phi: Vec<DMatrix<f64>> = (0..p1)
            .map(|_| DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let lags: Vec<usize> = (1..=p1).collect();
        scale_blocks_to_radius(k, &lags, &mut phi, target_radius);
        let psi: Vec<DMatrix<f64>> = (0..p2)
            .map(|_| DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let omega = random_omega(k, &mut rng);
        Self::new(phi, psi, omega, DVector::zeros(k), DVector::zeros(k))
    }

    /// Innovation spec with this model's covariance as the scatter.
    pub fn noise(&self, family: NoiseFamily, df: Option<f64>) -> Result<NoiseSpec> {
        NoiseSpec::new(family, df, self.omega.clone())
    }

    /// Simulates `n` points after discarding `burn_in` warm-up steps.
    ///
    /// Innovations `e_t` use `noise`; the exogenous process draws from the
    /// same family with identity scatter around `mu_v`. Each step draws
    /// `v_t` from the exogenous stream and `e_t` from the noise stream, in
    /// that order, so the innovation sequence depends only on the seed.
    pub fn simulate(
        &self,
        noise: &NoiseSpec,
        n: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Vec<StreamPoint>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "stream length must be positive".into(),
            });
        }
        if burn_in < self.max_lag() {
            return Err(Error::InvalidParameter {
                name: "burn_in",
                reason: format!("must be at least the maximum lag {}", self.max_lag()),
            });
        }
        if noise.scale.nrows() != self.k {
            return Err(Error::Dimension {
                what: "noise scale",
                expected: self.k,
                actual: noise.scale.nrows(),
            });
        }
        let noise_sampler =
            EllipticalSampler::centered(noise.scale.clone(), noise.family, noise.df)?;
        let exo_sampler = if self.p2 > 0 {
            Some(EllipticalSampler::centered(
                DMatrix::identity(self.k, self.k),
                noise.family,
                noise.df,
            )?)
        } else {
            None
        };
        let mut noise_rng = seeded_rng(seed, &[PURPOSE_NOISE]);
        let mut exo_rng = seeded_rng(seed, &[PURPOSE_EXOGENOUS]);

        let mut y_hist: VecDeque<DVector<f64>> = VecDeque::with_capacity(self.p1 + 1);
        let mut v_hist: VecDeque<DVector<f64>> = VecDeque::with_capacity(self.p2 + 1);
        let mut out = Vec::with_capacity(n);
        for step in 0..burn_in + n {
            let v_t = exo_sampler
                .as_ref()
                .map(|s| &self.mu_v + s.sample(&mut exo_rng));
            let e_t = noise_sampler.sample(&mut noise_rng);
            let mut y_t = self.mu_y.clone();
            for (i, phi) in self.phi.iter().enumerate() {
                if let Some(past) = y_hist.get(i) {
                    y_t += phi * (past - &self.mu_y);
                }
            }
            for (j, psi) in self.psi.iter().enumerate() {
                if let Some(past) = v_hist.get(j) {
                    y_t += psi * (past - &self.mu_v);
                }
            }
            y_t += e_t;

            y_hist.push_front(y_t.clone());
            y_hist.truncate(self.p1);
            if let Some(v) = &v_t {
                v_hist.push_front(v.clone());
                v_hist.truncate(self.p2);
            }
            if step >= burn_in {
                out.push(StreamPoint {
                    t: step - burn_in,
                    y: y_t,
                    v: v_t,
                });
            }
        }
        Ok(out)
    }
}

impl LagModel for VarxSpec {
    fn response_dim(&self) -> usize {
        self.k
    }

    fn covariate_dim(&self) -> usize {
        self.k * (self.p1 + self.p2)
    }

    fn max_lag(&self) -> usize {
        self.p1.max(self.p2)
    }

    fn embed(&self, history: &[StreamPoint]) -> Result<Covariate> {
        if self.max_lag() == 0 {
            return Ok(Covariate {
                t: history.last().map_or(0, |p| p.t + 1),
                x: DVector::zeros(0),
            });
        }
        let tail = check_history(history, self.max_lag(), self.k)?;
        let t_next = tail.last().expect("tail nonempty").t + 1;
        let mut x = DVector::zeros(self.covariate_dim());
        let len = tail.len();
        for i in 1..=self.p1 {
            x.rows_mut((i - 1) * self.k, self.k)
                .copy_from(&tail[len - i].y);
        }
        for j in 1..=self.p2 {
            let v = tail[len - j].v.as_ref().ok_or(Error::InvalidParameter {
                name: "history",
                reason: "exogenous input missing from a stream point".into(),
            })?;
            check_vector(v, self.k, "history exogenous input")?;
            x.rows_mut((self.p1 + j - 1) * self.k, self.k).copy_from(v);
        }
        Ok(Covariate { t: t_next, x })
    }

    fn stacked_coefficients(&self) -> DMatrix<f64> {
        let p = self.covariate_dim();
        let mut b = DMatrix::zeros(p, self.k);
        for (i, phi) in self.phi.iter().enumerate() {
            b.view_mut((i * self.k, 0), (self.k, self.k))
                .copy_from(&phi.transpose());
        }
        for (j, psi) in self.psi.iter().enumerate() {
            b.view_mut(((self.p1 + j) * self.k, 0), (self.k, self.k))
                .copy_from(&psi.transpose());
        }
        b
    }

    fn mean_covariate(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(self.covariate_dim());
        for i in 0..self.p1 {
            mu.rows_mut(i * self.k, self.k).copy_from(&self.mu_y);
        }
        for j in 0..self.p2 {
            mu.rows_mut((self.p1 + j) * self.k, self.k)
                .copy_from(&self.mu_v);
        }
        mu
    }
}

impl SeasonalVarxSpec {
    pub fn new(
        phi: Vec<DMatrix<f64>>,
        theta: Vec<DMatrix<f64>>,
        period: usize,
        omega: DMatrix<f64>,
        mu_y: DVector<f64>,
    ) -> Result<Self> {
        let k = omega.nrows();
        let spec = Self {
            k,
            p1: phi.len(),
            p2_seasonal: theta.len(),
            period,
            phi,
            theta,
            omega,
            mu_y,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phi.len() != self.p1 || self.theta.len() != self.p2_seasonal {
            return Err(Error::InvalidParameter {
                name: "lag orders",
                reason: "declared orders do not match coefficient counts".into(),
            });
        }
        if self.p2_seasonal > 0 && self.period == 0 {
            return Err(Error::InvalidParameter {
                name: "period",
                reason: "seasonal period must be positive".into(),
            });
        }
        check_square_blocks(&self.phi, self.k, "autoregressive coefficient")?;
        check_square_blocks(&self.theta, self.k, "seasonal coefficient")?;
        check_vector(&self.mu_y, self.k, "response mean")?;
        check_positive_definite(&self.omega, "innovation covariance")?;
        let radius = self.companion_spectral_radius();
        if radius >= 1.0 {
            return Err(Error::NonStationary { radius });
        }
        Ok(())
    }

    fn lag_blocks(&self) -> Vec<(usize, &DMatrix<f64>)> {
        let mut blocks: Vec<(usize, &DMatrix<f64>)> = (1..=self.p1).zip(self.phi.iter()).collect();
        for (i, theta) in self.theta.iter().enumerate() {
            blocks.push((self.period * (i + 1), theta));
        }
        blocks
    }

    /// Spectral radius of the companion matrix with the seasonal lags
    /// expanded in place.
    pub fn companion_spectral_radius(&self) -> f64 {
        spectral_radius(&companion(self.k, &self.lag_blocks()))
    }

    /// Seeded stationary generator. Blocks are drawn with i.i.d. N(0,1)
    /// entries, then all blocks are shrunk by a common factor found by
    /// bisection until the expanded companion radius is at most the target;
    /// uniform shrinking keeps the seasonal block comparable in size to the
    /// short-lag blocks.
    pub fn random_stable(
        k: usize,
        p1: usize,
        p2_seasonal: usize,
        period: usize,
        target_radius: f64,
        seed: u64,
    ) -> Result<Self> {
        use rand::Rng;
        if !(target_radius > 0.0 && target_radius < 1.0) {
            return Err(Error::InvalidParameter {
                name: "target_radius",
                reason: format!("must lie in (0, 1), got {target_radius}"),
            });
        }
        let mut rng = seeded_rng(seed, &[]);
        let phi: Vec<DMatrix<f64>> = (0..p1)
            .map(|_| DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let theta: Vec<DMatrix<f64>> = (0..p2_seasonal)
            .map(|_| DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let omega = random_omega(k, &mut rng);

        let radius_at = |c: f64| {
            let phi_c: Vec<DMatrix<f64>> = phi.iter().map(|m| m * c).collect();
            let theta_c: Vec<DMatrix<f64>> = theta.iter().map(|m| m * c).collect();
            let mut blocks: Vec<(usize, &DMatrix<f64>)> = (1..=p1).zip(phi_c.iter()).collect();
            for (i, m) in theta_c.iter().enumerate() {
                blocks.push((period * (i + 1), m));
            }
            spectral_radius(&companion(k, &blocks))
        };

        let mut scale = 1.0;
        if radius_at(1.0) > target_radius {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if radius_at(mid) <= target_radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            scale = lo;
        }
        let phi = phi.into_iter().map(|m| m * scale).collect();
        let theta = theta.into_iter().map(|m| m * scale).collect();
        Self::new(phi, theta, period, omega, DVector::zeros(k))
    }

    pub fn noise(&self, family: NoiseFamily, df: Option<f64>) -> Result<NoiseSpec> {
        NoiseSpec::new(family, df, self.omega.clone())
    }

    /// Simulates `n` points after `burn_in` warm-up steps. There is no
    /// exogenous process; each step draws one innovation.
    pub fn simulate(
        &self,
        noise: &NoiseSpec,
        n: usize,
        burn_in: usize,
        seed: u64,
    ) -> Result<Vec<StreamPoint>> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "stream length must be positive".into(),
            });
        }
        if burn_in < self.max_lag() {
            return Err(Error::InvalidParameter {
                name: "burn_in",
                reason: format!("must be at least the maximum lag {}", self.max_lag()),
            });
        }
        if noise.scale.nrows() != self.k {
            return Err(Error::Dimension {
                what: "noise scale",
                expected: self.k,
                actual: noise.scale.nrows(),
            });
        }
        let noise_sampler =
            EllipticalSampler::centered(noise.scale.clone(), noise.family, noise.df)?;
        let mut noise_rng = seeded_rng(seed, &[PURPOSE_NOISE]);

        let depth = self.max_lag();
        let mut y_hist: VecDeque<DVector<f64>> = VecDeque::with_capacity(depth + 1);
        let mut out = Vec::with_capacity(n);
        for step in 0..burn_in + n {
            let e_t = noise_sampler.sample(&mut noise_rng);
            let mut y_t = self.mu_y.clone();
            for (i, phi) in self.phi.iter().enumerate() {
                if let Some(past) = y_hist.get(i) {
                    y_t += phi * (past - &self.mu_y);
                }
            }
            for (i, theta) in self.theta.iter().enumerate() {
                if let Some(past) = y_hist.get(self.period * (i + 1) - 1) {
                    y_t += theta * (past - &self.mu_y);
                }
            }
            y_t += e_t;

            y_hist.push_front(y_t.clone());
            y_hist.truncate(depth);
            if step >= burn_in {
                out.push(StreamPoint {
                    t: step - burn_in,
                    y: y_t,
                    v: None,
                });
            }
        }
        Ok(out)
    }
}

impl LagModel for SeasonalVarxSpec {
    fn response_dim(&self) -> usize {
        self.k
    }

    fn covariate_dim(&self) -> usize {
        self.k * (self.p1 + self.p2_seasonal)
    }

    fn max_lag(&self) -> usize {
        self.p1.max(self.period * self.p2_seasonal)
    }

    fn embed(&self, history: &[StreamPoint]) -> Result<Covariate> {
        let tail = check_history(history, self.max_lag(), self.k)?;
        let t_next = tail.last().expect("tail nonempty").t + 1;
        let mut x = DVector::zeros(self.covariate_dim());
        let len = tail.len();
        for i in 1..=self.p1 {
            x.rows_mut((i - 1) * self.k, self.k)
                .copy_from(&tail[len - i].y);
        }
        for i in 1..=self.p2_seasonal {
            let lag = self.period * i;
            x.rows_mut((self.p1 + i - 1) * self.k, self.k)
                .copy_from(&tail[len - lag].y);
        }
        Ok(Covariate { t: t_next, x })
    }

    fn stacked_coefficients(&self) -> DMatrix<f64> {
        let p = self.covariate_dim();
        let mut b = DMatrix::zeros(p, self.k);
        for (i, phi) in self.phi.iter().enumerate() {
            b.view_mut((i * self.k, 0), (self.k, self.k))
                .copy_from(&phi.transpose());
        }
        for (i, theta) in self.theta.iter().enumerate() {
            b.view_mut(((self.p1 + i) * self.k, 0), (self.k, self.k))
                .copy_from(&theta.transpose());
        }
        b
    }

    fn mean_covariate(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(self.covariate_dim());
        for i in 0..self.p1 + self.p2_seasonal {
            mu.rows_mut(i * self.k, self.k).copy_from(&self.mu_y);
        }
        mu
    }
}

/// Default burn-in: ten times the maximum lag, at least one step.
pub fn suggested_burn_in(max_lag: usize) -> usize {
    (10 * max_lag).max(1)
}
