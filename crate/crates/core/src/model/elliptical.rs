//! Elliptically contoured sampling.
//!
//! Draws follow `mu + xi * S^{1/2} * u` with `u` uniform on the unit sphere
//! and `xi` the generating variate of the family. The Gaussian case is
//! realized directly as a standard multivariate normal; the Student-t case
//! divides a Gaussian draw by an independent chi-square scaled by its
//! degrees of freedom, so the scatter matrix is the t scale matrix (the
//! covariance is `df / (df - 2)` times it).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::symmetric_sqrt;
use crate::model::{NoiseFamily, NoiseSpec};

/// Sampler for one elliptical distribution. The symmetric square root of the
/// scatter matrix is computed once at construction and reused for every draw.
#[derive(Debug, Clone)]
pub struct EllipticalSampler {
    mu: DVector<f64>,
    sqrt_scale: DMatrix<f64>,
    family: NoiseFamily,
    df: Option<f64>,
}

impl EllipticalSampler {
    pub fn new(mu: DVector<f64>, noise: &NoiseSpec) -> Result<Self> {
        noise.validate()?;
        if mu.len() != noise.scale.nrows() {
            return Err(Error::Dimension {
                what: "elliptical location vs scatter",
                expected: noise.scale.nrows(),
                actual: mu.len(),
            });
        }
        Ok(Self {
            mu,
            sqrt_scale: symmetric_sqrt(&noise.scale, "elliptical scatter")?,
            family: noise.family,
            df: noise.df,
        })
    }

    /// Convenience constructor for a centered draw with the given scatter.
    pub fn centered(scale: DMatrix<f64>, family: NoiseFamily, df: Option<f64>) -> Result<Self> {
        let dim = scale.nrows();
        let noise = NoiseSpec::new(family, df, scale)?;
        Self::new(DVector::zeros(dim), &noise)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let p = self.dim();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = &self.sqrt_scale * z;
        if let NoiseFamily::StudentT = self.family {
            let df = self.df.expect("validated student_t has df");
            let w: f64 = ChiSquared::new(df).expect("df > 2").sample(rng);
            x *= (df / w).sqrt();
        }
        x + &self.mu
    }
}
