//! Recursive least squares over the selected subsample.
//!
//! The state keeps `a_inv = (ridge I + sum x x')^{-1}` over the pilot plus
//! every selected centered pair, the cross product `c = sum x y'`, and the
//! coefficient estimate `b_hat = a_inv c`, updated in O(p^2 + pK) per step
//! through the Sherman-Morrison identity instead of a full re-multiply:
//!
//! ```text
//! a_inv <- a_inv - (a_inv x)(x' a_inv) / (1 + x' a_inv x)
//! b_hat <- b_hat + (a_inv x) (y - b_hat' x)' / (1 + x' a_inv x)
//! ```
//!
//! `batch_ls` solves the same normal equations by a direct factorization and
//! serves as the oracle the recursive path is tested against.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Estimator state over pilot-plus-selected rows.
#[derive(Debug, Clone)]
pub struct RlsState {
    pub(crate) a_inv: DMatrix<f64>,
    pub(crate) c: DMatrix<f64>,
    pub(crate) b_hat: DMatrix<f64>,
    pub(crate) n_selected: usize,
    pub(crate) omega_hat: DMatrix<f64>,
    pub(crate) omega_count: usize,
    pub(crate) ridge: f64,
    pub(crate) skipped_updates: usize,
}

/// Outcome of one recursive update.
#[derive(Debug, Clone)]
pub struct RlsUpdate {
    /// False when the update was skipped on a near-singular denominator.
    pub applied: bool,
    /// Innovation `y - b_hat' x` under the pre-update coefficients.
    pub innovation: DVector<f64>,
}

impl RlsState {
    /// Initializes from centered pilot pairs. `ridge = None` applies the
    /// default `1e-6 * trace(X'X) / p`; an explicit value (zero included) is
    /// used as given.
    pub fn init(xs: &[DVector<f64>], ys: &[DVector<f64>], ridge: Option<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::InvalidParameter {
                name: "pilot",
                reason: "pilot covariates and responses must pair up".into(),
            });
        }
        let p = xs[0].len();
        let k = ys[0].len();
        let mut gram = DMatrix::zeros(p, p);
        let mut cross = DMatrix::zeros(p, k);
        for (x, y) in xs.iter().zip(ys.iter()) {
            if x.len() != p || y.len() != k {
                return Err(Error::Dimension {
                    what: "pilot pair",
                    expected: p,
                    actual: x.len(),
                });
            }
            gram += x * x.transpose();
            cross += x * y.transpose();
        }
        let ridge = ridge.unwrap_or(1e-6 * gram.trace() / p as f64);
        if ridge < 0.0 {
            return Err(Error::InvalidParameter {
                name: "ridge",
                reason: "must be nonnegative".into(),
            });
        }
        let a = &gram + DMatrix::identity(p, p) * ridge;
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or(Error::Singular { what: "pilot Gram" })?;
        let a_inv = (&a_inv + a_inv.transpose()) * 0.5;
        let b_hat = &a_inv * &cross;

        let mut omega_hat = DMatrix::zeros(k, k);
        for (x, y) in xs.iter().zip(ys.iter()) {
            let r = y - b_hat.transpose() * x;
            omega_hat += &r * r.transpose();
        }
        omega_hat /= 1.0_f64.max((xs.len() as f64) - (p as f64));

        Ok(Self {
            a_inv,
            c: cross,
            b_hat,
            n_selected: 0,
            omega_hat,
            omega_count: xs.len(),
            ridge,
            skipped_updates: 0,
        })
    }

    pub fn covariate_dim(&self) -> usize {
        self.a_inv.nrows()
    }

    pub fn response_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn b_hat(&self) -> &DMatrix<f64> {
        &self.b_hat
    }

    pub fn omega_hat(&self) -> &DMatrix<f64> {
        &self.omega_hat
    }

    pub fn n_selected(&self) -> usize {
        self.n_selected
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn skipped_updates(&self) -> usize {
        self.skipped_updates
    }

    /// Absorbs one centered pair. A denominator below 1e-12 in absolute
    /// value skips the update and bumps the skip counter.
    pub fn update(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<RlsUpdate> {
        if x.len() != self.covariate_dim() {
            return Err(Error::Dimension {
                what: "covariate",
                expected: self.covariate_dim(),
                actual: x.len(),
            });
        }
        if y.len() != self.response_dim() {
            return Err(Error::Dimension {
                what: "response",
                expected: self.response_dim(),
                actual: y.len(),
            });
        }
        let innovation = y - self.b_hat.transpose() * x;
        let g = &self.a_inv * x;
        let denom = 1.0 + x.dot(&g);
        if denom.abs() < 1e-12 {
            self.skipped_updates += 1;
            return Ok(RlsUpdate {
                applied: false,
                innovation,
            });
        }
        self.a_inv -= &g * g.transpose() / denom;
        let sym = (&self.a_inv + self.a_inv.transpose()) * 0.5;
        self.a_inv = sym;
        self.c += x * y.transpose();
        self.b_hat += &g * innovation.transpose() / denom;
        self.n_selected += 1;
        Ok(RlsUpdate {
            applied: true,
            innovation,
        })
    }

    /// Running mean of residual outer products over absorbed points.
    pub fn update_omega(&mut self, residual: &DVector<f64>) {
        self.omega_count += 1;
        let outer = residual * residual.transpose();
        let w = 1.0 / self.omega_count as f64;
        self.omega_hat += (outer - &self.omega_hat) * w;
    }

    /// One-step-ahead prediction `mu_y + b_hat' (x_next - mu_x)`.
    pub fn predict(
        &self,
        mu_x: &DVector<f64>,
        mu_y: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if x_next.len() != self.covariate_dim() || mu_x.len() != self.covariate_dim() {
            return Err(Error::Dimension {
                what: "prediction covariate",
                expected: self.covariate_dim(),
                actual: x_next.len(),
            });
        }
        Ok(mu_y + self.b_hat.transpose() * (x_next - mu_x))
    }
}

/// Direct least squares over centered rows: solves
/// `(sum x x') B = sum x y'` by LU factorization. Oracle for the recursive
/// path, deliberately not sharing any of its code.
pub fn batch_ls(xs: &[DVector<f64>], ys: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidParameter {
            name: "rows",
            reason: "covariates and responses must pair up".into(),
        });
    }
    let p = xs[0].len();
    let k = ys[0].len();
    let mut gram = DMatrix::zeros(p, p);
    let mut cross = DMatrix::zeros(p, k);
    for (x, y) in xs.iter().zip(ys.iter()) {
        gram += x * x.transpose();
        cross += x * y.transpose();
    }
    gram.lu()
        .solve(&cross)
        .ok_or(Error::Singular { what: "batch Gram" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LagModel, NoiseFamily, VarxSpec};
    use crate::seed::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_rows(
        p: usize,
        k: usize,
        n: usize,
        seed: u64,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut rng = seeded_rng(seed, &[]);
        let b = DMatrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let xs: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let ys: Vec<DVector<f64>> = xs
            .iter()
            .map(|x| {
                b.transpose() * x + DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        (xs, ys)
    }

    #[test]
    fn init_without_ridge_equals_batch_ls() {
        let (xs, ys) = gaussian_rows(4, 2, 50, 3);
        let state = RlsState::init(&xs, &ys, Some(0.0)).unwrap();
        let batch = batch_ls(&xs, &ys).unwrap();
        let rel = (state.b_hat() - &batch).norm() / batch.norm();
        assert!(rel < 1e-10, "relative error {rel}");
    }

    #[test]
    fn init_rejects_rank_deficient_pilot_without_ridge() {
        let row = DVector::from_vec(vec![1.0, 2.0]);
        let xs = vec![row.clone(), row.clone(), row.clone()];
        let ys = vec![DVector::zeros(1); 3];
        assert!(matches!(
            RlsState::init(&xs, &ys, Some(0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn ridge_makes_rank_deficient_pilot_solvable() {
        let row = DVector::from_vec(vec![1.0, 2.0]);
        let xs = vec![row.clone(), row.clone(), row.clone()];
        let ys = vec![DVector::from_vec(vec![3.0]); 3];
        let state = RlsState::init(&xs, &ys, Some(1e-3)).unwrap();
        assert!(state.b_hat().iter().all(|v| v.is_finite()));

        // Direct regularized solve as the oracle.
        let mut gram = DMatrix::zeros(2, 2);
        let mut cross = DMatrix::zeros(2, 1);
        for (x, y) in xs.iter().zip(ys.iter()) {
            gram += x * x.transpose();
            cross += x * y.transpose();
        }
        let direct = (gram + DMatrix::identity(2, 2) * 1e-3)
            .try_inverse()
            .unwrap()
            * cross;
        assert!((state.b_hat() - &direct).norm() < 1e-10);
    }

    #[test]
    fn rank_one_update_of_identity() {
        let (xs, ys) = gaussian_rows(2, 1, 10, 5);
        let mut state = RlsState::init(&xs, &ys, None).unwrap();
        // Overwrite with a clean slate to check the arithmetic in isolation.
        state.a_inv = DMatrix::identity(2, 2);
        state.c = DMatrix::zeros(2, 1);
        state.b_hat = DMatrix::zeros(2, 1);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![2.0]);
        state.update(&x, &y).unwrap();
        // (I + e1 e1')^{-1} = diag(1/2, 1)
        assert!((state.a_inv[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((state.a_inv[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(state.a_inv[(0, 1)].abs() < 1e-12);
        // b_hat = a_inv c = diag(1/2,1) * (2,0)' = (1, 0)'
        assert!((state.b_hat[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_covariate_only_bumps_bookkeeping() {
        let (xs, ys) = gaussian_rows(3, 2, 20, 7);
        let mut state = RlsState::init(&xs, &ys, None).unwrap();
        let before_a = state.a_inv.clone();
        let before_b = state.b_hat.clone();
        let n = state.n_selected();
        let out = state
            .update(&DVector::zeros(3), &DVector::from_vec(vec![1.0, 2.0]))
            .unwrap();
        assert!(out.applied);
        assert_eq!(state.a_inv, before_a);
        assert_eq!(state.b_hat, before_b);
        assert_eq!(state.n_selected(), n + 1);
    }

    #[test]
    fn five_hundred_updates_match_batch_oracle() {
        let (xs, ys) = gaussian_rows(10, 3, 530, 11);
        let pilot = 30;
        let mut state = RlsState::init(&xs[..pilot], &ys[..pilot], None).unwrap();
        for (x, y) in xs.iter().zip(ys.iter()).skip(pilot) {
            state.update(x, y).unwrap();
        }
        assert_eq!(state.n_selected(), 500);
        assert_eq!(state.skipped_updates(), 0);

        // Oracle: direct solve with the init ridge over all rows.
        let mut gram = DMatrix::identity(10, 10) * state.ridge();
        let mut cross = DMatrix::zeros(10, 3);
        for (x, y) in xs.iter().zip(ys.iter()) {
            gram += x * x.transpose();
            cross += x * y.transpose();
        }
        let direct = gram.lu().solve(&cross).unwrap();
        let rel = (state.b_hat() - &direct).norm() / direct.norm();
        assert!(rel < 1e-8, "relative Frobenius error {rel}");

        // Maintained identity: b_hat = a_inv * c.
        let recomputed = &state.a_inv * &state.c;
        let rel = (state.b_hat() - &recomputed).norm() / recomputed.norm();
        assert!(rel < 1e-10, "b_hat vs a_inv * c drift {rel}");
    }

    #[test]
    fn a_inv_stays_symmetric_over_long_runs() {
        let (xs, ys) = gaussian_rows(5, 1, 20, 13);
        let mut state = RlsState::init(&xs, &ys, None).unwrap();
        let mut rng = seeded_rng(29, &[]);
        for _ in 0..100_000 {
            let x = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = DVector::from_fn(1, |_, _| rng.sample::<f64, _>(StandardNormal));
            state.update(&x, &y).unwrap();
        }
        let asym = (&state.a_inv - state.a_inv.transpose()).amax();
        assert!(asym < 1e-10, "asymmetry {asym}");
        assert_eq!(state.skipped_updates(), 0);
    }

    #[test]
    fn batch_ls_single_exact_row() {
        let xs = vec![DVector::from_vec(vec![2.0])];
        let ys = vec![DVector::from_vec(vec![6.0])];
        let b = batch_ls(&xs, &ys).unwrap();
        assert!((b[(0, 0)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn batch_ls_recovers_noiseless_coefficients() {
        let mut rng = seeded_rng(31, &[]);
        let b_true = DMatrix::from_fn(3, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let xs: Vec<DVector<f64>> = (0..40)
            .map(|_| DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let ys: Vec<DVector<f64>> = xs.iter().map(|x| b_true.transpose() * x).collect();
        let b = batch_ls(&xs, &ys).unwrap();
        assert!((&b - &b_true).norm() < 1e-10);
    }

    #[test]
    fn batch_ls_is_consistent_on_simulated_varx() {
        let spec = VarxSpec::random_stable(3, 1, 1, 0.6, 17).unwrap();
        let noise = spec.noise(NoiseFamily::Gaussian, None).unwrap();
        let points = spec.simulate(&noise, 2000, 10, 19).unwrap();
        let b_true = spec.stacked_coefficients();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for t in spec.max_lag()..points.len() {
            xs.push(spec.embed(&points[..t]).unwrap().x);
            ys.push(points[t].y.clone());
        }
        let b = batch_ls(&xs, &ys).unwrap();
        let rel = (&b - &b_true).norm() / b_true.norm();
        assert!(rel < 0.2, "relative error {rel}");
    }

    #[test]
    fn batch_ls_rejects_singular_gram() {
        let xs = vec![DVector::from_vec(vec![1.0, 0.0]); 4];
        let ys = vec![DVector::from_vec(vec![1.0]); 4];
        assert!(matches!(batch_ls(&xs, &ys), Err(Error::Singular { .. })));
    }

    fn zeroed_state(p: usize, k: usize) -> RlsState {
        RlsState {
            a_inv: DMatrix::identity(p, p),
            c: DMatrix::zeros(p, k),
            b_hat: DMatrix::zeros(p, k),
            n_selected: 0,
            omega_hat: DMatrix::zeros(k, k),
            omega_count: 0,
            ridge: 0.0,
            skipped_updates: 0,
        }
    }

    #[test]
    fn omega_first_update_from_zero_is_the_outer_product() {
        let mut state = zeroed_state(2, 2);
        let r = DVector::from_vec(vec![1.0, -2.0]);
        state.update_omega(&r);
        let expected = &r * r.transpose();
        assert_eq!(state.omega_hat(), &expected);
    }

    #[test]
    fn omega_decays_to_zero_on_zero_residuals() {
        let mut state = zeroed_state(2, 2);
        state.update_omega(&DVector::from_vec(vec![3.0, 1.0]));
        for _ in 0..5000 {
            state.update_omega(&DVector::zeros(2));
        }
        assert!(state.omega_hat().amax() < 0.01);
    }

    #[test]
    fn omega_concentrates_on_identity() {
        let mut state = zeroed_state(2, 2);
        let mut rng = seeded_rng(37, &[]);
        for _ in 0..10_000 {
            let r = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            state.update_omega(&r);
        }
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (state.omega_hat()[(i, j)] - expected).abs() < 0.1,
                    "omega[{i},{j}] = {}",
                    state.omega_hat()[(i, j)]
                );
            }
        }
    }

    #[test]
    fn predict_with_zero_coefficients_returns_the_mean() {
        let mut state = zeroed_state(3, 2);
        state.b_hat = DMatrix::zeros(3, 2);
        let mu_x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mu_y = DVector::from_vec(vec![5.0, -1.0]);
        let x = DVector::from_vec(vec![9.0, 9.0, 9.0]);
        assert_eq!(state.predict(&mu_x, &mu_y, &x).unwrap(), mu_y);
    }

    #[test]
    fn predict_is_exact_on_noiseless_coefficients() {
        let mut rng = seeded_rng(41, &[]);
        let b = DMatrix::from_fn(3, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut state = zeroed_state(3, 2);
        state.b_hat = b.clone();
        let x = DVector::from_vec(vec![0.5, -0.25, 2.0]);
        let y = state
            .predict(&DVector::zeros(3), &DVector::zeros(2), &x)
            .unwrap();
        assert!((y - b.transpose() * x).norm() < 1e-14);
    }

    #[test]
    fn predict_linearity_identity() {
        let mut rng = seeded_rng(43, &[]);
        let mut state = zeroed_state(4, 3);
        state.b_hat = DMatrix::from_fn(4, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mu_x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mu_y = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x1 = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x2 = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        // predict(x1) + predict(x2) - predict(x1 + x2 - mu_x) = mu_y.
        let lhs = state.predict(&mu_x, &mu_y, &x1).unwrap()
            + state.predict(&mu_x, &mu_y, &x2).unwrap()
            - state.predict(&mu_x, &mu_y, &(&x1 + &x2 - &mu_x)).unwrap();
        assert!((lhs - mu_y).amax() < 1e-12);
    }
}
