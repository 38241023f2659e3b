use super::*;
use crate::model::{EllipticalSampler, NoiseFamily};
use approx::assert_abs_diff_eq;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_draw(p: usize) -> impl FnMut(&mut ChaCha12Rng) -> DVector<f64> {
    move |rng| DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Closed-form chi-square(2) partial expectation E[l 1{l > r}] = (r+2)e^{-r/2}.
fn chi2_upper_partial(r: f64) -> f64 {
    (r + 2.0) * (-r / 2.0).exp()
}

#[test]
fn constant_sampling_function_scales_the_covariance() {
    let mu = DVector::zeros(2);
    let summary = estimate_gamma(|_| 0.3, gaussian_draw(2), &mu, 100_000, 1).unwrap();
    assert_abs_diff_eq!(summary.q_hat, 0.3, epsilon = 1e-12);
    for i in 0..2 {
        for j in 0..2 {
            let expected = if i == j { 0.3 } else { 0.0 };
            assert!(
                (summary.gamma_hat[(i, j)] - expected).abs() < 0.02,
                "gamma[{i},{j}] = {}",
                summary.gamma_hat[(i, j)]
            );
        }
    }
}

#[test]
fn zero_sampling_function_gives_zero_moment_matrix() {
    let mu = DVector::zeros(2);
    let summary = estimate_gamma(|_| 0.0, gaussian_draw(2), &mu, 10_000, 2).unwrap();
    assert_eq!(summary.q_hat, 0.0);
    assert_eq!(summary.gamma_hat, DMatrix::zeros(2, 2));
    assert_eq!(summary.det_gamma, 0.0);
}

#[test]
fn upper_tail_gamma_matches_partial_expectation() {
    // q = 0.5 on standard Gaussian, p = 2: Gamma = ((r+2)e^{-r/2}/2) I.
    let mu = DVector::zeros(2);
    let uq = chi_square_upper_quantile(2);
    let r = uq(0.5);
    let expected = chi2_upper_partial(r) / 2.0;
    assert_abs_diff_eq!(expected, 0.8466, epsilon = 5e-4);
    let s = move |x: &DVector<f64>| if x.norm_squared() > r { 1.0 } else { 0.0 };
    let summary = estimate_gamma(s, gaussian_draw(2), &mu, 100_000, 3).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let target = if i == j { expected } else { 0.0 };
            assert!(
                (summary.gamma_hat[(i, j)] - target).abs() < 0.02,
                "gamma[{i},{j}] = {}",
                summary.gamma_hat[(i, j)]
            );
        }
    }
}

#[test]
fn estimate_gamma_rejects_empty_sample() {
    let mu = DVector::zeros(2);
    assert!(estimate_gamma(|_| 0.5, gaussian_draw(2), &mu, 0, 1).is_err());
}

#[test]
fn precision_matrix_dimensions() {
    let omega = DMatrix::identity(2, 2);
    let gamma = DMatrix::identity(3, 3);
    let p = precision_matrix(&omega, &gamma, 0.5).unwrap();
    assert_eq!(p.shape(), (6, 6));
}

#[test]
fn precision_matrix_identity_kronecker() {
    // omega = I, gamma = q * sigma: P = I (x) sigma.
    let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let q = 0.3;
    let p = precision_matrix(&DMatrix::identity(2, 2), &(&sigma * q), q).unwrap();
    let expected = DMatrix::identity(2, 2).kronecker(&sigma);
    assert!((p - expected).amax() < 1e-12);
}

#[test]
fn precision_matrix_scalar_case() {
    // omega = 2I, gamma = I, q = 1: P = 0.5 I4.
    let p = precision_matrix(
        &(DMatrix::identity(2, 2) * 2.0),
        &DMatrix::identity(2, 2),
        1.0,
    )
    .unwrap();
    assert!((p - DMatrix::identity(4, 4) * 0.5).amax() < 1e-12);
}

#[test]
fn kronecker_determinant_identity() {
    // det(P) = det(omega^{-1})^p * det(gamma/q)^K.
    let mut rng = crate::seed::seeded_rng(5, &[]);
    let k = 3;
    let p = 4;
    let a = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let omega = &a * a.transpose() + DMatrix::identity(k, k);
    let b = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let gamma = &b * b.transpose() + DMatrix::identity(p, p);
    let q = 0.2;
    let prec = precision_matrix(&omega, &gamma, q).unwrap();
    let lhs = prec.determinant();
    let rhs = omega
        .clone()
        .try_inverse()
        .unwrap()
        .determinant()
        .powi(p as i32)
        * (&gamma / q).determinant().powi(k as i32);
    assert!(
        ((lhs - rhs) / rhs).abs() < 1e-8,
        "det identity violated: {lhs} vs {rhs}"
    );
}

#[test]
fn oracle_reproduces_closed_form_ranking() {
    // p = 2 standard Gaussian at q = 0.5, q0 = 0: upper 0.7167 >
    // bernoulli 0.25 > lower 0.0235, each within three batched standard
    // errors of its closed form.
    let mu = DVector::zeros(2);
    let uq = chi_square_upper_quantile(2);
    let candidates = builtin_candidates(0.5, 0.0, &mu, &DMatrix::identity(2, 2), &uq);
    let ranked = d_optimality_oracle(0.5, gaussian_draw(2), &mu, &candidates, 100_000, 7).unwrap();
    let by_name = |name: &str| ranked.iter().find(|r| r.name == name).unwrap();

    let upper = by_name("upper_tail");
    let e_upper = chi2_upper_partial(uq(0.5));
    let det_upper = (e_upper / 2.0).powi(2);
    assert!(
        (upper.det_gamma - det_upper).abs() < 3.0 * upper.det_se,
        "upper det {} vs closed form {det_upper} (se {})",
        upper.det_gamma,
        upper.det_se
    );

    let bern = by_name("bernoulli");
    assert!(
        (bern.det_gamma - 0.25).abs() < 3.0 * bern.det_se.max(1e-6),
        "bernoulli det {}",
        bern.det_gamma
    );

    let lower = by_name("lower_tail");
    let det_lower = ((2.0 - e_upper) / 2.0).powi(2);
    assert!(
        (lower.det_gamma - det_lower).abs() < 3.0 * lower.det_se,
        "lower det {} vs closed form {det_lower}",
        lower.det_gamma
    );

    assert!(upper.det_gamma > bern.det_gamma && bern.det_gamma > lower.det_gamma);
    assert_eq!(ranked[0].name, "upper_tail");
}

#[test]
fn relaxed_mixture_lands_between_the_pure_rules() {
    // At q0 = 0.25 the floored upper-tail rule is the relaxed mixture; its
    // determinant sits strictly between the pure threshold value and the
    // constant-rate value.
    let mu = DVector::zeros(2);
    let uq = chi_square_upper_quantile(2);
    let relaxed_family = builtin_candidates(0.5, 0.25, &mu, &DMatrix::identity(2, 2), &uq);
    let relaxed = relaxed_family
        .iter()
        .find(|c| c.name == "upper_tail")
        .unwrap();
    let summary = estimate_gamma(&relaxed.s, gaussian_draw(2), &mu, 100_000, 7).unwrap();

    let det_pure = (chi2_upper_partial(uq(0.5)) / 2.0).powi(2);
    let det_const = 0.25;
    // Closed form for the mixture: Gamma = (q0 * 2 + (1-q0) E[l 1{l>r}]) / p
    // with the threshold at tail (q - q0) / (1 - q0).
    let beta = (0.5 - 0.25) / 0.75;
    let e_mix = 0.25 * 2.0 + 0.75 * chi2_upper_partial(uq(beta));
    let det_mix = (e_mix / 2.0).powi(2);
    assert!(
        (summary.det_gamma - det_mix).abs() < 3.0 * summary.det_se,
        "relaxed det {} vs closed form {det_mix}",
        summary.det_gamma
    );
    assert!(det_const < summary.det_gamma && summary.det_gamma < det_pure);
    assert!(summary.det_gamma - det_const > 3.0 * summary.det_se);
    assert!(det_pure - summary.det_gamma > 3.0 * summary.det_se);
}

#[test]
fn oracle_collapses_at_full_rate() {
    let mu = DVector::zeros(2);
    let uq = chi_square_upper_quantile(2);
    let candidates = builtin_candidates(1.0, 0.5, &mu, &DMatrix::identity(2, 2), &uq);
    let ranked = d_optimality_oracle(1.0, gaussian_draw(2), &mu, &candidates, 20_000, 9).unwrap();
    let dets: Vec<f64> = ranked.iter().map(|r| r.det_gamma).collect();
    let spread = dets.iter().cloned().fold(f64::MIN, f64::max)
        - dets.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        spread < 1e-12,
        "all candidates must coincide, spread {spread}"
    );
}

#[test]
fn oracle_rejects_miscalibrated_candidates() {
    let mu = DVector::zeros(2);
    let candidates = vec![Candidate::new("off_rate", |_| 0.3)];
    let err = d_optimality_oracle(0.5, gaussian_draw(2), &mu, &candidates, 10_000, 11).unwrap_err();
    assert!(matches!(err, Error::RateMiscalibrated { .. }));
}

#[test]
fn oracle_rejects_zero_rate() {
    let mu = DVector::zeros(2);
    assert!(d_optimality_oracle(0.0, gaussian_draw(2), &mu, &[], 100, 1).is_err());
}

#[test]
fn threshold_rules_dominate_in_determinant_on_elliptical_draws() {
    // LSS > relaxed > Bernoulli at matched rates, Gaussian and t(3), with
    // every gap above three combined standard errors.
    let p = 2;
    let mu = DVector::zeros(p);
    let eye = DMatrix::identity(p, p);
    for family in [NoiseFamily::Gaussian, NoiseFamily::StudentT] {
        let df = match family {
            NoiseFamily::Gaussian => None,
            NoiseFamily::StudentT => Some(3.0),
        };
        let sampler = EllipticalSampler::centered(eye.clone(), family, df).unwrap();
        for (i, q) in [0.05, 0.1, 0.5].into_iter().enumerate() {
            let q0 = q / 2.0;
            let uq: Box<dyn Fn(f64) -> f64> = match family {
                NoiseFamily::Gaussian => Box::new(chi_square_upper_quantile(p)),
                NoiseFamily::StudentT => {
                    // Calibrate thresholds on an independent draw stream.
                    let mut rng = crate::seed::seeded_rng(1000 + i as u64, &[]);
                    let scores: Vec<f64> = (0..400_000)
                        .map(|_| sampler.sample(&mut rng).norm_squared())
                        .collect();
                    Box::new(empirical_upper_quantile(scores))
                }
            };
            // The pure threshold rule comes from the family at q0 = 0, the
            // relaxed mixture from the family at the given q0. Every rule
            // is evaluated on the same draw stream (same seed), so gaps are
            // paired comparisons.
            let pure_family = builtin_candidates(q, 0.0, &mu, &eye, uq.as_ref());
            let mixed_family = builtin_candidates(q, q0, &mu, &eye, uq.as_ref());
            let seed = 13 + i as u64;
            let eval = |family: &[Candidate], name: &str| {
                let cand = family.iter().find(|c| c.name == name).unwrap();
                estimate_gamma(
                    &cand.s,
                    |rng: &mut ChaCha12Rng| sampler.sample(rng),
                    &mu,
                    100_000,
                    seed,
                )
                .unwrap()
            };
            let lss = eval(&pure_family, "upper_tail");
            let relaxed = eval(&mixed_family, "upper_tail");
            let bern = eval(&pure_family, "bernoulli");
            let gap_hi = lss.det_gamma - relaxed.det_gamma;
            let gap_lo = relaxed.det_gamma - bern.det_gamma;
            let se_hi = lss.paired_gap_se(&relaxed);
            let se_lo = relaxed.paired_gap_se(&bern);
            assert!(
                gap_hi > 3.0 * se_hi,
                "{family:?} q={q}: lss-relaxed gap {gap_hi} vs 3se {}",
                3.0 * se_hi
            );
            assert!(
                gap_lo > 3.0 * se_lo,
                "{family:?} q={q}: relaxed-bernoulli gap {gap_lo} vs 3se {}",
                3.0 * se_lo
            );
        }
    }
}

#[test]
fn gaussian_exceedance_rate_matches_chi_square_target() {
    // Realized upper-tail selection rate matches the chi-square calibration
    // within 0.01 at 1e5 draws.
    let p = 4;
    let mu = DVector::zeros(p);
    let r = chi_square_upper_quantile(p)(0.1);
    let mut draw = gaussian_draw(p);
    let mut rng = crate::seed::seeded_rng(55, &[]);
    let mut hits = 0;
    let n = 100_000;
    for _ in 0..n {
        let x = draw(&mut rng);
        if (&x - &mu).norm_squared() > r {
            hits += 1;
        }
    }
    let rate = hits as f64 / n as f64;
    assert!((rate - 0.1).abs() < 0.01, "exceedance rate {rate}");
}

#[test]
fn ranking_is_invariant_to_error_scale() {
    // det(P) ordering depends only on gamma; rescaling omega cannot reorder.
    let gammas = vec![
        DMatrix::identity(2, 2) * 0.8,
        DMatrix::identity(2, 2) * 0.25,
        DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]),
    ];
    let mut rng = crate::seed::seeded_rng(17, &[]);
    let a = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let omega = &a * a.transpose() + DMatrix::identity(2, 2);
    let order = |om: &DMatrix<f64>| {
        let mut dets: Vec<(usize, f64)> = gammas
            .iter()
            .enumerate()
            .map(|(i, g)| (i, precision_matrix(om, g, 0.5).unwrap().determinant()))
            .collect();
        dets.sort_by(|x, y| y.1.total_cmp(&x.1));
        dets.into_iter().map(|(i, _)| i).collect::<Vec<_>>()
    };
    assert_eq!(order(&omega), order(&(&omega * 3.0)));
}

#[test]
fn exact_replicates_have_zero_covariance() {
    let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
    let reps: Vec<(DMatrix<f64>, usize)> = (0..60).map(|_| (b.clone(), 100)).collect();
    let report = normality_check(&reps, &b, &DMatrix::identity(4, 4)).unwrap();
    assert_eq!(report.empirical_covariance, DMatrix::zeros(4, 4));
    assert_abs_diff_eq!(report.relative_frobenius, 1.0, epsilon = 1e-12);
}

#[test]
fn too_few_replicates_is_an_error() {
    let b = DMatrix::identity(2, 2);
    let reps: Vec<(DMatrix<f64>, usize)> = (0..10).map(|_| (b.clone(), 100)).collect();
    assert!(matches!(
        normality_check(&reps, &b, &DMatrix::identity(4, 4)),
        Err(Error::InsufficientData { .. })
    ));
}

#[test]
fn estimation_error_trivials() {
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(estimation_error(&b, &b).unwrap(), 0.0);
    assert_eq!(estimation_error(&(&b * 2.0), &b).unwrap(), 1.0);
    assert_eq!(estimation_error(&DMatrix::zeros(2, 2), &b).unwrap(), 1.0);
    assert!(estimation_error(&b, &DMatrix::zeros(2, 2)).is_err());
}

#[test]
fn prediction_error_trivials() {
    let y = DVector::from_vec(vec![3.0, 4.0]);
    assert_eq!(prediction_error(&y, &y).unwrap(), 0.0);
    assert_eq!(prediction_error(&DVector::zeros(2), &y).unwrap(), 1.0);
    assert_eq!(prediction_error(&(-&y), &y).unwrap(), 2.0);
    assert!(prediction_error(&y, &DVector::zeros(2)).is_err());
}

#[test]
fn report_renderings_round_trip_the_key_fields() {
    let mu = DVector::zeros(2);
    let summary = estimate_gamma(|_| 0.5, gaussian_draw(2), &mu, 1000, 4).unwrap();
    let kv = summary.render_kv();
    assert!(kv.contains("q_hat = 0.5"));
    assert!(kv.contains("det_gamma = "));
    let json = summary.to_json();
    assert_eq!(json["n_mc"], 1000);
    assert_eq!(json["gamma_hat"].as_array().unwrap().len(), 2);

    let b = DMatrix::identity(2, 2);
    let reps: Vec<(DMatrix<f64>, usize)> = (0..60).map(|_| (b.clone(), 10)).collect();
    let report = normality_check(&reps, &b, &DMatrix::identity(4, 4)).unwrap();
    assert!(report.render_kv().contains("n_replicates = 60"));
    assert_eq!(report.to_json()["n_replicates"], 60);
}

#[test]
fn metrics_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    let records = vec![MetricRecord {
        tau: 1,
        t: 10,
        est_error: 0.5,
        pred_error: 0.25,
        n_selected: 1,
    }];
    write_metrics_csv(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text,
        "tau,t,est_error,pred_error,n_selected\n1,10,0.5,0.25,1\n"
    );
}
