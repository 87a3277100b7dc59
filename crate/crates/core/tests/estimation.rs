mod common;

use mitnb::dataset::{Column, Dataset};
use mitnb::design::build_design;
use mitnb::distributions::{mitnb_logpmf, InflatedValueSet, MixtureWeights, Nb2Params};
use mitnb::estimation::{fit_binary, fit_design, gradient_max_norm, starting_values};
use mitnb::likelihood::{loglik_binary, loglik_positive};
use mitnb::params::ParameterVector;
use mitnb::simulation::simulate;
use mitnb::{fit, FitOptions, ModelSpec};
use nalgebra::{DMatrix, SymmetricEigen};

use common::*;

fn positive_rows(m: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let rows: Vec<usize> = (0..m.nrows()).filter(|&i| mask[i]).collect();
    m.select_rows(&rows)
}

#[test]
fn binary_loglik_matches_direct_sum() {
    let x = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
    let positive: Vec<bool> = (0..30).map(|i| i % 3 != 0).collect();
    let beta = [0.4, -1.1, 0.7];
    let direct: f64 = (0..30)
        .map(|i| {
            let eta: f64 = (0..3).map(|j| x[(i, j)] * beta[j]).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            if positive[i] {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    let got = loglik_binary(&beta, &x, &positive).unwrap();
    assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    let zero = loglik_binary(&[0.0; 3], &x, &positive).unwrap();
    assert!((zero - 30.0 * 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn positive_loglik_matches_per_row_pmfs() {
    let data = simulate(&spiked_design(400, 21)).unwrap();
    let (_, design) = build_design(&spiked_spec(), &data).unwrap();
    let mask = &design.positive_mask;
    let (z1, z2, z3) = (
        positive_rows(&design.z1, mask),
        positive_rows(&design.z2, mask),
        positive_rows(&design.z3, mask),
    );
    let y: Vec<u64> = design.y.as_ref().unwrap().iter().copied().filter(|&v| v > 0).collect();
    assert!(y.len() >= 200);
    let (z1, z2, z3, y) = (
        z1.rows(0, 200).into_owned(),
        z2.rows(0, 200).into_owned(),
        z3.rows(0, 200).into_owned(),
        y[..200].to_vec(),
    );
    let t = spiked_truth();
    let inflated = InflatedValueSet::new(SPIKES.to_vec()).unwrap();
    let dot = |m: &DMatrix<f64>, i: usize, b: &[f64]| -> f64 { (0..b.len()).map(|j| m[(i, j)] * b[j]).sum() };
    let oracle: f64 = (0..200)
        .map(|i| {
            let eta: Vec<f64> = t.gamma.iter().map(|g| dot(&z3, i, g)).collect();
            let w = MixtureWeights::from_linear_predictors(&eta);
            let nb = Nb2Params::new(dot(&z1, i, &t.beta_location).exp(), dot(&z2, i, &t.beta_dispersion).exp()).unwrap();
            mitnb_logpmf(y[i], &w, nb, &inflated).unwrap()
        })
        .sum();
    let got = loglik_positive(&t.beta_location, &t.beta_dispersion, &t.gamma, &z1, &z2, &z3, &y, &inflated).unwrap();
    assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
}

#[test]
fn binary_part_is_separable() {
    let data = simulate(&spiked_design(3_000, 2)).unwrap();
    let spec = spiked_spec();
    let (enc, design) = build_design(&spec, &data).unwrap();
    let opts = FitOptions::default();
    let full = fit_design(&spec, &enc, &design, &opts).unwrap();
    let start = starting_values(&design, [true; 4]).unwrap();
    let alone = fit_binary(&design, &start.beta_logit, &opts).unwrap();
    assert_eq!(full.estimates.beta_logit, alone.beta);
    assert_eq!(full.loglik_binary, alone.loglik);
    assert_eq!(full.loglik_total, full.loglik_binary + full.loglik_positive);
}

#[test]
fn intercept_only_hurdle_reproduces_share() {
    let data = simulate(&spiked_design(2_000, 6)).unwrap();
    let spec = ModelSpec::intercept_only("y", InflatedValueSet::new(SPIKES.to_vec()).unwrap());
    let r = fit(&spec, &data, &FitOptions::default()).unwrap();
    let share = r.n_positive as f64 / r.n_total as f64;
    let p = 1.0 / (1.0 + (-r.estimates.beta_logit[0]).exp());
    assert!((p - share).abs() < 1e-8);
}

#[test]
fn criteria_and_covariance_are_consistent() {
    let data = simulate(&spiked_design(5_000, 31)).unwrap();
    let r = fit(&spiked_spec(), &data, &FitOptions::default()).unwrap();
    let k = r.n_params as f64;
    assert_eq!(r.n_params, r.layout.len());
    assert_eq!(r.aic, -2.0 * r.loglik_total + 2.0 * k);
    assert_eq!(r.bic, -2.0 * r.loglik_total + k * (r.n_total as f64).ln());
    let cov = r.covariance.as_ref().expect("covariance");
    let n = cov.len();
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    assert!((&m - m.transpose()).amax() < 1e-8);
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    assert!(eig.min() > -1e-8, "{}", eig.min());
    // Hurdle and positive blocks do not covary.
    let k0 = r.layout.k0;
    assert!((0..k0).all(|i| (k0..n).all(|j| cov[i][j] == 0.0)));
}

#[test]
fn gradient_vanishes_at_optimum() {
    let data = simulate(&spiked_design(5_000, 32)).unwrap();
    let spec = spiked_spec();
    let (enc, design) = build_design(&spec, &data).unwrap();
    let opts = FitOptions {
        tol_loglik: 0.0,
        ..FitOptions::default()
    };
    let r = fit_design(&spec, &enc, &design, &opts).unwrap();
    assert!(r.converged(), "{:?}", r.convergence);
    let g = gradient_max_norm(&r, &design).unwrap();
    assert!(g < opts.tol_grad, "{g} {:?}", r.convergence);
}

#[test]
fn optimizer_trace_is_monotone() {
    let data = simulate(&spiked_design(3_000, 33)).unwrap();
    let r = fit(&spiked_spec(), &data, &FitOptions::default()).unwrap();
    for trace in [&r.convergence.binary.loglik_trace, &r.convergence.positive.loglik_trace] {
        assert!(trace.len() > 1);
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn default_and_truth_adjacent_starts_agree() {
    let data = simulate(&spiked_design(5_000, 34)).unwrap();
    let spec = spiked_spec();
    let opts = FitOptions::default();
    let a = fit(&spec, &data, &opts).unwrap();
    let mut near = spiked_truth();
    for v in near.beta_location.iter_mut().chain(&mut near.beta_dispersion) {
        *v += 0.05;
    }
    let b = fit(
        &spec,
        &data,
        &FitOptions {
            start: Some(near),
            ..opts
        },
    )
    .unwrap();
    assert!((a.loglik_total - b.loglik_total).abs() < 1e-6, "{} vs {}", a.loglik_total, b.loglik_total);
}

#[test]
fn rescaled_covariate_rescales_coefficient() {
    let data = simulate(&spiked_design(3_000, 35)).unwrap();
    let Some(Column::Real(x1)) = data.column("x1") else {
        panic!("x1")
    };
    let scaled = data
        .with_column("x1", Column::Real(x1.iter().map(|v| v * 10.0).collect()))
        .unwrap();
    let spec = spiked_spec();
    let opts = FitOptions {
        tol_loglik: 0.0,
        tol_grad: 1e-9,
        ..FitOptions::default()
    };
    let fit_on = |d: &Dataset| {
        let (_, design) = build_design(&spec, d).unwrap();
        let start = starting_values(&design, [true; 4]).unwrap();
        let b = fit_binary(&design, &start.beta_logit, &opts).unwrap();
        let p: Vec<f64> = (0..design.n_rows())
            .map(|i| {
                let eta: f64 = (0..b.beta.len()).map(|j| design.x[(i, j)] * b.beta[j]).sum();
                1.0 / (1.0 + (-eta).exp())
            })
            .collect();
        (b.beta, p)
    };
    let (b1, p1) = fit_on(&data);
    let (b2, p2) = fit_on(&scaled);
    assert!((b1[1] / 10.0 - b2[1]).abs() < 1e-8);
    let gap = p1.iter().zip(&p2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn adding_an_inflated_value_never_lowers_the_fit() {
    let data = simulate(&spiked_design(6_000, 36)).unwrap();
    let opts = FitOptions::default();
    let mut last = f64::NEG_INFINITY;
    for set in [vec![], vec![2], vec![2, 7], vec![2, 7, 14]] {
        let spec = spiked_spec().with_inflated(InflatedValueSet::new(set).unwrap());
        let r = fit(&spec, &data, &opts).unwrap();
        assert!(r.loglik_positive >= last - 1e-6);
        last = r.loglik_positive;
    }
}

#[test]
fn one_point_spike_is_frozen_at_the_bound() {
    // A single positive observation sitting on the inflated value.
    let mut y = vec![0i64; 30];
    y[4] = 7;
    y[9] = 3;
    y[15] = 1;
    let data = Dataset::new(vec![("y".into(), Column::Integer(y))], Some("y")).unwrap();
    let spec = ModelSpec::intercept_only("y", InflatedValueSet::new(vec![7]).unwrap());
    let r = fit(&spec, &data, &FitOptions::default()).unwrap();
    assert!(r.estimates.gamma[0][0] <= 20.0);
    assert!(r.convergence.positive.iterations <= 500);
    assert!(r.loglik_total.is_finite());
}

#[test]
fn start_values_follow_the_closed_forms() {
    // Share 1/2, positives averaging e^2 within rounding.
    let mut y = vec![0i64; 50];
    y.extend(std::iter::repeat_n(7, 25));
    y.extend(std::iter::repeat_n(8, 25));
    let data = Dataset::new(vec![("y".into(), Column::Integer(y))], Some("y")).unwrap();
    let spec = ModelSpec::intercept_only("y", InflatedValueSet::new(vec![7]).unwrap());
    let (_, design) = build_design(&spec, &data).unwrap();
    let s: ParameterVector = starting_values(&design, [true; 4]).unwrap();
    assert_eq!(s.beta_logit, vec![0.0]);
    assert!((s.beta_location[0] - 7.5f64.ln()).abs() < 1e-15);
    assert_eq!(s.beta_dispersion, vec![0.0]);
    assert!(s.gamma[0][0].abs() < 1e-15);
}
