mod common;

use mitnb::dataset::{Categorical, Column};
use mitnb::inference::{delta_se, mixing_weights, predict_row, DesignRow};
use mitnb::simulation::{simulate, CovariateGenerator, SimulationDesign};
use mitnb::{fit, predict, predictive_margins, Error, FitOptions, FitResult, InflatedValueSet, MarginMode, ModelSpec, ParameterVector};
use statrs::distribution::{ContinuousCDF, Normal};

use common::*;

fn spiked_fit(n: usize, seed: u64) -> (FitResult, mitnb::Dataset) {
    let data = simulate(&spiked_design(n, seed)).unwrap();
    let r = fit(&spiked_spec(), &data, &FitOptions::default()).unwrap();
    assert!(r.converged());
    (r, data)
}

#[test]
fn zero_coefficients_give_geometric_mean() {
    let p = ParameterVector {
        beta_logit: vec![0.0],
        beta_location: vec![0.0],
        beta_dispersion: vec![0.0],
        gamma: vec![],
    };
    let one = [1.0];
    let row = DesignRow {
        x: &one,
        z1: &one,
        z2: &one,
        z3: &one,
    };
    let r = predict_row(&p, &InflatedValueSet::empty(), row).unwrap();
    assert_eq!(r.p_positive, 0.5);
    assert_eq!((r.lambda, r.theta), (1.0, 1.0));
    assert!((r.mean_positive - 2.0).abs() < 1e-14);
}

#[test]
fn reported_mixing_intercepts_give_reported_probabilities() {
    let gamma: Vec<Vec<f64>> = REPORTED_GAMMA0.iter().zip(REPORTED_GAMMA_Q3).map(|(&a, b)| vec![a, b]).collect();
    let off = mixing_weights(&gamma, &[1.0, 0.0]);
    let q3 = mixing_weights(&gamma, &[1.0, 1.0]);
    for (j, (&want, got)) in REPORTED_P_OFF_PEAK.iter().zip(off.probs()).enumerate() {
        assert!((want - got).abs() < 5e-4, "off-peak component {j}: {got} vs {want}");
    }
    for (j, (&want, got)) in REPORTED_P_Q3.iter().zip(q3.probs()).enumerate() {
        assert!((want - got).abs() < 5e-4, "third-quarter component {j}: {got} vs {want}");
    }
    let at = |v: u64| REPORTED_SPIKES.iter().position(|&s| s == v).unwrap();
    assert!((off.probs()[at(2)] - 0.0697).abs() < 5e-4);
    assert!((off.tnb_weight() - 0.7376).abs() < 5e-4);
    assert!((q3.probs()[at(14)] - 0.0648).abs() < 5e-4);
}

#[test]
fn unseen_level_is_reported_with_row() {
    let (r, data) = spiked_fit(2_000, 40);
    let newdata = data.select_rows(&[0, 1, 2, 3]);
    let Some(Column::Categorical(g)) = newdata.column("g") else {
        panic!("g")
    };
    let mut levels = g.levels.clone();
    levels.push("z".into());
    let mut codes = g.codes.clone();
    codes[2] = levels.len() - 1;
    let newdata = newdata
        .with_column(
            "g",
            Column::Categorical(Categorical {
                levels,
                reference: g.reference,
                codes,
            }),
        )
        .unwrap();
    match predict(&r, &newdata) {
        Err(Error::UnknownLevel { row, column, level }) => {
            assert_eq!((row, column.as_str(), level.as_str()), (3, "g", "z"));
        }
        other => panic!("expected an unknown-level error, got {other:?}"),
    }
}

#[test]
fn delta_method_on_coefficients() {
    let (r, _) = spiked_fit(3_000, 41);
    let se = r.standard_errors().unwrap();
    for i in [0, r.layout.k0, r.layout.len() - 1] {
        assert_eq!(delta_se(&r, |p| p[i]).unwrap(), se[i]);
        let scaled = delta_se(&r, |p| -3.0 * p[i]).unwrap();
        assert!((scaled - 3.0 * se[i]).abs() < 1e-9 * se[i], "{scaled} vs {}", 3.0 * se[i]);
    }
}

#[test]
fn delta_method_needs_covariance() {
    let (mut r, _) = spiked_fit(1_000, 42);
    r.covariance = None;
    assert!(matches!(delta_se(&r, |p| p[0]), Err(Error::CovarianceUnavailable)));
}

#[test]
fn margins_over_an_inert_covariate_are_flat() {
    let (mut r, data) = spiked_fit(2_000, 43);
    // `d` enters location, dispersion and mixing as its second column.
    r.estimates.beta_location[3] = 0.0;
    r.estimates.beta_dispersion[1] = 0.0;
    for g in &mut r.estimates.gamma {
        g[1] = 0.0;
    }
    let table = predictive_margins(&r, &data, &["d".into()], MarginMode::Counterfactual).unwrap();
    assert_eq!(table.cells.len(), 2);
    let (a, b) = (&table.cells[0], &table.cells[1]);
    assert!((a.mean_positive - b.mean_positive).abs() < 1e-12);
    assert!((a.p_positive - b.p_positive).abs() < 1e-12);
}

#[test]
fn margins_over_an_absent_covariate_equal_the_average_prediction() {
    let (r, data) = spiked_fit(2_000, 44);
    let n = data.n_rows();
    let site = Column::Categorical(Categorical {
        levels: vec!["north".into(), "south".into()],
        reference: 0,
        codes: (0..n).map(|i| i % 2).collect(),
    });
    let data = data.with_column("site", site).unwrap();
    let preds = predict(&r, &data).unwrap();
    let p = preds.iter().map(|p| p.p_positive).sum::<f64>() / n as f64;
    let m = preds.iter().map(|p| p.mean_positive).sum::<f64>() / n as f64;
    let table = predictive_margins(&r, &data, &["site".into()], MarginMode::Counterfactual).unwrap();
    for c in &table.cells {
        assert_eq!(c.n_rows, n);
        assert!((c.p_positive - p).abs() < 1e-12);
        assert!((c.mean_positive - m).abs() < 1e-12);
    }
}

fn logistic(e: f64) -> f64 {
    1.0 / (1.0 + (-e).exp())
}

/// Population averages over x1 ~ N(0, 1) and x2 ~ U(0, 1) by midpoint rules
/// on the quantile scale.
fn population_average(f: impl Fn(f64, f64) -> f64) -> f64 {
    let (k1, k2) = (2_000, 100);
    let normal = Normal::standard();
    let x1: Vec<f64> = (0..k1).map(|k| normal.inverse_cdf((k as f64 + 0.5) / k1 as f64)).collect();
    let mut total = 0.0;
    for a in &x1 {
        for k in 0..k2 {
            total += f(*a, (k as f64 + 0.5) / k2 as f64);
        }
    }
    total / (k1 * k2) as f64
}

/// Positive mean at the true parameters, written out from the NB2 pmf.
fn true_positive_mean(x1: f64, x2: f64, d: f64) -> f64 {
    let t = spiked_truth();
    let b = &t.beta_location;
    let lambda = (b[0] + b[1] * x1 + b[2] * x2 + b[3] * d).exp();
    let theta = (t.beta_dispersion[0] + t.beta_dispersion[1] * d).exp();
    let p0 = (1.0 + lambda / theta).powf(-theta);
    let expo: Vec<f64> = t.gamma.iter().map(|g| (g[0] + g[1] * d).exp()).collect();
    let denom = 1.0 + expo.iter().sum::<f64>();
    let spikes: f64 = SPIKES.iter().zip(&expo).map(|(&v, e)| v as f64 * e / denom).sum();
    spikes + lambda / (1.0 - p0) / denom
}

#[test]
fn margins_match_population_values() {
    let (r, data) = spiked_fit(20_000, 45);
    let t = spiked_truth();
    let by_g = predictive_margins(&r, &data, &["g".into()], MarginMode::Counterfactual).unwrap();
    for (level, shift) in [("a", 0.0), ("b", t.beta_logit[3]), ("c", t.beta_logit[4])] {
        let b = &t.beta_logit;
        let want = population_average(|x1, x2| logistic(b[0] + b[1] * x1 + b[2] * x2 + shift));
        let cell = by_g.cell(&[level]).unwrap();
        assert!(
            (cell.p_positive - want).abs() < 3.0 * cell.se_p_positive,
            "g={level}: {} vs {want} (se {})",
            cell.p_positive,
            cell.se_p_positive
        );
    }
    let by_d = predictive_margins(&r, &data, &["d".into()], MarginMode::Counterfactual).unwrap();
    for (level, d) in [("no", 0.0), ("yes", 1.0)] {
        let want = population_average(|x1, x2| true_positive_mean(x1, x2, d));
        let cell = by_d.cell(&[level]).unwrap();
        assert!(
            (cell.mean_positive - want).abs() < 3.0 * cell.se_mean_positive,
            "d={level}: {} vs {want} (se {})",
            cell.mean_positive,
            cell.se_mean_positive
        );
    }
}

#[test]
fn injected_year_trend_gives_monotone_margins() {
    let years = ["2015", "2016", "2017", "2018", "2019"];
    let model = ModelSpec::from_config_str(
        r#"
[hurdle]
covariates = ["x1", "year"]

[location]
covariates = ["x1", "year"]

[inflated]
values = [7]
"#,
    )
    .unwrap();
    let design = SimulationDesign {
        n: 20_000,
        seed: 46,
        covariates: vec![
            CovariateGenerator::normal("x1", 0.0, 1.0),
            CovariateGenerator::categorical("year", &years, &[0.2; 5]),
        ],
        model: model.clone(),
        truth: ParameterVector {
            beta_logit: vec![0.2, 0.3, 0.15, 0.3, 0.45, 0.6],
            beta_location: vec![1.5, 0.2, 0.1, 0.2, 0.3, 0.4],
            beta_dispersion: vec![0.3],
            gamma: vec![vec![-2.5]],
        },
    };
    let data = simulate(&design).unwrap();
    let r = fit(&model, &data, &FitOptions::default()).unwrap();
    let table = predictive_margins(&r, &data, &["year".into()], MarginMode::Counterfactual).unwrap();
    let got: Vec<&str> = table.cells.iter().map(|c| c.values[0].as_str()).collect();
    assert_eq!(got, years);
    for w in table.cells.windows(2) {
        assert!(w[1].p_positive > w[0].p_positive);
        assert!(w[1].mean_positive > w[0].mean_positive);
    }
}

#[test]
fn subgroup_margins_only_average_matching_rows() {
    let (r, data) = spiked_fit(2_000, 47);
    let table = predictive_margins(&r, &data, &["d".into()], MarginMode::Subgroup).unwrap();
    assert_eq!(table.cells.iter().map(|c| c.n_rows).sum::<usize>(), data.n_rows());
    let Some(Column::Categorical(d)) = data.column("d") else {
        panic!("d")
    };
    let preds = predict(&r, &data).unwrap();
    for (k, cell) in table.cells.iter().enumerate() {
        let rows: Vec<_> = (0..data.n_rows()).filter(|&i| d.codes[i] == k).collect();
        let m = rows.iter().map(|&i| preds[i].mean_positive).sum::<f64>() / rows.len() as f64;
        assert!((cell.mean_positive - m).abs() < 1e-12);
    }
}
