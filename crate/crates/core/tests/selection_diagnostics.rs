mod common;

use mitnb::diagnostics::{detect_spikes_in, DEFAULT_SENSITIVITY};
use mitnb::simulation::{simulate, SimulationDesign};
use mitnb::{compare, detect_spike_candidates, fit, rootogram, Error, FitOptions, InflatedValueSet, ModelSpec, ParameterVector};

use common::*;

fn candidates(list: &[(&str, Vec<u64>)]) -> Vec<(String, ModelSpec)> {
    list.iter()
        .map(|(label, set)| (label.to_string(), spiked_spec().with_inflated(InflatedValueSet::new(set.clone()).unwrap())))
        .collect()
}

#[test]
fn duplicate_specs_give_identical_rows() {
    let data = simulate(&spiked_design(3_000, 50)).unwrap();
    let table = compare(&candidates(&[("first", vec![2, 7]), ("second", vec![2, 7])]), &data, &FitOptions::default());
    let (a, b) = (table.row("first").unwrap(), table.row("second").unwrap());
    assert_eq!((a.n_params, a.loglik, a.aic, a.bic), (b.n_params, b.loglik, b.aic, b.bic));
    assert_eq!(a.inflated, b.inflated);
}

#[test]
fn comparison_prefers_the_true_spikes_and_nests() {
    let data = simulate(&spiked_design(8_000, 51)).unwrap();
    let table = compare(
        &candidates(&[("tnb", vec![]), ("two", vec![2]), ("two-seven", vec![2, 7]), ("true", vec![2, 7, 14])]),
        &data,
        &FitOptions::default(),
    );
    assert!(table.rows.windows(2).all(|w| w[0].aic <= w[1].aic));
    assert_eq!(table.best().unwrap().label, "true");
    assert!(table.row("true").unwrap().aic < table.row("tnb").unwrap().aic);
    let ll: Vec<f64> = ["tnb", "two", "two-seven", "true"].iter().map(|l| table.row(l).unwrap().loglik).collect();
    assert!(ll.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{ll:?}");
    // k grows by one mixing block per inflated value.
    assert_eq!(table.row("true").unwrap().n_params, table.row("tnb").unwrap().n_params + 3 * 2);
}

#[test]
fn comparison_csv_has_header_and_rows() {
    let data = simulate(&spiked_design(2_000, 52)).unwrap();
    let table = compare(&candidates(&[("tnb", vec![]), ("true", vec![2, 7, 14])]), &data, &FitOptions::default());
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,inflated,n_params,loglik,aic,bic,converged,error");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("true,2 7 14,"));
}

#[test]
fn rootogram_mass_sums_to_n() {
    let data = simulate(&spiked_design(4_000, 53)).unwrap();
    // A badly specified model still carries unit mass per row.
    for spec in [spiked_spec(), plain_spec()] {
        let r = fit(&spec, &data, &FitOptions::default()).unwrap();
        let table = rootogram(&r, &data, Some(400)).unwrap();
        let n = data.n_rows() as f64;
        assert_eq!(table.total_observed(), n);
        assert!((table.total_expected() - n).abs() < 1e-6 * n, "{}", table.total_expected());
        assert!(table.rows.iter().all(|row| row.expected_freq >= 0.0));
        assert_eq!(table.rows.len(), 401);
    }
}

#[test]
fn rootogram_default_bound_and_tail() {
    let data = simulate(&spiked_design(4_000, 54)).unwrap();
    let r = fit(&spiked_spec(), &data, &FitOptions::default()).unwrap();
    let table = rootogram(&r, &data, None).unwrap();
    let mut y = data.response().unwrap();
    y.sort_unstable();
    let rank = (0.999 * y.len() as f64).ceil() as usize;
    assert_eq!(table.max_count, y[rank - 1]);
    let above = y.iter().filter(|&&v| v > table.max_count).count() as f64;
    assert_eq!(table.tail.observed_freq, above);
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("count,observed_freq,expected_freq,sqrt_observed,sqrt_expected,hanging_deviation\n"));
    assert!(text.lines().last().unwrap().starts_with(&format!("{}+,", table.max_count + 1)));
    let svg = table.to_svg();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn plain_fit_under_predicts_the_spikes() {
    let data = simulate(&spiked_design(10_000, 55)).unwrap();
    let r = fit(&plain_spec(), &data, &FitOptions::default()).unwrap();
    let table = rootogram(&r, &data, Some(30)).unwrap();
    for v in SPIKES {
        assert!(table.row(v).unwrap().hanging_deviation < -3.0, "at {v}");
    }
}

/// Geometric positives, ratio 0.7, with extra mass at 7 and 14.
fn geometric_with_spikes() -> Vec<u64> {
    let mut y = Vec::new();
    for j in 1..40u64 {
        let base = (4_000.0 * 0.7f64.powi(j as i32 - 1)).round() as usize;
        let extra = match j {
            7 => 300,
            14 => 60,
            _ => 0,
        };
        y.extend(std::iter::repeat_n(j, base + extra));
    }
    y.extend(std::iter::repeat_n(0, 5_000));
    y
}

#[test]
fn injected_spikes_rank_first() {
    let found = detect_spike_candidates(&geometric_with_spikes(), DEFAULT_SENSITIVITY);
    let mut top: Vec<u64> = found.iter().take(2).map(|c| c.value).collect();
    top.sort_unstable();
    assert_eq!(top, [7, 14]);
    assert!(found.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn constant_positives_are_one_spike() {
    let found = detect_spike_candidates(&[5; 50], DEFAULT_SENSITIVITY);
    assert_eq!(found.iter().map(|c| c.value).collect::<Vec<_>>(), [5]);
}

#[test]
fn pure_tnb_samples_rarely_flag_spikes() {
    let truth = ParameterVector {
        beta_logit: vec![800.0],
        beta_location: vec![3.0f64.ln()],
        beta_dispersion: vec![1.2f64.ln()],
        gamma: vec![],
    };
    let runs = 40;
    let clean = (0..runs)
        .filter(|&seed| {
            let design = SimulationDesign {
                n: 10_000,
                seed: 1_000 + seed,
                covariates: vec![],
                model: ModelSpec::intercept_only("y", InflatedValueSet::empty()),
                truth: truth.clone(),
            };
            let data = simulate(&design).unwrap();
            detect_spikes_in(&data, DEFAULT_SENSITIVITY).unwrap().is_empty()
        })
        .count();
    assert!(clean as f64 >= 0.95 * runs as f64, "{clean}/{runs}");
}

#[test]
fn detection_needs_positives() {
    let data = mitnb::Dataset::new(vec![("y".into(), mitnb::Column::Integer(vec![0; 10]))], Some("y")).unwrap();
    assert!(matches!(detect_spikes_in(&data, DEFAULT_SENSITIVITY), Err(Error::NoPositives)));
}
