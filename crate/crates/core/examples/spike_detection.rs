//! Screens the positive counts for spikes, then fits the model with the
//! detected values inflated and compares it with the plain fit.
//!
//!     cargo run --release --example spike_detection -- [sensitivity]

use mitnb::diagnostics::{detect_spikes_in, DEFAULT_SENSITIVITY};
use mitnb::simulation::{simulate, SimulationDesign};
use mitnb::{compare, FitOptions, InflatedValueSet, ModelSpec, ParameterVector};

fn main() -> mitnb::Result<()> {
    let sensitivity: f64 = std::env::args().nth(1).map_or(DEFAULT_SENSITIVITY, |s| s.parse().expect("sensitivity"));

    let truth_spec = ModelSpec::intercept_only("y", InflatedValueSet::new(vec![5, 10, 30])?);
    let design = SimulationDesign {
        n: 15_000,
        seed: 21,
        covariates: vec![],
        model: truth_spec,
        truth: ParameterVector {
            beta_logit: vec![0.0],
            beta_location: vec![2.0],
            beta_dispersion: vec![-0.3],
            gamma: vec![vec![-2.6], vec![-2.9], vec![-4.0]],
        },
    };
    let data = simulate(&design)?;

    let found = detect_spikes_in(&data, sensitivity)?;
    println!("{:>6} {:>6} {:>9} {:>7}", "value", "freq", "baseline", "score");
    for c in &found {
        println!("{:>6} {:>6} {:>9.1} {:>7.2}", c.value, c.freq, c.smoothed, c.score);
    }

    let mut values: Vec<u64> = found.iter().map(|c| c.value).collect();
    values.sort_unstable();
    let candidates = vec![
        ("plain".to_string(), ModelSpec::intercept_only("y", InflatedValueSet::empty())),
        ("detected".to_string(), ModelSpec::intercept_only("y", InflatedValueSet::new(values)?)),
    ];
    println!();
    compare(&candidates, &data, &FitOptions::default()).write_csv(std::io::stdout().lock())?;
    Ok(())
}
