//! Fits several candidate inflated-value sets to one simulated dataset and
//! ranks them by AIC. The hurdle part is shared, so it is fitted once.
//!
//!     cargo run --release --example model_selection -- [n] [seed]

use mitnb::simulation::{simulate, CovariateGenerator, SimulationDesign};
use mitnb::{compare, FitOptions, InflatedValueSet, ModelSpec, ParameterVector};

const CONFIG: &str = r#"
[hurdle]
covariates = ["x"]

[location]
covariates = ["x"]

[mixing]
covariates = ["season"]

[columns]
season = "categorical"

[inflated]
values = [3, 7]
"#;

fn main() -> mitnb::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(20_000, |s| s.parse().expect("n"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));

    let model = ModelSpec::from_config_str(CONFIG)?;
    let design = SimulationDesign {
        n,
        seed,
        covariates: vec![
            CovariateGenerator::normal("x", 0.0, 1.0),
            CovariateGenerator::categorical("season", &["low", "high"], &[0.7, 0.3]),
        ],
        model: model.clone(),
        truth: ParameterVector {
            beta_logit: vec![0.1, 0.6],
            beta_location: vec![1.4, 0.3],
            beta_dispersion: vec![0.0],
            gamma: vec![vec![-2.5, 0.2], vec![-3.0, 1.2]],
        },
    };
    let data = simulate(&design)?;

    let candidates: Vec<(String, ModelSpec)> = [
        ("tnb", vec![]),
        ("three", vec![3]),
        ("seven", vec![7]),
        ("three-seven", vec![3, 7]),
        ("three-seven-ten", vec![3, 7, 10]),
    ]
    .into_iter()
    .map(|(label, set)| Ok((label.to_string(), model.with_inflated(InflatedValueSet::new(set)?))))
    .collect::<mitnb::Result<_>>()?;

    let table = compare(&candidates, &data, &FitOptions::default());
    let mut out = std::io::stdout().lock();
    table.write_csv(&mut out)?;
    if let Some(best) = table.best() {
        println!("\nlowest AIC: {} (inflated at {:?})", best.label, best.inflated);
    }
    Ok(())
}
