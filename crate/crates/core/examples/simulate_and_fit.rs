//! Simulates a spiked dataset from known coefficients, fits the model, and
//! prints the estimates next to the truth.
//!
//!     cargo run --release --example simulate_and_fit -- [n] [seed]

use std::time::Instant;

use mitnb::simulation::{simulate, CovariateGenerator, SimulationDesign};
use mitnb::{fit, FitOptions, ModelSpec, ParameterVector};

const CONFIG: &str = r#"
response = "y"

[hurdle]
covariates = ["x1", "x2", "g"]

[location]
covariates = ["x1", "x2", "d"]

[dispersion]
covariates = ["d"]

[mixing]
covariates = ["d"]

[inflated]
values = [2, 7, 14]
"#;

fn main() -> mitnb::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(50_000, |s| s.parse().expect("n"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));

    let design = SimulationDesign {
        n,
        seed,
        covariates: vec![
            CovariateGenerator::normal("x1", 0.0, 1.0),
            CovariateGenerator::uniform("x2", 0.0, 1.0),
            CovariateGenerator::categorical("g", &["a", "b", "c"], &[0.5, 0.3, 0.2]),
            CovariateGenerator::categorical("d", &["no", "yes"], &[0.6, 0.4]),
        ],
        model: ModelSpec::from_config_str(CONFIG)?,
        truth: ParameterVector {
            beta_logit: vec![0.3, 0.5, -0.4, 0.2, -0.3],
            beta_location: vec![1.6, 0.25, -0.3, 0.2],
            beta_dispersion: vec![0.2, 0.3],
            gamma: vec![vec![-2.5, 0.3], vec![-2.8, 0.6], vec![-3.5, 1.0]],
        },
    };
    let data = simulate(&design)?;

    let start = Instant::now();
    let result = fit(&design.model, &data, &FitOptions::default())?;
    let elapsed = start.elapsed();

    let truth = design.truth.pack();
    let se = result.standard_errors().unwrap_or_default();
    println!("{:<16} {:<14} {:>9} {:>9} {:>8}", "block", "column", "truth", "estimate", "se");
    for (i, (_, label, column)) in result.parameter_names().iter().enumerate() {
        println!(
            "{label:<16} {column:<14} {:>9.4} {:>9.4} {:>8.4}",
            truth[i],
            result.flat_estimates()[i],
            se.get(i).copied().unwrap_or(f64::NAN)
        );
    }
    println!(
        "\nn = {}, positives = {}, loglik = {:.3}, AIC = {:.1}, converged = {}, {:.2?}",
        result.n_total,
        result.n_positive,
        result.loglik_total,
        result.aic,
        result.converged(),
        elapsed
    );
    Ok(())
}
