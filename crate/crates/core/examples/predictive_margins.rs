//! Predictive margins over year and quarter with delta-method standard
//! errors, in counterfactual and subgroup form.
//!
//!     cargo run --release --example predictive_margins

use mitnb::simulation::{simulate, CovariateGenerator, SimulationDesign};
use mitnb::{fit, predictive_margins, FitOptions, MarginMode, ModelSpec, ParameterVector};

const CONFIG: &str = r#"
[hurdle]
covariates = ["age", "year", "quarter"]

[location]
covariates = ["age", "year", "quarter"]

[mixing]
covariates = ["quarter"]

[columns]
year = "categorical"
quarter = "categorical"

[inflated]
values = [7]
"#;

fn main() -> mitnb::Result<()> {
    let model = ModelSpec::from_config_str(CONFIG)?;
    let design = SimulationDesign {
        n: 20_000,
        seed: 12,
        covariates: vec![
            CovariateGenerator::normal("age", 0.0, 1.0),
            CovariateGenerator::categorical("year", &["2021", "2022", "2023"], &[0.3, 0.3, 0.4]),
            CovariateGenerator::categorical("quarter", &["1", "2", "3", "4"], &[0.25; 4]),
        ],
        model: model.clone(),
        truth: ParameterVector {
            // Intercept, age, two year shifts, three quarter shifts.
            beta_logit: vec![-0.5, 0.3, 0.2, 0.35, 0.1, 0.6, -0.1],
            beta_location: vec![1.2, 0.1, 0.05, 0.1, 0.1, 0.4, 0.0],
            beta_dispersion: vec![0.0],
            gamma: vec![vec![-3.0, 0.2, 1.5, 0.1]],
        },
    };
    let data = simulate(&design)?;
    let r = fit(&model, &data, &FitOptions::default())?;

    let over = ["year".to_string(), "quarter".to_string()];
    for mode in [MarginMode::Counterfactual, MarginMode::Subgroup] {
        let table = predictive_margins(&r, &data, &over, mode)?;
        println!("{mode:?}");
        println!("{:>6} {:>8} {:>7} {:>16} {:>16}", "year", "quarter", "rows", "Pr(y > 0)", "E(y | y > 0)");
        for c in &table.cells {
            println!(
                "{:>6} {:>8} {:>7} {:>8.4} ({:.4}) {:>8.3} ({:.3})",
                c.values[0], c.values[1], c.n_rows, c.p_positive, c.se_p_positive, c.mean_positive, c.se_mean_positive
            );
        }
        println!();
    }
    Ok(())
}
