//! Fits once, saves the fit as JSON, reloads it and scores new rows with
//! delta-method standard errors.
//!
//!     cargo run --release --example save_and_predict

use mitnb::dataset::{read_csv, ColumnType, Schema};
use mitnb::io::{load_fit, save_fit};
use mitnb::simulation::{simulate, CovariateGenerator, SimulationDesign};
use mitnb::{fit, predict, FitOptions, ModelSpec, ParameterVector};

const NEW_ROWS: &str = "\
income,region
-1.0,north
0.0,north
0.0,south
1.5,south
";

fn main() -> mitnb::Result<()> {
    let model = ModelSpec::from_config_str(
        "[hurdle]\ncovariates = [\"income\", \"region\"]\n\
         [location]\ncovariates = [\"income\", \"region\"]\n\
         [columns]\nregion = \"categorical\"\n\
         [inflated]\nvalues = [7]\n",
    )?;
    let design = SimulationDesign {
        n: 10_000,
        seed: 5,
        covariates: vec![
            CovariateGenerator::normal("income", 0.0, 1.0),
            CovariateGenerator::categorical("region", &["north", "south"], &[0.5, 0.5]),
        ],
        model: model.clone(),
        truth: ParameterVector {
            beta_logit: vec![0.2, 0.5, -0.4],
            beta_location: vec![1.3, 0.2, 0.3],
            beta_dispersion: vec![0.2],
            gamma: vec![vec![-2.2]],
        },
    };
    let data = simulate(&design)?;
    let r = fit(&model, &data, &FitOptions::default())?;

    let path = std::env::temp_dir().join("mitnb-save-and-predict.json");
    save_fit(&path, &r)?;
    let loaded = load_fit(&path)?;

    let schema = Schema::new(None).with("income", ColumnType::Real).with(
        "region",
        ColumnType::Categorical {
            levels: loaded.encoding.levels.get("region").cloned(),
            reference: None,
        },
    );
    let (rows, _) = read_csv(NEW_ROWS.as_bytes(), &schema)?;
    println!("{:>7} {:>7} {:>10} {:>14} {:>8}", "income", "region", "Pr(y > 0)", "E(y | y > 0)", "se");
    for (i, p) in predict(&loaded, &rows)?.iter().enumerate() {
        let line = NEW_ROWS.lines().nth(i + 1).unwrap_or_default();
        let (income, region) = line.split_once(',').unwrap_or_default();
        println!("{income:>7} {region:>7} {:>10.4} {:>14.3} {:>8.4}", p.p_positive, p.mean_positive, p.se_mean_positive);
    }
    println!("\nfit saved to {}", path.display());
    Ok(())
}
