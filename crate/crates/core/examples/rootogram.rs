//! Hanging rootograms for a plain truncated-NB hurdle and for the spiked
//! model on the same data. Writes CSV and SVG files to the output directory.
//!
//!     cargo run --release --example rootogram -- [out_dir]

use std::fs;
use std::path::PathBuf;

use mitnb::simulation::{simulate, CovariateGenerator, SimulationDesign};
use mitnb::{fit, rootogram, FitOptions, InflatedValueSet, ModelSpec, ParameterVector};

fn main() -> mitnb::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("mitnb-rootogram"), PathBuf::from);
    fs::create_dir_all(&out)?;

    let spiked = ModelSpec::from_config_str("[location]\ncovariates = [\"x\"]\n[inflated]\nvalues = [2, 7, 14]\n")?;
    let design = SimulationDesign {
        n: 30_000,
        seed: 3,
        covariates: vec![CovariateGenerator::uniform("x", -1.0, 1.0)],
        model: spiked.clone(),
        truth: ParameterVector {
            beta_logit: vec![0.4],
            beta_location: vec![1.5, 0.4],
            beta_dispersion: vec![0.1],
            gamma: vec![vec![-2.3], vec![-2.6], vec![-3.2]],
        },
    };
    let data = simulate(&design)?;

    for (name, spec) in [("plain", spiked.with_inflated(InflatedValueSet::empty())), ("spiked", spiked)] {
        let r = fit(&spec, &data, &FitOptions::default())?;
        let table = rootogram(&r, &data, Some(25))?;
        table.write_csv(fs::File::create(out.join(format!("{name}.csv")))?)?;
        fs::write(out.join(format!("{name}.svg")), table.to_svg())?;
        println!("{name}: AIC {:.1}, max |hanging deviation| {:.2}", r.aic, table.max_abs_deviation());
        for v in [1u64, 2, 3, 7, 14] {
            let row = table.row(v).expect("within max_count");
            println!(
                "  y = {v:>2}: observed {:>6.0}, expected {:>8.1}, deviation {:>6.2}",
                row.observed_freq, row.expected_freq, row.hanging_deviation
            );
        }
    }
    println!("\nwrote {}", out.display());
    Ok(())
}
