//! Reconstructs regime probabilities from multinomial-logit mixing
//! coefficients, off season and in the high season, and predicts the mean
//! of the positive counts for both profiles.
//!
//!     cargo run --example mixing_probabilities

use mitnb::inference::{mixing_weights, predict_row, DesignRow};
use mitnb::{InflatedValueSet, ParameterVector};

fn main() -> mitnb::Result<()> {
    let inflated = InflatedValueSet::new(vec![2, 3, 7, 14, 30])?;
    // Intercept and high-season shift for each inflated value.
    let gamma = vec![
        vec![-2.4, -1.6],
        vec![-2.7, -1.8],
        vec![-3.0, 0.6],
        vec![-4.1, 1.8],
        vec![-5.7, 2.2],
    ];
    let params = ParameterVector {
        beta_logit: vec![-0.8, 0.4],
        beta_location: vec![1.2, 0.3],
        beta_dispersion: vec![-0.2],
        gamma: gamma.clone(),
    };

    let profiles = [("off season", [1.0, 0.0]), ("high season", [1.0, 1.0])];
    print!("{:<12}", "regime");
    for (name, _) in &profiles {
        print!(" {name:>12}");
    }
    println!();
    let weights: Vec<_> = profiles.iter().map(|(_, z)| mixing_weights(&gamma, z)).collect();
    let labels = inflated.values().iter().map(|v| format!("y = {v}")).chain(["truncated NB".to_string()]);
    for (k, label) in labels.enumerate() {
        print!("{label:<12}");
        for w in &weights {
            print!(" {:>12.4}", w.probs()[k]);
        }
        println!();
    }

    let one = [1.0];
    println!();
    for (name, z) in &profiles {
        let row = DesignRow { x: z, z1: z, z2: &one, z3: z };
        let p = predict_row(&params, &inflated, row)?;
        println!(
            "{name}: Pr(y > 0) = {:.4}, lambda = {:.3}, theta = {:.3}, E(y | y > 0) = {:.3}",
            p.p_positive, p.lambda, p.theta, p.mean_positive
        );
    }
    Ok(())
}
