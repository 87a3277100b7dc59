//! Tabulates the hurdle MITNB pmf for one covariate profile and checks it
//! against its closed-form mean.
//!
//!     cargo run --example distributions -- [lambda] [theta]

use mitnb::distributions::{hurdle_pmf, mitnb_mean, mitnb_pmf, tnb_mean, tnb_pmf};
use mitnb::{InflatedValueSet, MixtureWeights, Nb2Params};

fn main() -> mitnb::Result<()> {
    let mut args = std::env::args().skip(1);
    let lambda: f64 = args.next().map_or(4.0, |s| s.parse().expect("lambda"));
    let theta: f64 = args.next().map_or(0.8, |s| s.parse().expect("theta"));

    let nb = Nb2Params::new(lambda, theta)?;
    let inflated = InflatedValueSet::new(vec![2, 7, 14])?;
    // Linear predictors against the truncated-NB reference.
    let weights = MixtureWeights::from_linear_predictors(&[-2.0, -2.4, -3.0]);
    let p_zero = 0.35;

    println!("lambda = {lambda}, theta = {theta}, Pr(y = 0) = {p_zero}");
    println!("spike weights {:?}, truncated-NB weight {:.4}\n", &weights.probs()[..3], weights.tnb_weight());
    println!("{:>4} {:>10} {:>10} {:>10}", "y", "tnb", "mitnb", "hurdle");
    let mut total = 0.0;
    let mut mean = 0.0;
    for j in 0..=400u64 {
        let h = hurdle_pmf(j, p_zero, |k| mitnb_pmf(k, &weights, nb, &inflated))?;
        total += h;
        mean += j as f64 * h;
        if (1..=16).contains(&j) {
            let marker = if inflated.index_of(j).is_some() { " *" } else { "" };
            println!(
                "{j:>4} {:>10.6} {:>10.6} {:>10.6}{marker}",
                tnb_pmf(j, nb)?,
                mitnb_pmf(j, &weights, nb, &inflated)?,
                h
            );
        } else if j == 0 {
            println!("{j:>4} {:>10} {:>10} {h:>10.6}", "-", "-");
        }
    }
    let closed = (1.0 - p_zero) * mitnb_mean(&weights, nb, &inflated)?;
    println!("\nsum of pmf over 0..=400: {total:.12}");
    println!("E(y) by summation {mean:.9}, closed form {closed:.9}");
    println!("truncated-NB mean {:.6}", tnb_mean(nb)?);
    Ok(())
}
