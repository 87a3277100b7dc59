#![allow(dead_code)]

use mitnb::distributions::InflatedValueSet;
use mitnb::simulation::{CovariateGenerator, SimulationDesign};
use mitnb::{ModelSpec, ParameterVector};

pub const SPIKES: [u64; 3] = [2, 7, 14];

/// Four covariates (two numeric, two categorical) driving every component.
pub const SPIKED_CONFIG: &str = r#"
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

[columns]
g = "categorical"
d = "categorical"
"#;

pub fn spiked_spec() -> ModelSpec {
    ModelSpec::from_config_str(SPIKED_CONFIG).unwrap()
}

pub fn plain_spec() -> ModelSpec {
    spiked_spec().with_inflated(InflatedValueSet::empty())
}

pub fn spiked_truth() -> ParameterVector {
    ParameterVector {
        beta_logit: vec![0.3, 0.5, -0.4, 0.2, -0.3],
        beta_location: vec![1.6, 0.25, -0.3, 0.2],
        beta_dispersion: vec![0.2, 0.3],
        gamma: vec![vec![-2.5, 0.3], vec![-2.8, 0.6], vec![-3.5, 1.0]],
    }
}

pub fn covariates() -> Vec<CovariateGenerator> {
    vec![
        CovariateGenerator::normal("x1", 0.0, 1.0),
        CovariateGenerator::uniform("x2", 0.0, 1.0),
        CovariateGenerator::categorical("g", &["a", "b", "c"], &[0.5, 0.3, 0.2]),
        CovariateGenerator::categorical("d", &["no", "yes"], &[0.6, 0.4]),
    ]
}

pub fn spiked_design(n: usize, seed: u64) -> SimulationDesign {
    SimulationDesign {
        n,
        seed,
        covariates: covariates(),
        model: spiked_spec(),
        truth: spiked_truth(),
    }
}

/// Same covariates without spikes.
pub fn plain_design(n: usize, seed: u64) -> SimulationDesign {
    let mut truth = spiked_truth();
    truth.gamma.clear();
    SimulationDesign {
        n,
        seed,
        covariates: covariates(),
        model: plain_spec(),
        truth,
    }
}

/// Mixing intercepts and third-quarter shifts for 16 inflated values.
pub const REPORTED_SPIKES: [u64; 16] = [2, 3, 4, 6, 7, 10, 14, 15, 20, 28, 29, 30, 40, 45, 50, 60];
pub const REPORTED_GAMMA0: [f64; 16] = [
    -2.360, -2.744, -3.011, -2.814, -3.030, -5.083, -4.120, -5.535, -5.472, -6.744, -6.894, -5.736, -6.723,
    -7.442, -7.886, -6.781,
];
pub const REPORTED_GAMMA_Q3: [f64; 16] = [
    -1.634, -1.765, -1.994, 0.372, 0.625, 1.447, 1.754, 2.139, 1.767, 0.978, 1.695, 2.192, 1.101, 1.680, 2.106,
    2.110,
];
/// Reported mixing probabilities, last entry the truncated-NB weight.
pub const REPORTED_P_OFF_PEAK: [f64; 17] = [
    0.0697, 0.0475, 0.0363, 0.0442, 0.0357, 0.0046, 0.0120, 0.0029, 0.0031, 0.0009, 0.0007, 0.0024, 0.0009,
    0.0004, 0.0003, 0.0008, 0.7376,
];
pub const REPORTED_P_Q3: [f64; 17] = [
    0.0127, 0.0076, 0.0046, 0.0600, 0.0623, 0.0182, 0.0648, 0.0231, 0.0170, 0.0022, 0.0038, 0.0199, 0.0025,
    0.0022, 0.0021, 0.0065, 0.6903,
];
