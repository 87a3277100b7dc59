//! Seeded data generation from a fully specified model.
//!
//! Each row owns two ChaCha8 streams under the design seed: stream `2 i` for
//! its covariates and stream `2 i + 1` for its response, so rows can be drawn
//! in parallel and any row can be regenerated on its own.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Categorical, Column, Dataset};
use crate::design::{DesignMatrices, Encoding};
use crate::distributions::Nb2Params;
use crate::error::{Error, Result};
use crate::estimation::design_layout;
use crate::inference::mixing_weights;
use crate::likelihood::logistic;
use crate::params::ParameterVector;
use crate::spec::ModelSpec;

/// Name of the column recording which regime produced each response:
/// 0 for zeros, `j` for the `j`-th inflated value, `M` for the truncated NB.
pub const REGIME_COLUMN: &str = "regime";

/// Redraws allowed when sampling the zero-truncated NB2.
pub const MAX_REDRAWS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateKind {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// The first level is the reference.
    Categorical { levels: Vec<String>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl CovariateGenerator {
    pub fn normal(name: &str, mean: f64, sd: f64) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Normal { mean, sd },
        }
    }

    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Uniform { low, high },
        }
    }

    pub fn categorical(name: &str, levels: &[&str], probs: &[f64]) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
                probs: probs.to_vec(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("covariate `{}`: {msg}", self.name)));
        match &self.kind {
            CovariateKind::Normal { mean, sd } if !(mean.is_finite() && *sd >= 0.0 && sd.is_finite()) => {
                bad(format!("invalid normal({mean}, {sd})"))
            }
            CovariateKind::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                bad(format!("invalid uniform({low}, {high})"))
            }
            CovariateKind::Categorical { levels, probs } => {
                if levels.is_empty() || levels.len() != probs.len() {
                    return bad("levels and probs must be non-empty and of equal length".into());
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("level probabilities must be nonnegative and sum to 1".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A model, its true coefficients, and how to draw the covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub n: usize,
    pub seed: u64,
    pub covariates: Vec<CovariateGenerator>,
    pub model: ModelSpec,
    pub truth: ParameterVector,
}

impl SimulationDesign {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_covariates(design: &SimulationDesign) -> Result<Vec<(String, Column)>> {
    for g in &design.covariates {
        g.validate()?;
    }
    let rows: Vec<Vec<f64>> = (0..design.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(design.seed, 2 * i as u64);
            design
                .covariates
                .iter()
                .map(|g| match &g.kind {
                    CovariateKind::Normal { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(&mut rng),
                    CovariateKind::Uniform { low, high } => {
                        Uniform::new(*low, *high).expect("validated").sample(&mut rng)
                    }
                    CovariateKind::Categorical { probs, .. } => {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut code = probs.len() - 1;
                        for (k, p) in probs.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                code = k;
                                break;
                            }
                        }
                        code as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(design
        .covariates
        .iter()
        .enumerate()
        .map(|(c, g)| {
            let column = match &g.kind {
                CovariateKind::Categorical { levels, .. } => Column::Categorical(Categorical {
                    levels: levels.clone(),
                    reference: 0,
                    codes: rows.iter().map(|r| r[c] as usize).collect(),
                }),
                _ => Column::Real(rows.iter().map(|r| r[c]).collect()),
            };
            (g.name.clone(), column)
        })
        .collect())
}

/// One NB2 draw as a Poisson with Gamma-distributed mean.
fn nb2_draw<R: Rng>(params: Nb2Params, rng: &mut R) -> u64 {
    let theta = params.theta();
    let mu = Gamma::new(theta, params.lambda() / theta).expect("positive parameters").sample(rng);
    if !(mu > 0.0) {
        return 0;
    }
    Poisson::new(mu).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Zero-truncated NB2 by redrawing zeros.
pub fn tnb_draw<R: Rng>(params: Nb2Params, rng: &mut R) -> Result<u64> {
    for _ in 0..MAX_REDRAWS {
        let y = nb2_draw(params, rng);
        if y > 0 {
            return Ok(y);
        }
    }
    Err(Error::Simulation(format!(
        "no positive draw in {MAX_REDRAWS} attempts; lambda = {} is numerically zero",
        params.lambda()
    )))
}

fn row_slice(m: &nalgebra::DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Responses and regimes for every row of `design` under `truth`. Row `i`
/// uses stream `2 i + 1` of `seed`.
pub fn draw_responses(
    design: &DesignMatrices,
    truth: &ParameterVector,
    seed: u64,
) -> Result<(Vec<u64>, Vec<u64>)> {
    truth.check_layout(design_layout(design))?;
    let inflated = design.inflated.values();
    let m = inflated.len() as u64 + 1;
    let draws: Vec<(u64, u64)> = (0..design.n_rows())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, 2 * i as u64 + 1);
            let p_pos = logistic(dot(&row_slice(&design.x, i), &truth.beta_logit));
            if rng.random::<f64>() >= p_pos {
                return Ok((0, 0));
            }
            let weights = mixing_weights(&truth.gamma, &row_slice(&design.z3, i));
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in weights.probs()[..inflated.len()].iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok((inflated[k], k as u64 + 1));
                }
            }
            let (nb, _) = Nb2Params::from_log_links(
                dot(&row_slice(&design.z1, i), &truth.beta_location),
                dot(&row_slice(&design.z2, i), &truth.beta_dispersion),
            );
            Ok((tnb_draw(nb, &mut rng)?, m))
        })
        .collect::<Result<_>>()?;
    Ok(draws.into_iter().unzip())
}

/// Draws the covariates, then the response and regime of each row. Output
/// is a pure function of the design, seed included.
pub fn simulate(design: &SimulationDesign) -> Result<Dataset> {
    let response = design.model.response.clone();
    let mut columns = draw_covariates(design)?;
    if columns.iter().any(|(n, _)| *n == response || n == REGIME_COLUMN) {
        return Err(Error::Config(format!(
            "covariate names must differ from `{response}` and `{REGIME_COLUMN}`"
        )));
    }
    let covariates = if columns.is_empty() {
        Dataset::with_rows(design.n)
    } else {
        Dataset::new(columns.clone(), None)?
    };
    let encoding = Encoding::from_spec(&design.model, &covariates)?;
    let matrices = DesignMatrices::build(&encoding, &covariates)?;
    let (y, regime) = draw_responses(&matrices, &design.truth, design.seed)?;
    columns.push((response.clone(), Column::Integer(y.iter().map(|&v| v as i64).collect())));
    columns.push((REGIME_COLUMN.into(), Column::Integer(regime.iter().map(|&v| v as i64).collect())));
    Dataset::new(columns, Some(&response))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{tnb_mean, InflatedValueSet};

    fn intercept_design(n: usize, inflated: Vec<u64>, truth: ParameterVector) -> SimulationDesign {
        SimulationDesign {
            n,
            seed: 11,
            covariates: vec![],
            model: ModelSpec::intercept_only("y", InflatedValueSet::new(inflated).unwrap()),
            truth,
        }
    }

    #[test]
    fn certain_zero_gives_all_zeros() {
        let truth = ParameterVector {
            beta_logit: vec![-800.0],
            beta_location: vec![1.0],
            beta_dispersion: vec![0.0],
            gamma: vec![],
        };
        let d = simulate(&intercept_design(500, vec![], truth)).unwrap();
        assert!(d.response().unwrap().iter().all(|&y| y == 0));
    }

    #[test]
    fn tnb_sample_mean() {
        let truth = ParameterVector {
            beta_logit: vec![800.0],
            beta_location: vec![1.7f64.ln()],
            beta_dispersion: vec![0.6f64.ln()],
            gamma: vec![],
        };
        let n = 100_000;
        let y = simulate(&intercept_design(n, vec![], truth)).unwrap().response().unwrap();
        let mean = y.iter().sum::<u64>() as f64 / n as f64;
        let var = y.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let target = tnb_mean(Nb2Params::new(1.7, 0.6).unwrap()).unwrap();
        assert!((mean - target).abs() < 3.0 * (var / n as f64).sqrt(), "{mean} vs {target}");
    }

    #[test]
    fn spike_share_is_binomial() {
        // p_7 = 0.3 against the TNB reference: gamma = ln(0.3 / 0.7).
        let truth = ParameterVector {
            beta_logit: vec![800.0],
            beta_location: vec![1.0],
            beta_dispersion: vec![0.0],
            gamma: vec![vec![(0.3f64 / 0.7).ln()]],
        };
        let n = 20_000;
        let d = simulate(&intercept_design(n, vec![7], truth)).unwrap();
        let Some(Column::Integer(r)) = d.column(REGIME_COLUMN) else {
            panic!("regime column")
        };
        let share = r.iter().filter(|&&k| k == 1).count() as f64 / n as f64;
        assert!((share - 0.3).abs() < 3.0 * (0.3f64 * 0.7 / n as f64).sqrt());
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let design = SimulationDesign {
            n: 300,
            seed: 5,
            covariates: vec![
                CovariateGenerator::normal("x", 0.0, 1.0),
                CovariateGenerator::categorical("g", &["a", "b"], &[0.4, 0.6]),
            ],
            model: ModelSpec::from_config_str(
                "response = \"y\"\ninflated = [3]\n[location]\ncovariates = [\"x\", \"g\"]\n",
            )
            .unwrap(),
            truth: ParameterVector {
                beta_logit: vec![0.2],
                beta_location: vec![1.0, 0.3, -0.2],
                beta_dispersion: vec![0.0],
                gamma: vec![vec![-1.0]],
            },
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        simulate(&design).unwrap().write_csv(&mut a).unwrap();
        simulate(&design).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        simulate(&design.with_seed(6)).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
        let back = SimulationDesign::from_json_str(&design.to_json_string()).unwrap();
        assert_eq!(back, design);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let mut design = intercept_design(10, vec![], ParameterVector::zeros(crate::params::Layout {
            k0: 1,
            k1: 1,
            k2: 1,
            k3: 1,
            spikes: 0,
        }));
        design.covariates.push(CovariateGenerator::categorical("g", &["a", "b"], &[0.5, 0.6]));
        assert!(matches!(simulate(&design), Err(Error::Config(_))));
    }
}
