//! Hurdle regression for count data with multiple inflated values.
//!
//! Zeros are separated from positives by a logit hurdle. Positive counts
//! follow a finite mixture of point masses at chosen inflated values and a
//! zero-truncated NB2, with every component driven by covariates. The crate
//! covers distributions, model specification, maximum-likelihood fitting,
//! delta-method inference, predictive margins, model comparison, rootograms
//! and seeded simulation.

pub mod cli;
pub mod dataset;
pub mod design;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod optim;
pub mod params;
pub mod selection;
pub mod simulation;
pub mod spec;

pub use dataset::{load_csv, read_csv, Column, ColumnType, Dataset, LoadReport, Schema};
pub use design::{build_design, DesignMatrices, Encoding};
pub use diagnostics::{detect_spike_candidates, rootogram, RootogramTable, SpikeCandidate};
pub use distributions::{InflatedValueSet, MixtureWeights, Nb2Params};
pub use error::{Error, Result};
pub use estimation::{fit, FitOptions, FitResult};
pub use inference::{delta_se, predict, predictive_margins, MarginMode, MarginTable, PredictionRow};
pub use params::{Layout, ParameterVector};
pub use selection::{compare, information_criteria, ComparisonTable};
pub use simulation::{simulate, CovariateGenerator, SimulationDesign};
pub use spec::{ModelSpec, Term, TermSet};
