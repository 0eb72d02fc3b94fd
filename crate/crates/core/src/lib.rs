//! Estimation of optimal adaptive and partially adaptive treatment strategies
//! from longitudinal data.
//!
//! An adaptive strategy tailors each treatment decision to the whole observed
//! history. A partially adaptive one deliberately uses only a chosen subset of
//! it, the tailoring covariates, even when other covariates modify the
//! treatment effect. The crate provides
//!
//! - [`model`]: staged data, model terms and blip functions,
//! - [`glm`]: weighted least squares and logistic regression,
//! - [`weights`]: balancing, inverse probability, ratio and censoring weights,
//! - [`estimators`]: dWOLS, G-estimation and six partially adaptive variants,
//! - [`inference`]: the nonparametric and the adaptive m-out-of-n bootstrap,
//! - [`simulation`]: the benchmark data-generating processes and metrics.
//!
//! ```
//! use pats::estimators::{fit, EstimatorKind, FitOptions};
//! use pats::simulation::Scenario;
//!
//! let scenario = Scenario::S1;
//! let data = scenario.generate(5_000, 11);
//! let specs = scenario.analysis_specs(EstimatorKind::CeDwols);
//! let result = fit(&data, &specs, EstimatorKind::CeDwols, &FitOptions::default()).unwrap();
//! let psi = result.stage(1).psi_pats.psi();
//! assert!((psi[0] - 1.25).abs() < 0.15 && (psi[1] + 1.0).abs() < 0.2);
//! ```

pub mod error;
pub mod estimators;
pub mod glm;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use estimators::{fit, EstimatorKind, FitOptions, FitResult, StageFit};
pub use model::{BlipCoefficients, BlipKind, StageData, StageSpec, StagedDataset, Term, TermList};
