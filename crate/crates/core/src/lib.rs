//! M-estimation of parametric stable tail dependence functions.
//!
//! The crate provides the rank-based empirical tail dependence estimator,
//! logistic, asymmetric logistic and max-linear factor families, the
//! moment-matching criterion and its minimizer, asymptotic covariance
//! matrices with Wald-type tests, samplers for the corresponding
//! max-stable laws, and a harness for replication studies.

pub mod config;
pub mod empirical;
pub mod error;
pub mod estimator;
pub mod families;
pub mod harness;
pub mod inference;
pub mod params;
pub mod quadrature;
pub mod sample;
pub mod samplers;
pub mod util;
pub mod weights;

pub use config::{EstimationConfig, OptimizerConfig};
pub use empirical::EmpiricalStdf;
pub use error::{Error, ErrorKind, Result};
pub use estimator::{fit, EstimateResult};
pub use families::{AsymLogistic, FactorModel, Family, Logistic};
pub use params::ParameterSpace;
pub use quadrature::{CubatureResult, CubatureSpec, Rule};
pub use sample::{compute_ranks, stdf_bounds_check, RankMatrix, Sample};
pub use weights::WeightSpec;
