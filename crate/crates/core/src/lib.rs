//! Break-point gravity models for communication-intensity flows.
//!
//! Pairwise log-flows are regressed on log populations and a per-source
//! piecewise-linear function of log distance. Break points are sampled by
//! Metropolis steps; the coefficients by a Bayesian LASSO Gibbs block, with
//! reversible-jump moves over the hinge terms when break presence is itself
//! uncertain.

pub mod baselines;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod flowdata;
pub mod init;
pub mod linalg;
pub mod sampler;
pub mod simharness;

pub use design::{BreakPoints, Column, DesignMatrix, InclusionState, ModelCase};
pub use diagnostics::{CredibleInterval, DiagnosticsReport, NewPair, Prediction, PredictOptions, VarianceDecomposition};
pub use error::{Error, Result};
pub use flowdata::{load_dataset, DistanceSource, FlowDataset, FlowRecord, Location};
pub use init::InitialValues;
pub use sampler::{ChainTrace, ParameterState, SamplerConfig};
pub use simharness::{ScalingReport, SimScenario, SimTruth, StudyConfig, StudyReport};
