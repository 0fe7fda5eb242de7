//! Model-free pricing of path-dependent exotic derivatives via truncated
//! path signatures.
//!
//! The pipeline: simulate (or load) price paths, apply the lead-lag
//! transform, compute truncated signatures, express exotic payoffs as
//! linear functionals on the signature via ridge regression, then back out
//! the implied expected signature from observed market prices of a payoff
//! family. Any payoff in the linear span of the family can then be priced
//! as a dual pairing, with no reference to the market's model.

// Validation guards use negated comparisons so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod error;
pub mod experiments;
pub mod leadlag;
pub mod models;
pub mod payoffs;
pub mod signature;
pub mod tensor;

pub use calibrate::{
    fit_implied_signature, fit_payoff_functional, price_payoff, ImpliedExpectedSignature,
    PayoffFunctional, PayoffRegression, Regularization,
};
pub use error::{Error, Result};
pub use experiments::{
    metrics_of, render_report, run_family_size_sweep, run_pricing_experiment, CurvePoint,
    ExperimentConfig, ExperimentReport, Metrics, ModelRun, PredictionRow,
};
pub use leadlag::{lead_lag, LeadLagPath, PricePath};
pub use models::{market_price, sample_paths, Market, ModelParams, PriceEstimate};
pub use payoffs::{build_family, FamilyCounts, FamilyGrids, Payoff, PayoffKind, SampleSet};
pub use signature::{increment_functional, qv_functional, sig_path, sig_segment};
pub use tensor::{dimension, LinearFunctional, TruncatedTensor, Word};
