//! Multi-target linear shrinkage covariance estimation.
//!
//! The estimators combine the sample covariance with an orthonormal family
//! of fixed target matrices, in oracle and bona fide (observable) forms, for
//! known and unknown means. Around them the crate provides the scaled
//! Frobenius matrix algebra, target-family constructors, Monte-Carlo
//! experiment harnesses with PRIAL reporting, and a minimum-variance
//! portfolio backtester.
//!
//! Everything is deterministic under a fixed seed: Monte-Carlo replications
//! draw from independent counter-based RNG streams and aggregate in
//! replication order, so reports do not depend on thread count.

pub mod backtest;
pub mod error;
pub mod estimators;
pub mod matrix;
pub mod simulation;
pub mod targets;

pub use backtest::{
    AssetInfo, BacktestConfig, BacktestReport, EstimatorKind, MonthRecord, ReturnsPanel,
    gmv_weights, ingest_prices, run_backtest,
};
pub use error::{Error, Result};
pub use estimators::{
    MeanMode, ObservationMatrix, ShrinkageResult, lw_estimator, mtse, mtse_with, oracle_mtse,
    sample_covariance, vhat_proj, vhat_s,
};
pub use matrix::{
    ComplexSqrtFactor, SymMatrix, Tolerances, complex_sqrt_factor, gram_schmidt, psd_project,
    pseudo_inverse, scaled_inner, scaled_norm, scaled_norm2,
};
pub use simulation::{
    ExperimentConfig, ExperimentMeanMode, ExperimentReport, ReportRow, SampleDistribution,
    SigmaSpec, Sweep, TargetPlan, build_block_sigma, prial, run_experiment, sample_gaussian,
    sample_multivariate_t, sample_wishart,
};
pub use targets::{
    TargetProvenance, TargetSet, block_identity_targets, disjoint_block_targets, permuted_targets,
    random_wishart_targets, sector_targets,
};
