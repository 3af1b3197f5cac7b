//! Minimum-investment-risk portfolios under a single-factor return model.
//!
//! The crate has two halves that are meant to be checked against each other:
//!
//! * [`replica`] evaluates the large-N closed forms for the minimal risk per
//!   asset, the investment concentration and the annealed (expected-risk)
//!   baseline, and provides a numerical stationarity check of the
//!   replica-symmetric free energy.
//! * [`market_sim`], [`solver`] and [`experiment`] generate synthetic markets,
//!   solve the budget-constrained quadratic problem exactly, and aggregate
//!   Monte Carlo statistics.
//!
//! [`ensemble`] holds the distribution specs and the scalar ensemble averages
//! shared by both halves.

pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod market_sim;
pub mod replica;
pub mod rng;
pub mod solver;

pub use ensemble::{
    compute_moments, factor_strength, sample_ensemble, sample_factors, AssetEnsemble,
    DistributionSpec, EnsembleAverages, EnsembleMoments, FactorSeries,
};
pub use error::{Error, Result};
pub use experiment::{
    compare, run_experiment, run_trial, scan, AggregateResult, ComparisonReport, MomentsMode,
    Quantity, ScanAxis, ScanPoint, Tolerances, TrialConfig, TrialRecord,
};
pub use market_sim::{
    expected_wishart, generate_returns, wishart, NoiseFamily, ReturnMatrix, RiskMatrix,
};
pub use replica::stationary::{
    beta_derivative_epsilon, free_energy, free_energy_gradient, solve_stationary,
    OrderParameterSet, StationaryOptions, StationarySolution,
};
pub use replica::{factor_gain, predict, predict_independent, ReplicaPrediction};
pub use solver::{
    investment_risk, minimize_expected_risk, minimize_risk, Portfolio, SolveReport,
};
