//! Experiment orchestration: rate predictors, grid experiments, slope fits
//! and persistence.

mod experiment;
mod io;
mod rates;

pub use experiment::{
    fit_slope, run_experiment, run_experiment_with_threads, CellKey, CellSummary, ExperimentConfig, ResultRow,
    ResultsTable, RowFailure, SignalSpec, SlopeFit, SolverChoice, XAxis, YStat, SUCCESS_THRESHOLD,
};
pub use io::{export_results, export_summary, load_config, load_results};
pub use rates::{predict_rate_l1, predict_rate_sparse, RateInputs, RatePrediction, Regime, MAX_DIMENSION};
