//! Decomposition of a metered total-load series into four behind-the-meter
//! components: a price-responsive storage-like part, irradiance-driven PV,
//! temperature-driven thermostatic load, and a daily-periodic remainder.
//!
//! The storage-like part is modeled by a small fleet of virtual batteries
//! whose parameters are recovered by Newton-based inverse optimization over
//! the fleet's price-response LP; the other components are identified by
//! alternating least squares on top of a daily-cumulant initialization.

pub mod edci;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod lp;
pub mod newton;
pub mod physics;
pub mod report;
pub mod series;
mod simplex;
pub mod surrogate;
pub mod synth;

pub use edci::{
    converged, initialize, predict, refit_pv_tcl, run_edci, update_pl, EdciConfig, EdciResult,
    Exogenous, InitEstimate,
};
pub use error::{Error, Result};
pub use ingest::{load_config, load_scenario, RunConfig};
pub use linalg::Tolerances;
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use newton::{esl_target, grid_init, identify_esl, newton_step, InverseConfig, NewtonTrace};
pub use physics::{esl_device_dispatch, pv_response, tcl_g, tcl_response, EslDevice, TclParams};
pub use report::{
    emit_bundle, evaluate_windows, mean_scores, nrmse, read_scores, score_run, ComponentScores,
    IdentifiedParams, ScoreInput, Split, WindowArtifacts,
};
pub use series::{
    daily_cumulant, periodic_extend, Decomposition, PvSign, ScenarioData, TimeSeries, Unit,
};
pub use surrogate::{assemble_lp, vb_response, VbAssembly, VbResponse, VbTheta};
pub use synth::{generate, synthetic_exogenous, windows, BenchSpec, GroundTruth};
