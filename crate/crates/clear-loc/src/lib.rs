//! Closed-form TDOA/FDOA localization of a moving source with the minimal
//! sensor count: `N + 1` sensors in `N`-dimensional space (3 sensors in 2-D,
//! 4 in 3-D).
//!
//! The estimator runs in two stages. Stage 1 linearizes the squared-range
//! and range-rate equations by introducing the range and range rate to the
//! reference sensor as nuisance parameters, solves a weighted least squares,
//! and eliminates the nuisance pair with a Sylvester resultant, leaving a
//! quartic whose positive real roots are the range candidates. Stage 2
//! estimates the residual error of the selected candidate with one more
//! small linear solve. Under small Gaussian noise the result tracks the
//! Cramer-Rao lower bound, which this crate also computes.
//!
//! The crate ships the estimator, reference estimators for comparison, CRLB
//! analysis, a deterministic Monte Carlo harness with scenario presets, and
//! CSV/JSON file formats for batch runs.
//!
//! ## Examples
//!
//! The `examples/` directory is the best starting point; each file is a
//! runnable walkthrough of one capability:
//!
//! - **`minimal_sensors_2d`** - localize with 3 sensors in 2-D, noiseless
//!   and noisy, printing both stages and the candidate list
//! - **`minimal_sensors_3d`** - the 3-D analog with 4 sensors
//! - **`crlb_report`** - CRLB, predicted covariance, and the small-noise
//!   check for a fixed geometry
//! - **`noise_sweep_rmse`** - RMSE vs CRLB across a noise sweep
//! - **`random_geometry_cdf`** - error CDF and 95th percentiles over random
//!   deployments, estimator comparison
//! - **`sensor_count_sweep`** - accuracy as the sensor count grows
//! - **`weight_iterations`** - effect of the stage-1 weight refinement
//! - **`estimate_from_csv`** - the file formats the CLI consumes
//!
//! ```bash
//! cargo run --release -p clear-loc --example minimal_sensors_2d
//! cargo run --release -p clear-loc --example crlb_report
//! ```
//!
//! ## CLI
//!
//! A thin binary wraps the same calls for batch use:
//!
//! ```bash
//! clear-loc scenario --name scenario1 --trials 500 --seed 7 --out results
//! clear-loc estimate --sensors sensors.csv --measurements meas.csv --sigma2-tdoa 1
//! clear-loc crlb --sensors sensors.csv --source 400,200 --source-velocity 20,10
//! clear-loc list-scenarios
//! ```

pub mod baselines;
pub mod crlb;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod io;
mod linalg;
pub mod measurement;
pub mod polyelim;
pub mod sim;

pub use crate::baselines::{gauss_newton_ml, ho_xu_tswls, BaselineResult};
pub use crate::crlb::{
    crlb, crlb_report, measurement_jacobian, predicted_cov, small_noise_check, CrlbReport,
    SmallNoiseReport,
};
pub use crate::error::{Error, Result};
pub use crate::estimator::{
    clear_estimate, select_candidate, stage1_iterate_weight, stage1_solve, stage1_system,
    stage2_refine, Candidate, Diagnostics, EstimateOptions, EstimationResult, Stage1System,
    Stage2Refinement,
};
pub use crate::geometry::{SensorArray, SourceState, COINCIDENCE_THRESHOLD};
pub use crate::measurement::{
    build_covariance, ml_cost, sample_measurements, true_fdoa, true_measurements, true_tdoa,
    MeasurementSet, NoiseSpec,
};
pub use crate::polyelim::{
    quadratic_coeffs, real_positive_roots, recover_vdot, sylvester_det, sylvester_det_scale,
    sylvester_quartic, NuisancePair, QuadraticPair, QuarticPoly,
};
pub use crate::sim::{
    default_noise_grid, empirical_cdf, percentile, preset, preset_names, random_geometry, rmse,
    run_trials, trial_seed, EmpiricalCdf, ErrorField, EstimatorKind, GeometrySpec, RmseSummary,
    Scenario, SourceSpec, TrialRecord, DEFAULT_SEED,
};
