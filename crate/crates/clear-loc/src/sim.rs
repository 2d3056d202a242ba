//! Scenario presets, randomized geometry, and the Monte Carlo driver.
//!
//! Trials are seeded per `(noise cell, trial index)` through a splitmix-style
//! hash of the scenario seed, so results are identical whether trials run
//! sequentially or in parallel, and every estimator inside one trial sees the
//! same measurement draw. Failed trials are recorded, never dropped.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{gauss_newton_ml, ho_xu_tswls};
use crate::error::{Error, Result};
use crate::estimator::{clear_estimate, EstimateOptions};
use crate::geometry::{SensorArray, SourceState};
use crate::linalg::{condition_2, CONDITION_LIMIT};
use crate::measurement::{build_covariance, sample_measurements, NoiseSpec};

/// Default scenario seed.
pub const DEFAULT_SEED: u64 = 1_234_567;
/// Sensor velocity range for randomized geometries (meters/second, per axis).
pub const VELOCITY_RANGE: (f64, f64) = (-50.0, 50.0);
/// Minimum pairwise sensor separation for randomized geometries (meters).
pub const SENSOR_MIN_SEPARATION: f64 = 1.0;
/// Rejection-sampling budget for randomized geometries.
pub const MAX_GEOMETRY_ATTEMPTS: usize = 100;

/// 2-D sensor table: `x, y, vx, vy`; row 0 is the reference.
const TABLE_2D: [[f64; 4]; 4] = [
    [50.0, 50.0, 20.0, 30.0],
    [1000.0, 1000.0, -10.0, -10.0],
    [200.0, 800.0, 50.0, 20.0],
    [500.0, 100.0, -30.0, 10.0],
];

/// 3-D sensor table: `x, y, z, vx, vy, vz`; row 0 is the reference.
const TABLE_3D: [[f64; 6]; 5] = [
    [300.0, 100.0, 150.0, 30.0, -20.0, 20.0],
    [400.0, 150.0, 100.0, -30.0, 10.0, 20.0],
    [300.0, 500.0, 200.0, 10.0, -20.0, 10.0],
    [350.0, 200.0, 100.0, 10.0, 20.0, 30.0],
    [-100.0, -100.0, -100.0, -20.0, 10.0, 10.0],
];

/// Builds the first `count` rows of the 2-D sensor table.
pub fn table_2d(count: usize) -> SensorArray {
    let positions: Vec<&[f64]> = TABLE_2D[..count].iter().map(|r| &r[..2]).collect();
    let velocities: Vec<&[f64]> = TABLE_2D[..count].iter().map(|r| &r[2..]).collect();
    SensorArray::from_rows(&positions, &velocities).expect("table geometry is valid")
}

/// Builds the first `count` rows of the 3-D sensor table.
pub fn table_3d(count: usize) -> SensorArray {
    let positions: Vec<&[f64]> = TABLE_3D[..count].iter().map(|r| &r[..3]).collect();
    let velocities: Vec<&[f64]> = TABLE_3D[..count].iter().map(|r| &r[3..]).collect();
    SensorArray::from_rows(&positions, &velocities).expect("table geometry is valid")
}

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// The two-stage minimal-sensor estimator of this crate.
    Clear,
    /// Classical two-stage WLS baseline (needs one extra sensor).
    HoXu,
    /// Damped Gauss-Newton on the ML cost, initialized from the baseline
    /// when available, otherwise from the sensor centroid at rest.
    GaussNewton,
}

impl EstimatorKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorKind::Clear => "clear",
            EstimatorKind::HoXu => "ho-xu",
            EstimatorKind::GaussNewton => "gauss-newton",
        }
    }

    pub fn all() -> [EstimatorKind; 3] {
        [
            EstimatorKind::Clear,
            EstimatorKind::HoXu,
            EstimatorKind::GaussNewton,
        ]
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clear" => Ok(EstimatorKind::Clear),
            "ho-xu" | "ho_xu" | "hoxu" => Ok(EstimatorKind::HoXu),
            "gauss-newton" | "gauss_newton" | "gn" => Ok(EstimatorKind::GaussNewton),
            other => Err(Error::InvalidInput(format!(
                "unknown estimator tag `{other}` (expected clear, ho-xu, or gauss-newton)"
            ))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Fixed sensors or a randomized deployment drawn fresh every trial.
#[derive(Debug, Clone)]
pub enum GeometrySpec {
    Fixed(SensorArray),
    Random {
        dim: usize,
        sensor_count: usize,
        bounds: (f64, f64),
    },
}

/// Fixed source or one drawn uniformly inside the deployment box.
#[derive(Debug, Clone)]
pub enum SourceSpec {
    Fixed(SourceState),
    Random { bounds: (f64, f64) },
}

/// A full simulation configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub geometry: GeometrySpec,
    pub source: SourceSpec,
    /// Noise variances (sigma^2, shared by both blocks), strictly increasing.
    pub noise_grid: Vec<f64>,
    /// Optional sensor-count sweep; requires a random geometry.
    pub sensor_counts: Option<Vec<usize>>,
    /// Monte Carlo trials per cell.
    pub trials: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    pub weight_iterations: usize,
}

impl Scenario {
    /// Flattened `(sigma2, sensor_count)` cells, sensor counts outermost.
    pub fn cells(&self) -> Vec<(f64, usize)> {
        let counts: Vec<usize> = match (&self.sensor_counts, &self.geometry) {
            (Some(c), _) => c.clone(),
            (None, GeometrySpec::Fixed(array)) => vec![array.sensor_count()],
            (None, GeometrySpec::Random { sensor_count, .. }) => vec![*sensor_count],
        };
        let mut cells = Vec::with_capacity(counts.len() * self.noise_grid.len());
        for &count in &counts {
            for &sigma2 in &self.noise_grid {
                cells.push((sigma2, count));
            }
        }
        cells
    }

    pub fn fixed_sensors(&self) -> Option<SensorArray> {
        match &self.geometry {
            GeometrySpec::Fixed(a) => Some(a.clone()),
            GeometrySpec::Random { .. } => None,
        }
    }

    pub fn fixed_source(&self) -> Option<SourceState> {
        match &self.source {
            SourceSpec::Fixed(s) => Some(s.clone()),
            SourceSpec::Random { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("need at least one trial".into()));
        }
        if self.noise_grid.is_empty() {
            return Err(Error::InvalidInput("noise grid is empty".into()));
        }
        if !self
            .noise_grid
            .windows(2)
            .all(|w| w[0] < w[1])
        {
            return Err(Error::InvalidInput(
                "noise grid must be strictly increasing".into(),
            ));
        }
        if self.sensor_counts.is_some() && matches!(self.geometry, GeometrySpec::Fixed(_)) {
            return Err(Error::InvalidInput(
                "sensor-count sweeps need a random geometry".into(),
            ));
        }
        Ok(())
    }
}

/// Eleven noise variances, one per decade from 1e-4 to 1e6.
pub fn default_noise_grid() -> Vec<f64> {
    (-4..=6).map(|k| 10.0_f64.powi(k)).collect()
}

/// Scenario presets mirroring the published simulation study.
///
/// `scenario1`: 3 sensors, 2-D, near-colinear (minimal sensor count).
/// `scenario2`: 4 sensors, 2-D, estimator comparison.
/// `scenario3`: 6 random sensors and random source per trial, sigma = 5 m,
///              empirical CDF of the position error.
/// `scenario4`: 4 sensors, 3-D (minimal).
/// `scenario5`: 5 sensors, 3-D.
/// `scenario6`: sensor-count sweep 3..=12, random deployments, sigma^2 = 25.
pub fn preset(name: &str) -> Result<Scenario> {
    let source_2d = SourceState::from_slices(&[400.0, 200.0], &[20.0, 10.0]);
    let source_3d = SourceState::from_slices(&[600.0, 650.0, 550.0], &[-20.0, 15.0, 40.0]);
    match name {
        "scenario1" => Ok(Scenario {
            name: name.into(),
            geometry: GeometrySpec::Fixed(table_2d(3)),
            source: SourceSpec::Fixed(source_2d),
            noise_grid: default_noise_grid(),
            sensor_counts: None,
            trials: 5000,
            estimators: vec![EstimatorKind::Clear],
            seed: DEFAULT_SEED,
            weight_iterations: 2,
        }),
        "scenario2" => Ok(Scenario {
            name: name.into(),
            geometry: GeometrySpec::Fixed(table_2d(4)),
            source: SourceSpec::Fixed(source_2d),
            noise_grid: default_noise_grid(),
            sensor_counts: None,
            trials: 5000,
            estimators: vec![
                EstimatorKind::Clear,
                EstimatorKind::HoXu,
                EstimatorKind::GaussNewton,
            ],
            seed: DEFAULT_SEED,
            weight_iterations: 2,
        }),
        "scenario3" => Ok(Scenario {
            name: name.into(),
            geometry: GeometrySpec::Random {
                dim: 2,
                sensor_count: 6,
                bounds: (0.0, 1000.0),
            },
            source: SourceSpec::Random {
                bounds: (0.0, 1000.0),
            },
            noise_grid: vec![25.0],
            sensor_counts: None,
            trials: 200,
            estimators: vec![EstimatorKind::Clear, EstimatorKind::HoXu],
            seed: DEFAULT_SEED,
            weight_iterations: 2,
        }),
        "scenario4" => Ok(Scenario {
            name: name.into(),
            geometry: GeometrySpec::Fixed(table_3d(4)),
            source: SourceSpec::Fixed(source_3d),
            noise_grid: default_noise_grid(),
            sensor_counts: None,
            trials: 5000,
            estimators: vec![EstimatorKind::Clear],
            seed: DEFAULT_SEED,
            weight_iterations: 2,
        }),
        "scenario5" => Ok(Scenario {
            name: name.into(),
            geometry: GeometrySpec::Fixed(table_3d(5)),
            source: SourceSpec::Fixed(source_3d),
            noise_grid: default_noise_grid(),
            sensor_counts: None,
            trials: 5000,
            estimators: vec![
                EstimatorKind::Clear,
                EstimatorKind::HoXu,
                EstimatorKind::GaussNewton,
            ],
            seed: DEFAULT_SEED,
            weight_iterations: 2,
        }),
        "scenario6" => Ok(Scenario {
            name: name.into(),
            geometry: GeometrySpec::Random {
                dim: 2,
                sensor_count: 6,
                bounds: (0.0, 1000.0),
            },
            source: SourceSpec::Fixed(SourceState::from_slices(&[550.0, 450.0], &[-10.0, 5.0])),
            noise_grid: vec![25.0],
            sensor_counts: Some((3..=12).collect()),
            trials: 500,
            estimators: vec![EstimatorKind::Clear, EstimatorKind::HoXu],
            seed: DEFAULT_SEED,
            weight_iterations: 2,
        }),
        other => Err(Error::UnknownScenario(other.into())),
    }
}

pub fn preset_names() -> [&'static str; 6] {
    [
        "scenario1",
        "scenario2",
        "scenario3",
        "scenario4",
        "scenario5",
        "scenario6",
    ]
}

/// Draws a sensor array with uniform positions in `bounds` per axis and
/// uniform velocities in [`VELOCITY_RANGE`], rejecting deployments with
/// sensors closer than [`SENSOR_MIN_SEPARATION`] or an ill-conditioned
/// pseudo-linear regressor.
pub fn random_geometry<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    count: usize,
    bounds: (f64, f64),
) -> Result<SensorArray> {
    if count < dim + 1 {
        return Err(Error::InsufficientSensors {
            needed: dim + 1,
            got: count,
        });
    }
    'attempt: for _ in 0..MAX_GEOMETRY_ATTEMPTS {
        let mut positions = Vec::with_capacity(count);
        let mut velocities = Vec::with_capacity(count);
        for _ in 0..count {
            positions.push(DVector::from_fn(dim, |_, _| {
                rng.random_range(bounds.0..bounds.1)
            }));
            velocities.push(DVector::from_fn(dim, |_, _| {
                rng.random_range(VELOCITY_RANGE.0..VELOCITY_RANGE.1)
            }));
        }
        for i in 0..count {
            for j in (i + 1)..count {
                if (&positions[i] - &positions[j]).norm() < SENSOR_MIN_SEPARATION {
                    continue 'attempt;
                }
            }
        }
        let array = match SensorArray::new(positions, velocities) {
            Ok(a) => a,
            Err(_) => continue,
        };
        if regressor_condition(&array) > CONDITION_LIMIT {
            continue;
        }
        return Ok(array);
    }
    Err(Error::GeometryGeneration {
        attempts: MAX_GEOMETRY_ATTEMPTS,
    })
}

/// Condition number of the stage-1 regressor `G1` for this deployment.
fn regressor_condition(array: &SensorArray) -> f64 {
    let m = array.measurement_count();
    let n = array.dim();
    let mut g1 = nalgebra::DMatrix::zeros(2 * m, 2 * n);
    let s0 = array.reference_position();
    let sd0 = array.reference_velocity();
    for i in 1..=m {
        for j in 0..n {
            g1[(i - 1, j)] = 2.0 * (s0[j] - array.position(i)[j]);
            g1[(m + i - 1, j)] = 2.0 * (sd0[j] - array.velocity(i)[j]);
            g1[(m + i - 1, n + j)] = 2.0 * (s0[j] - array.position(i)[j]);
        }
    }
    condition_2(&g1)
}

/// One estimator outcome inside one Monte Carlo trial.
///
/// `runtime_s` is wall-clock time and is deliberately excluded from file
/// output and equality so that reruns stay byte-identical.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub cell: usize,
    pub sigma2: f64,
    pub sensor_count: usize,
    pub trial: usize,
    pub estimator: EstimatorKind,
    pub failed: bool,
    pub position_error: Option<f64>,
    pub velocity_error: Option<f64>,
    pub ml_cost: Option<f64>,
    pub runtime_s: f64,
}

impl TrialRecord {
    /// Everything except the wall-clock runtime.
    pub fn deterministic_view(&self) -> impl PartialEq + std::fmt::Debug + '_ {
        (
            self.cell,
            self.sigma2.to_bits(),
            self.sensor_count,
            self.trial,
            self.estimator,
            self.failed,
            self.position_error.map(f64::to_bits),
            self.velocity_error.map(f64::to_bits),
            self.ml_cost.map(f64::to_bits),
        )
    }
}

/// Splitmix-style seed mixing for per-trial reproducibility.
pub fn trial_seed(base: u64, cell: u64, trial: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ cell) ^ trial)
}

/// Runs every `(cell, trial)` pair, in parallel, with per-trial seeding.
///
/// All estimators inside one trial see the same measurement set. Estimation
/// failures (including geometry-generation failures for randomized
/// deployments) are recorded with the `failed` flag; nothing is dropped.
pub fn run_trials(scenario: &Scenario, estimators: &[EstimatorKind]) -> Result<Vec<TrialRecord>> {
    scenario.validate()?;
    if estimators.is_empty() {
        return Err(Error::InvalidInput("no estimators selected".into()));
    }
    let cells = scenario.cells();
    let per_cell: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .enumerate()
        .map(|(cell_idx, &(sigma2, count))| {
            (0..scenario.trials)
                .into_par_iter()
                .map(|trial| run_one_trial(scenario, estimators, cell_idx, sigma2, count, trial))
                .collect::<Vec<Vec<TrialRecord>>>()
                .into_iter()
                .flatten()
                .collect()
        })
        .collect();
    Ok(per_cell.into_iter().flatten().collect())
}

fn failed_records(
    estimators: &[EstimatorKind],
    cell: usize,
    sigma2: f64,
    sensor_count: usize,
    trial: usize,
) -> Vec<TrialRecord> {
    estimators
        .iter()
        .map(|&estimator| TrialRecord {
            cell,
            sigma2,
            sensor_count,
            trial,
            estimator,
            failed: true,
            position_error: None,
            velocity_error: None,
            ml_cost: None,
            runtime_s: 0.0,
        })
        .collect()
}

fn run_one_trial(
    scenario: &Scenario,
    estimators: &[EstimatorKind],
    cell: usize,
    sigma2: f64,
    sensor_count: usize,
    trial: usize,
) -> Vec<TrialRecord> {
    let seed = trial_seed(scenario.seed, cell as u64, trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let sensors = match &scenario.geometry {
        GeometrySpec::Fixed(a) => a.clone(),
        GeometrySpec::Random { dim, bounds, .. } => {
            match random_geometry(&mut rng, *dim, sensor_count, *bounds) {
                Ok(a) => a,
                Err(_) => return failed_records(estimators, cell, sigma2, sensor_count, trial),
            }
        }
    };
    let source = match &scenario.source {
        SourceSpec::Fixed(s) => s.clone(),
        SourceSpec::Random { bounds } => {
            let mut drawn = None;
            for _ in 0..MAX_GEOMETRY_ATTEMPTS {
                let candidate = SourceState::new(
                    DVector::from_fn(sensors.dim(), |_, _| {
                        rng.random_range(bounds.0..bounds.1)
                    }),
                    DVector::from_fn(sensors.dim(), |_, _| {
                        rng.random_range(VELOCITY_RANGE.0..VELOCITY_RANGE.1)
                    }),
                );
                if sensors.min_range(&candidate.position) >= SENSOR_MIN_SEPARATION {
                    drawn = Some(candidate);
                    break;
                }
            }
            match drawn {
                Some(s) => s,
                None => return failed_records(estimators, cell, sigma2, sensor_count, trial),
            }
        }
    };

    let spec = match NoiseSpec::uniform(sigma2) {
        Ok(s) => s,
        Err(_) => return failed_records(estimators, cell, sigma2, sensor_count, trial),
    };
    let meas = match sample_measurements(&mut rng, &source, &sensors, &spec) {
        Ok(m) => m,
        Err(_) => return failed_records(estimators, cell, sigma2, sensor_count, trial),
    };

    let options = EstimateOptions {
        weight_iterations: scenario.weight_iterations,
    };
    let needs_baseline = estimators
        .iter()
        .any(|e| matches!(e, EstimatorKind::HoXu | EstimatorKind::GaussNewton));
    let baseline = if needs_baseline {
        Some(ho_xu_tswls(&meas, &sensors))
    } else {
        None
    };

    estimators
        .iter()
        .map(|&estimator| {
            let start = Instant::now();
            let outcome: Result<(SourceState, Option<f64>)> = match estimator {
                EstimatorKind::Clear => clear_estimate(&meas, &sensors, &options).and_then(|r| {
                    let cost = crate::measurement::ml_cost(&meas, &r.refined_estimate, &sensors)?;
                    Ok((r.refined_estimate, Some(cost)))
                }),
                EstimatorKind::HoXu => match baseline.as_ref().unwrap() {
                    Ok(r) if r.converged && r.estimate.is_finite() => {
                        let cost =
                            crate::measurement::ml_cost(&meas, &r.estimate, &sensors).ok();
                        Ok((r.estimate.clone(), cost))
                    }
                    Ok(_) => Err(Error::EstimationFailure {
                        reason: "baseline did not converge".into(),
                    }),
                    Err(e) => Err(Error::EstimationFailure {
                        reason: e.to_string(),
                    }),
                },
                EstimatorKind::GaussNewton => {
                    let init = match baseline.as_ref().unwrap() {
                        Ok(r) if r.converged && r.estimate.is_finite() => r.estimate.clone(),
                        _ => centroid_state(&sensors),
                    };
                    gauss_newton_ml(&meas, &sensors, &init, 50, 1e-6).and_then(|r| {
                        if r.converged && r.estimate.is_finite() {
                            let cost =
                                crate::measurement::ml_cost(&meas, &r.estimate, &sensors).ok();
                            Ok((r.estimate, cost))
                        } else {
                            Err(Error::EstimationFailure {
                                reason: r
                                    .failure_reason
                                    .unwrap_or_else(|| "did not converge".into()),
                            })
                        }
                    })
                }
            };
            let runtime_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok((estimate, cost)) if estimate.is_finite() => TrialRecord {
                    cell,
                    sigma2,
                    sensor_count,
                    trial,
                    estimator,
                    failed: false,
                    position_error: Some(estimate.position_error(&source)),
                    velocity_error: Some(estimate.velocity_error(&source)),
                    ml_cost: cost,
                    runtime_s,
                },
                _ => TrialRecord {
                    cell,
                    sigma2,
                    sensor_count,
                    trial,
                    estimator,
                    failed: true,
                    position_error: None,
                    velocity_error: None,
                    ml_cost: None,
                    runtime_s,
                },
            }
        })
        .collect()
}

/// Sensor centroid at rest; the fallback initializer for the iterative baseline.
pub fn centroid_state(sensors: &SensorArray) -> SourceState {
    let n = sensors.dim();
    let mut c = DVector::zeros(n);
    for p in sensors.positions() {
        c += p;
    }
    c /= sensors.sensor_count() as f64;
    SourceState::new(c, DVector::zeros(n))
}

/// Which error field a statistic is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorField {
    Position,
    Velocity,
}

impl ErrorField {
    fn of(&self, record: &TrialRecord) -> Option<f64> {
        match self {
            ErrorField::Position => record.position_error,
            ErrorField::Velocity => record.velocity_error,
        }
    }
}

/// RMSE over the non-failed records plus the failure bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseSummary {
    pub rmse: f64,
    pub failure_fraction: f64,
    pub used: usize,
    pub total: usize,
}

/// Root mean square of one error field over non-failed records.
///
/// The caller passes records already filtered to one estimator and cell;
/// failed trials are excluded from the mean but counted in
/// `failure_fraction`. Errors out when every record failed.
pub fn rmse(records: &[&TrialRecord], field: ErrorField) -> Result<RmseSummary> {
    let total = records.len();
    let mut sum = 0.0;
    let mut used = 0usize;
    for r in records {
        if r.failed {
            continue;
        }
        let Some(e) = field.of(r) else { continue };
        sum += e * e;
        used += 1;
    }
    if used == 0 {
        return Err(Error::UndefinedStatistic);
    }
    Ok(RmseSummary {
        rmse: (sum / used as f64).sqrt(),
        failure_fraction: (total - used) as f64 / total as f64,
        used,
        total,
    })
}

/// Empirical CDF curve with its 95th percentile.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    /// `(error, fraction of samples <= error)`, sorted by error.
    pub points: Vec<(f64, f64)>,
    pub p95: f64,
}

impl EmpiricalCdf {
    pub fn value_at(&self, x: f64) -> f64 {
        let count = self.points.iter().take_while(|(e, _)| *e <= x).count();
        count as f64 / self.points.len() as f64
    }
}

/// Empirical CDF of one error field over the non-failed records.
pub fn empirical_cdf(records: &[&TrialRecord], field: ErrorField) -> Result<EmpiricalCdf> {
    let mut values: Vec<f64> = records
        .iter()
        .filter(|r| !r.failed)
        .filter_map(|r| field.of(r))
        .collect();
    if values.is_empty() {
        return Err(Error::UndefinedStatistic);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let points = values
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, (i + 1) as f64 / n as f64))
        .collect();
    let p95 = percentile(&values, 0.95);
    Ok(EmpiricalCdf { points, p95 })
}

/// Linear-interpolation percentile of an ascending-sorted slice, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let q = q.clamp(0.0, 1.0);
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = rank - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// The noise covariance the harness builds for a cell.
pub fn cell_covariance(sensor_count: usize, sigma2: f64) -> Result<nalgebra::DMatrix<f64>> {
    let spec = NoiseSpec::uniform(sigma2)?;
    Ok(build_covariance(sensor_count - 1, &spec))
}
