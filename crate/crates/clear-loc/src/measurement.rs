//! Forward TDOA/FDOA model, noise covariance, sampling, and the ML cost.
//!
//! TDOA values are range differences in meters (delay times propagation
//! speed), FDOA values are range-rate differences in meters/second. All
//! differences are taken against the reference sensor 0.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{SensorArray, SourceState};
use crate::linalg::SpdSolver;

/// Noise variance scales for the TDOA and FDOA blocks.
///
/// The simulation default uses one `sigma2` for both blocks; the scales stay
/// independently configurable because the units differ (m^2 vs m^2/s^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma2_tdoa: f64,
    pub sigma2_fdoa: f64,
}

impl NoiseSpec {
    pub fn new(sigma2_tdoa: f64, sigma2_fdoa: f64) -> Result<Self> {
        if !(sigma2_tdoa.is_finite() && sigma2_fdoa.is_finite())
            || sigma2_tdoa < 0.0
            || sigma2_fdoa < 0.0
        {
            return Err(Error::InvalidInput(
                "noise variances must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            sigma2_tdoa,
            sigma2_fdoa,
        })
    }

    /// Same variance scale for both measurement types.
    pub fn uniform(sigma2: f64) -> Result<Self> {
        Self::new(sigma2, sigma2)
    }
}

/// One epoch of measurements: `M` TDOAs, `M` FDOAs, and their joint
/// covariance (block diagonal, strictly positive definite).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    tdoa: DVector<f64>,
    fdoa: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl MeasurementSet {
    /// Validates symmetry (1e-12 relative), strict positive definiteness,
    /// and the TDOA/FDOA block-diagonal structure.
    pub fn new(tdoa: DVector<f64>, fdoa: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = tdoa.len();
        if m == 0 || fdoa.len() != m {
            return Err(Error::InvalidInput(format!(
                "need matching nonempty TDOA/FDOA vectors, got {m} and {}",
                fdoa.len()
            )));
        }
        if covariance.nrows() != 2 * m || covariance.ncols() != 2 * m {
            return Err(Error::InvalidInput(format!(
                "covariance must be {0}x{0}, got {1}x{2}",
                2 * m,
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if !scale.is_finite() {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        for i in 0..2 * m {
            for j in (i + 1)..2 * m {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                if covariance[(i, m + j)].abs() > 1e-12 * scale
                    || covariance[(m + i, j)].abs() > 1e-12 * scale
                {
                    return Err(Error::InvalidInput(
                        "covariance must be block diagonal in the TDOA/FDOA blocks".into(),
                    ));
                }
            }
        }
        if SpdSolver::new(&covariance).is_none() {
            return Err(Error::CovarianceFactorization);
        }
        Ok(Self {
            tdoa,
            fdoa,
            covariance,
        })
    }

    /// Number of TDOA (equivalently FDOA) measurements.
    pub fn len(&self) -> usize {
        self.tdoa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tdoa.is_empty()
    }

    pub fn tdoa(&self) -> &DVector<f64> {
        &self.tdoa
    }

    pub fn fdoa(&self) -> &DVector<f64> {
        &self.fdoa
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Stacked measurement vector `m = [r; r_dot]`.
    pub fn stacked(&self) -> DVector<f64> {
        let m = self.len();
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&self.tdoa);
        out.rows_mut(m, m).copy_from(&self.fdoa);
        out
    }
}

/// True range differences `||u - s_i|| - ||u - s_0||`, `i = 1..M`.
pub fn true_tdoa(source: &SourceState, sensors: &SensorArray) -> Result<DVector<f64>> {
    check_dims(source, sensors)?;
    sensors.check_distinct(&source.position)?;
    let r0 = (&source.position - sensors.reference_position()).norm();
    let m = sensors.measurement_count();
    let mut out = DVector::zeros(m);
    for i in 1..=m {
        out[i - 1] = (&source.position - sensors.position(i)).norm() - r0;
    }
    Ok(out)
}

/// True range-rate differences (Doppler difference times wavelength),
/// the time derivative of [`true_tdoa`].
pub fn true_fdoa(source: &SourceState, sensors: &SensorArray) -> Result<DVector<f64>> {
    check_dims(source, sensors)?;
    sensors.check_distinct(&source.position)?;
    let rate = |i: usize| {
        let d = &source.position - sensors.position(i);
        let vd = &source.velocity - sensors.velocity(i);
        d.dot(&vd) / d.norm()
    };
    let rate0 = rate(0);
    let m = sensors.measurement_count();
    let mut out = DVector::zeros(m);
    for i in 1..=m {
        out[i - 1] = rate(i) - rate0;
    }
    Ok(out)
}

/// Stacked noise-free measurement vector `m_o(theta) = [r_o; r_dot_o]`.
pub fn true_measurements(source: &SourceState, sensors: &SensorArray) -> Result<DVector<f64>> {
    let r = true_tdoa(source, sensors)?;
    let rd = true_fdoa(source, sensors)?;
    let m = r.len();
    let mut out = DVector::zeros(2 * m);
    out.rows_mut(0, m).copy_from(&r);
    out.rows_mut(m, m).copy_from(&rd);
    Ok(out)
}

/// Joint covariance `blkdiag(sigma2_t (1 + I)/2, sigma2_f (1 + I)/2)`.
///
/// `1` is the all-ones matrix: every pair of differences shares the
/// reference-sensor noise, which puts `sigma2/2` off the diagonal.
pub fn build_covariance(m_count: usize, spec: &NoiseSpec) -> DMatrix<f64> {
    assert!(m_count >= 1, "need at least one measurement");
    let mut q = DMatrix::zeros(2 * m_count, 2 * m_count);
    for (block, sigma2) in [(0, spec.sigma2_tdoa), (m_count, spec.sigma2_fdoa)] {
        for i in 0..m_count {
            for j in 0..m_count {
                let base = if i == j { 1.0 } else { 0.5 };
                q[(block + i, block + j)] = sigma2 * base;
            }
        }
    }
    q
}

/// Draws a noisy measurement set `m = m_o + L z`, `z ~ N(0, I)`, where `L` is
/// the per-block Cholesky factor of the covariance from [`build_covariance`].
///
/// The draw consumes exactly `2M` standard normals in TDOA-then-FDOA order,
/// so a fixed seed reproduces the same set regardless of the noise scales.
/// A block with zero variance contributes no noise; in that case the carried
/// covariance substitutes a unit variance scale for the block so that the set
/// stays positive definite and downstream WLS/ML weighting remains defined.
pub fn sample_measurements<R: Rng + ?Sized>(
    rng: &mut R,
    source: &SourceState,
    sensors: &SensorArray,
    spec: &NoiseSpec,
) -> Result<MeasurementSet> {
    let r = true_tdoa(source, sensors)?;
    let rd = true_fdoa(source, sensors)?;
    let m = r.len();

    let mut noisy = [r, rd];
    for (block, sigma2) in [(0usize, spec.sigma2_tdoa), (1, spec.sigma2_fdoa)] {
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if sigma2 > 0.0 {
            let c = block_covariance(m, sigma2);
            let chol = c.cholesky().ok_or(Error::CovarianceFactorization)?;
            noisy[block] += chol.l() * z;
        }
    }
    let [tdoa, fdoa] = noisy;

    let carried = NoiseSpec {
        sigma2_tdoa: if spec.sigma2_tdoa > 0.0 { spec.sigma2_tdoa } else { 1.0 },
        sigma2_fdoa: if spec.sigma2_fdoa > 0.0 { spec.sigma2_fdoa } else { 1.0 },
    };
    MeasurementSet::new(tdoa, fdoa, build_covariance(m, &carried))
}

/// Maximum-likelihood cost `(m - m_o(theta))^T Q^-1 (m - m_o(theta))`.
pub fn ml_cost(meas: &MeasurementSet, theta: &SourceState, sensors: &SensorArray) -> Result<f64> {
    if meas.len() != sensors.measurement_count() {
        return Err(Error::InvalidInput(format!(
            "{} measurements for {} sensor pairs",
            meas.len(),
            sensors.measurement_count()
        )));
    }
    let residual = meas.stacked() - true_measurements(theta, sensors)?;
    let chol = meas
        .covariance()
        .clone()
        .cholesky()
        .ok_or(Error::CovarianceFactorization)?;
    Ok(residual.dot(&chol.solve(&residual)))
}

fn block_covariance(m: usize, sigma2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| sigma2 * if i == j { 1.0 } else { 0.5 })
}

fn check_dims(source: &SourceState, sensors: &SensorArray) -> Result<()> {
    if source.dim() != sensors.dim() {
        return Err(Error::InvalidInput(format!(
            "source dimension {} does not match sensor dimension {}",
            source.dim(),
            sensors.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario1() -> (SourceState, SensorArray) {
        let s = preset("scenario1").unwrap();
        (s.fixed_source().unwrap(), s.fixed_sensors().unwrap())
    }

    // Frozen from an independent norm/dot evaluation of the scenario-1
    // geometry (see the oracle test below for the generic cross-check).
    const R_S1: [f64; 2] = [619.211344706804586, 251.666876740480452];
    const RD_S1: [f64; 2] = [-26.121614028416647, 7.878385971583353];

    #[test]
    fn true_tdoa_matches_frozen_values() {
        let (source, sensors) = scenario1();
        let r = true_tdoa(&source, &sensors).unwrap();
        assert!((r[0] - R_S1[0]).abs() < 1e-9);
        assert!((r[1] - R_S1[1]).abs() < 1e-9);
    }

    #[test]
    fn true_fdoa_matches_frozen_values() {
        let (source, sensors) = scenario1();
        let rd = true_fdoa(&source, &sensors).unwrap();
        assert!((rd[0] - RD_S1[0]).abs() < 1e-9);
        assert!((rd[1] - RD_S1[1]).abs() < 1e-9);
    }

    #[test]
    fn tdoa_zero_when_source_equidistant() {
        let zero = [0.0, 0.0];
        let sensors = SensorArray::from_rows(
            &[&[-1.0, 0.0], &[1.0, 0.0], &[0.0, 5.0]],
            &[&zero, &zero, &zero],
        )
        .unwrap();
        let source = SourceState::from_slices(&[0.0, 2.0], &[1.0, 1.0]);
        let r = true_tdoa(&source, &sensors).unwrap();
        assert!(r[0].abs() < 1e-12, "equidistant source must give zero TDOA");
    }

    #[test]
    fn tdoa_matches_independent_norm_difference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for _ in 0..4 {
                rows.push((0..2).map(|_| rng.random_range(-500.0..500.0)).collect());
            }
            let vels: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..2).map(|_| rng.random_range(-50.0..50.0)).collect())
                .collect();
            let sensors = match SensorArray::new(
                rows.iter().map(|r| DVector::from_row_slice(r)).collect(),
                vels.iter().map(|r| DVector::from_row_slice(r)).collect(),
            ) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let source = SourceState::from_slices(
                &[rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)],
                &[1.0, -2.0],
            );
            if sensors.min_range(&source.position) < 1.0 {
                continue;
            }
            let r = true_tdoa(&source, &sensors).unwrap();
            for i in 1..=3 {
                // independent oracle: plain norm difference, no shared code path
                let di: f64 = source
                    .position
                    .iter()
                    .zip(sensors.position(i).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let d0: f64 = source
                    .position
                    .iter()
                    .zip(sensors.position(0).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let expect = di - d0;
                assert!((r[i - 1] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fdoa_zero_for_zero_relative_velocity() {
        let (source, sensors) = scenario1();
        let vel = DVector::from_row_slice(&[7.0, -3.0]);
        let sensors = SensorArray::new(
            sensors.positions().to_vec(),
            vec![vel.clone(); sensors.sensor_count()],
        )
        .unwrap();
        let src = SourceState::new(source.position.clone(), vel);
        let rd = true_fdoa(&src, &sensors).unwrap();
        assert!(rd.amax() < 1e-12);
    }

    #[test]
    fn fdoa_scales_linearly_with_velocities() {
        let (source, sensors) = scenario1();
        let c = 3.5;
        let scaled_sensors = SensorArray::new(
            sensors.positions().to_vec(),
            sensors.velocities().iter().map(|v| v * c).collect(),
        )
        .unwrap();
        let scaled_source = SourceState::new(source.position.clone(), &source.velocity * c);
        let rd = true_fdoa(&source, &sensors).unwrap();
        let rd_scaled = true_fdoa(&scaled_source, &scaled_sensors).unwrap();
        assert!((rd_scaled - rd * c).amax() < 1e-10);
    }

    #[test]
    fn covariance_structure_m2() {
        let q = build_covariance(2, &NoiseSpec::uniform(1.0).unwrap());
        for i in 0..4 {
            assert_eq!(q[(i, i)], 1.0);
        }
        assert_eq!(q[(0, 1)], 0.5);
        assert_eq!(q[(2, 3)], 0.5);
        assert_eq!(q[(0, 2)], 0.0);
        assert_eq!(q[(1, 3)], 0.0);
    }

    #[test]
    fn covariance_zero_spec_gives_zero_matrix() {
        let q = build_covariance(3, &NoiseSpec::uniform(0.0).unwrap());
        assert!(q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn covariance_mixed_scales() {
        let q = build_covariance(3, &NoiseSpec::new(4.0, 0.04).unwrap());
        assert_eq!(q[(0, 0)], 4.0);
        assert_eq!(q[(0, 1)], 2.0);
        assert_eq!(q[(3, 3)], 0.04);
        assert!((q[(3, 4)] - 0.02).abs() < 1e-18);
    }

    #[test]
    fn sampling_with_zero_noise_is_exact() {
        let (source, sensors) = scenario1();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let meas =
            sample_measurements(&mut rng, &source, &sensors, &NoiseSpec::uniform(0.0).unwrap())
                .unwrap();
        let r = true_tdoa(&source, &sensors).unwrap();
        assert_eq!(meas.tdoa(), &r);
        assert_eq!(meas.fdoa(), &true_fdoa(&source, &sensors).unwrap());
    }

    #[test]
    fn sampling_is_deterministic_for_fixed_seed() {
        let (source, sensors) = scenario1();
        let spec = NoiseSpec::uniform(2.0).unwrap();
        let a = sample_measurements(&mut ChaCha8Rng::seed_from_u64(42), &source, &sensors, &spec)
            .unwrap();
        let b = sample_measurements(&mut ChaCha8Rng::seed_from_u64(42), &source, &sensors, &spec)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_is_consistent_with_declared_covariance() {
        let (source, sensors) = scenario1();
        let spec = NoiseSpec::new(4.0, 0.25).unwrap();
        let truth = true_measurements(&source, &sensors).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let trials = 100_000;
        let mut mean = DVector::zeros(4);
        for _ in 0..trials {
            let m = sample_measurements(&mut rng, &source, &sensors, &spec).unwrap();
            mean += m.stacked() - &truth;
        }
        mean /= trials as f64;
        let q = build_covariance(2, &spec);
        for i in 0..4 {
            let bound = 4.0 * (q[(i, i)].sqrt() / (trials as f64).sqrt());
            assert!(
                mean[i].abs() < bound,
                "element {i}: |{}| >= {bound}",
                mean[i]
            );
        }
    }

    #[test]
    fn ml_cost_zero_at_truth_with_noiseless_measurements() {
        let (source, sensors) = scenario1();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let meas =
            sample_measurements(&mut rng, &source, &sensors, &NoiseSpec::uniform(0.0).unwrap())
                .unwrap();
        let cost = ml_cost(&meas, &source, &sensors).unwrap();
        assert!(cost.abs() < 1e-18);
    }

    #[test]
    fn ml_cost_scales_quadratically_with_residual() {
        let (source, sensors) = scenario1();
        let spec = NoiseSpec::uniform(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let meas = sample_measurements(&mut rng, &source, &sensors, &spec).unwrap();
        let truth = true_measurements(&source, &sensors).unwrap();
        let e = meas.stacked() - &truth;
        let doubled = MeasurementSet::new(
            meas.tdoa() + e.rows(0, 2),
            meas.fdoa() + e.rows(2, 2),
            meas.covariance().clone(),
        )
        .unwrap();
        let c = ml_cost(&meas, &source, &sensors).unwrap();
        let c4 = ml_cost(&doubled, &source, &sensors).unwrap();
        assert!((c4 - 4.0 * c).abs() < 1e-9 * c.max(1.0));
    }

    #[test]
    fn ml_cost_matches_independent_quadratic_form() {
        let (source, sensors) = scenario1();
        let spec = NoiseSpec::uniform(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let meas = sample_measurements(&mut rng, &source, &sensors, &spec).unwrap();
        let cost = ml_cost(&meas, &source, &sensors).unwrap();
        // independent oracle: explicit inverse through LU, no Cholesky reuse
        let e = meas.stacked() - true_measurements(&source, &sensors).unwrap();
        let qinv = meas.covariance().clone().try_inverse().unwrap();
        let oracle = (e.transpose() * qinv * &e)[(0, 0)];
        assert!((cost - oracle).abs() <= 1e-10 * oracle.abs());
    }

    #[test]
    fn degenerate_source_position_is_rejected() {
        let (_, sensors) = scenario1();
        let source = SourceState::new(
            sensors.position(1).clone(),
            DVector::from_row_slice(&[0.0, 0.0]),
        );
        assert!(matches!(
            true_tdoa(&source, &sensors),
            Err(Error::DegenerateGeometry { index: 1, .. })
        ));
        assert!(matches!(
            true_fdoa(&source, &sensors),
            Err(Error::DegenerateGeometry { index: 1, .. })
        ));
    }
}
