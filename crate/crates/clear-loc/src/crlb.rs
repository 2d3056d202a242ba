//! Cramer-Rao lower bound, predicted estimator covariance, and the
//! small-noise validity check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{pair_weight, range_scaling_blocks, stage2_blocks};
use crate::geometry::{SensorArray, SourceState, COINCIDENCE_THRESHOLD};
use crate::linalg::{symmetrize, SpdSolver, CONDITION_LIMIT};
use crate::measurement::{true_fdoa, true_tdoa};

/// Outcome of the small-noise validity check.
///
/// Margins are the ratios `0.01 * min_range / (3 sigma)` per block; a margin
/// of at least 1 means the block passes, and a zero-noise block reports an
/// infinite margin.
#[derive(Debug, Clone, Copy)]
pub struct SmallNoiseReport {
    pub ok: bool,
    pub tdoa_margin: f64,
    pub fdoa_margin: f64,
}

/// CRLB bundle for one geometry and noise level.
#[derive(Debug, Clone)]
pub struct CrlbReport {
    /// `(J^T Q^-1 J)^-1`, symmetrized, `2N x 2N`.
    pub crlb: DMatrix<f64>,
    /// Predicted covariance of the two-stage estimator at the same state.
    pub predicted_cov: DMatrix<f64>,
    /// `sqrt(trace)` of the position block of `crlb` (meters).
    pub position_rmse_bound: f64,
    /// `sqrt(trace)` of the velocity block of `crlb` (meters/second).
    pub velocity_rmse_bound: f64,
    pub small_noise: SmallNoiseReport,
}

fn unit_vector(from: &DVector<f64>, to: &DVector<f64>, index: usize) -> Result<DVector<f64>> {
    let d = from - to;
    let range = d.norm();
    if range <= COINCIDENCE_THRESHOLD {
        return Err(Error::DegenerateGeometry {
            index,
            separation: range,
        });
    }
    Ok(d / range)
}

/// Jacobian of the stacked measurement vector `[r; r_dot]` with respect to
/// the stacked state `[u; u_dot]`, block form `[[C, 0], [C_dot, C]]` where
/// row `i` of `C` is the unit-vector difference toward sensor `i` minus the
/// reference, and `C_dot` holds the corresponding line-of-sight rates.
pub fn measurement_jacobian(theta: &SourceState, sensors: &SensorArray) -> Result<DMatrix<f64>> {
    let m = sensors.measurement_count();
    let n = sensors.dim();
    if theta.dim() != n {
        return Err(Error::InvalidInput(
            "state dimension does not match sensors".into(),
        ));
    }
    let row_pair = |i: usize| -> Result<(DVector<f64>, DVector<f64>)> {
        let rho = unit_vector(&theta.position, sensors.position(i), i)?;
        let range = (&theta.position - sensors.position(i)).norm();
        let vd = &theta.velocity - sensors.velocity(i);
        let rho_dot = (&vd - &rho * rho.dot(&vd)) / range;
        Ok((rho, rho_dot))
    };
    let (rho0, rho0_dot) = row_pair(0)?;
    let mut jac = DMatrix::zeros(2 * m, 2 * n);
    for i in 1..=m {
        let (rho, rho_dot) = row_pair(i)?;
        let c = rho - &rho0;
        let cdot = rho_dot - &rho0_dot;
        for j in 0..n {
            jac[(i - 1, j)] = c[j];
            jac[(m + i - 1, j)] = cdot[j];
            jac[(m + i - 1, n + j)] = c[j];
        }
    }
    Ok(jac)
}

/// `CRLB(theta) = (J^T Q^-1 J)^-1`, symmetrized.
pub fn crlb(
    theta: &SourceState,
    sensors: &SensorArray,
    covariance: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let jac = measurement_jacobian(theta, sensors)?;
    let qinv = SpdSolver::new(covariance).ok_or(Error::CovarianceFactorization)?;
    let fisher = symmetrize(&(jac.transpose() * qinv.solve_mat(&jac)));
    let solver = SpdSolver::new(&fisher).ok_or(Error::UnobservableGeometry)?;
    if solver.condition > CONDITION_LIMIT {
        return Err(Error::UnobservableGeometry);
    }
    Ok(solver.inverse())
}

/// Predicted covariance of the two-stage estimator, `(G2^T W2 G2)^-1`,
/// evaluated at `theta` with noise-free measurement surrogates.
pub fn predicted_cov(
    theta: &SourceState,
    sensors: &SensorArray,
    covariance: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = sensors.measurement_count();
    let n = sensors.dim();
    let r = true_tdoa(theta, sensors)?;
    let rd = true_fdoa(theta, sensors)?;
    let (_, _, f, fdot) = stage2_blocks(theta, sensors, &r, &rd)?;
    let (b, bdot) = range_scaling_blocks(theta, sensors)?;
    let (_, w2) = pair_weight(&b, &bdot, covariance).ok_or(Error::CovarianceFactorization)?;

    let mut g2 = DMatrix::zeros(2 * m, 2 * n);
    g2.view_mut((0, 0), (m, n)).copy_from(&f);
    g2.view_mut((m, 0), (m, n)).copy_from(&fdot);
    g2.view_mut((m, n), (m, n)).copy_from(&f);
    let normal = symmetrize(&(g2.transpose() * w2 * &g2));
    let solver = SpdSolver::new(&normal).ok_or(Error::UnobservableGeometry)?;
    if solver.condition > CONDITION_LIMIT {
        return Err(Error::UnobservableGeometry);
    }
    Ok(solver.inverse())
}

/// Checks `3 sigma < 1%` of the smallest source-sensor range, per block.
pub fn small_noise_check(
    theta: &SourceState,
    sensors: &SensorArray,
    covariance: &DMatrix<f64>,
) -> Result<SmallNoiseReport> {
    sensors.check_distinct(&theta.position)?;
    let m = sensors.measurement_count();
    if covariance.nrows() != 2 * m {
        return Err(Error::InvalidInput(format!(
            "covariance must be {0}x{0}",
            2 * m
        )));
    }
    let min_range = sensors.min_range(&theta.position);
    let margin = |offset: usize| {
        let max_var = (0..m)
            .map(|i| covariance[(offset + i, offset + i)])
            .fold(0.0_f64, f64::max);
        if max_var <= 0.0 {
            f64::INFINITY
        } else {
            0.01 * min_range / (3.0 * max_var.sqrt())
        }
    };
    let tdoa_margin = margin(0);
    let fdoa_margin = margin(m);
    Ok(SmallNoiseReport {
        ok: tdoa_margin > 1.0 && fdoa_margin > 1.0,
        tdoa_margin,
        fdoa_margin,
    })
}

/// Assembles the full report: CRLB, predicted covariance, RMSE bounds, and
/// the small-noise check.
pub fn crlb_report(
    theta: &SourceState,
    sensors: &SensorArray,
    covariance: &DMatrix<f64>,
) -> Result<CrlbReport> {
    let n = sensors.dim();
    let bound = crlb(theta, sensors, covariance)?;
    let predicted = predicted_cov(theta, sensors, covariance)?;
    let position_rmse_bound = bound.view((0, 0), (n, n)).trace().sqrt();
    let velocity_rmse_bound = bound.view((n, n), (n, n)).trace().sqrt();
    let small_noise = small_noise_check(theta, sensors, covariance)?;
    Ok(CrlbReport {
        crlb: bound,
        predicted_cov: predicted,
        position_rmse_bound,
        velocity_rmse_bound,
        small_noise,
    })
}
