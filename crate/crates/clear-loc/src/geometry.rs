//! Sensor-array and source-state geometry.
//!
//! A [`SensorArray`] holds the positions and velocities of `M + 1` sensors in
//! `N`-dimensional space (`N` is 2 or 3); sensor 0 is the reference against
//! which all TDOA/FDOA differences are formed. Joint TDOA/FDOA localization
//! needs at least `M = N` measurements, i.e. `N + 1` sensors.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Points closer than this (in meters) are treated as coincident.
pub const COINCIDENCE_THRESHOLD: f64 = 1e-9;

/// Positions and velocities of `M + 1` sensors; index 0 is the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    dim: usize,
    positions: Vec<DVector<f64>>,
    velocities: Vec<DVector<f64>>,
}

impl SensorArray {
    /// Builds an array from per-sensor position and velocity vectors.
    ///
    /// Requires 2-D or 3-D vectors, at least `dim + 1` sensors, and pairwise
    /// distinct sensor positions.
    pub fn new(positions: Vec<DVector<f64>>, velocities: Vec<DVector<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("sensor array is empty".into()));
        }
        let dim = positions[0].len();
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidInput(format!(
                "spatial dimension must be 2 or 3, got {dim}"
            )));
        }
        if velocities.len() != positions.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        for (i, (p, v)) in positions.iter().zip(&velocities).enumerate() {
            if p.len() != dim || v.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "sensor {i} has mixed dimensions"
                )));
            }
            if !(p.iter().all(|x| x.is_finite()) && v.iter().all(|x| x.is_finite())) {
                return Err(Error::InvalidInput(format!("sensor {i} is not finite")));
            }
        }
        if positions.len() < dim + 1 {
            return Err(Error::InsufficientSensors {
                needed: dim + 1,
                got: positions.len(),
            });
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let sep = (&positions[i] - &positions[j]).norm();
                if sep <= COINCIDENCE_THRESHOLD {
                    return Err(Error::InvalidInput(format!(
                        "sensors {i} and {j} coincide (separation {sep:.3e} m)"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            positions,
            velocities,
        })
    }

    /// Convenience constructor from row slices `[x, y[, z]]` / `[vx, vy[, vz]]`.
    pub fn from_rows(positions: &[&[f64]], velocities: &[&[f64]]) -> Result<Self> {
        let p = positions
            .iter()
            .map(|r| DVector::from_row_slice(r))
            .collect();
        let v = velocities
            .iter()
            .map(|r| DVector::from_row_slice(r))
            .collect();
        Self::new(p, v)
    }

    /// Spatial dimension `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of sensors, `M + 1`.
    pub fn sensor_count(&self) -> usize {
        self.positions.len()
    }

    /// Number of TDOA (equivalently FDOA) measurements, `M`.
    pub fn measurement_count(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn position(&self, i: usize) -> &DVector<f64> {
        &self.positions[i]
    }

    pub fn velocity(&self, i: usize) -> &DVector<f64> {
        &self.velocities[i]
    }

    pub fn reference_position(&self) -> &DVector<f64> {
        &self.positions[0]
    }

    pub fn reference_velocity(&self) -> &DVector<f64> {
        &self.velocities[0]
    }

    pub fn positions(&self) -> &[DVector<f64>] {
        &self.positions
    }

    pub fn velocities(&self) -> &[DVector<f64>] {
        &self.velocities
    }

    /// Smallest distance from `position` to any sensor.
    pub fn min_range(&self, position: &DVector<f64>) -> f64 {
        self.positions
            .iter()
            .map(|s| (position - s).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Errors with the offending sensor index if `position` coincides with one.
    pub fn check_distinct(&self, position: &DVector<f64>) -> Result<()> {
        for (i, s) in self.positions.iter().enumerate() {
            let separation = (position - s).norm();
            if separation <= COINCIDENCE_THRESHOLD {
                return Err(Error::DegenerateGeometry {
                    index: i,
                    separation,
                });
            }
        }
        Ok(())
    }
}

/// Source position and velocity; stacked as `theta = [u; u_dot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceState {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

impl SourceState {
    pub fn new(position: DVector<f64>, velocity: DVector<f64>) -> Self {
        assert_eq!(
            position.len(),
            velocity.len(),
            "position/velocity dimension mismatch"
        );
        Self { position, velocity }
    }

    pub fn from_slices(position: &[f64], velocity: &[f64]) -> Self {
        Self::new(
            DVector::from_row_slice(position),
            DVector::from_row_slice(velocity),
        )
    }

    /// Splits a stacked `2N` state vector into position and velocity halves.
    pub fn from_theta(theta: &DVector<f64>, dim: usize) -> Self {
        assert_eq!(theta.len(), 2 * dim, "stacked state has wrong length");
        Self::new(
            theta.rows(0, dim).into_owned(),
            theta.rows(dim, dim).into_owned(),
        )
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// Stacked state vector `[u; u_dot]`.
    pub fn theta(&self) -> DVector<f64> {
        let n = self.dim();
        let mut t = DVector::zeros(2 * n);
        t.rows_mut(0, n).copy_from(&self.position);
        t.rows_mut(n, n).copy_from(&self.velocity);
        t
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite()) && self.velocity.iter().all(|x| x.is_finite())
    }

    pub fn position_error(&self, truth: &SourceState) -> f64 {
        (&self.position - &truth.position).norm()
    }

    pub fn velocity_error(&self, truth: &SourceState) -> f64 {
        (&self.velocity - &truth.velocity).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_few_sensors() {
        let err = SensorArray::from_rows(
            &[&[0.0, 0.0], &[1.0, 0.0]],
            &[&[0.0, 0.0], &[0.0, 0.0]],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSensors { needed: 3, got: 2 }
        ));
    }

    #[test]
    fn rejects_coincident_sensors() {
        let err = SensorArray::from_rows(
            &[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]],
            &[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_dimension_other_than_2_or_3() {
        let err = SensorArray::from_rows(
            &[&[0.0], &[1.0]],
            &[&[0.0], &[0.0]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn theta_round_trip() {
        let s = SourceState::from_slices(&[400.0, 200.0], &[20.0, 10.0]);
        let back = SourceState::from_theta(&s.theta(), 2);
        assert_eq!(s, back);
    }

    #[test]
    fn check_distinct_flags_coincident_source() {
        let zero = [0.0, 0.0];
        let arr = SensorArray::from_rows(
            &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[&zero, &zero, &zero],
        )
        .unwrap();
        let p = DVector::from_row_slice(&[1.0, 0.0]);
        assert!(matches!(
            arr.check_distinct(&p),
            Err(Error::DegenerateGeometry { index: 1, .. })
        ));
    }
}
