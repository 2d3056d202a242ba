//! Two-stage closed-form TDOA/FDOA estimator for a moving source.
//!
//! Stage 1 stacks the squared-range and range-rate pseudo-linear equations,
//! writes the WLS solution as an affine function of the nuisance pair
//! `phi = [v, v_dot]` (range and range rate to the reference sensor), and
//! closes the system with the two quadratic constraints `v^2 = ||u - s_0||^2`
//! and `v v_dot = (u_dot - s_dot_0)^T (u - s_0)`. Resultant elimination turns
//! those into a quartic in `v`; every admissible root yields one candidate
//! state, and the maximum-likelihood cost picks the winner. The weighting
//! matrix starts at `Q^-1` and is rebuilt once from the first-pass estimate.
//!
//! Stage 2 solves a small linear system for the residual error of the stage-1
//! estimate and subtracts it. The pipeline needs only `M = N` measurement
//! pairs (`N + 1` sensors in `N` dimensions).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{SensorArray, SourceState, COINCIDENCE_THRESHOLD};
use crate::linalg::{symmetrize, SpdSolver, CONDITION_LIMIT};
use crate::measurement::{ml_cost, MeasurementSet};
use crate::polyelim::{
    quadratic_coeffs, real_positive_roots, recover_vdot_candidates, sylvester_quartic,
    NuisancePair, QuarticPoly,
};

/// Stage-1 pseudo-linear system snapshot.
///
/// `h1 - G1 theta + D1 phi = B1 dm` with the block structure
/// `G1 = [[G, 0], [G_dot, G]]`, `D1 = [[2r, 0], [2r_dot, 2r]]`,
/// `B1 = [[B, 0], [B_dot, B]]`; `W1` is the WLS weight. The first pass uses
/// `B1 = I`, `W1 = Q^-1`.
#[derive(Debug, Clone)]
pub struct Stage1System {
    pub h1: DVector<f64>,
    pub g1: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub w1: DMatrix<f64>,
}

/// One stage-1 candidate: a nuisance pair and the state it maps to.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub nuisance: NuisancePair,
    pub state: SourceState,
    pub ml_cost: f64,
}

/// Per-run diagnostics carried on [`EstimationResult`].
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Quartic coefficients from the final weight pass, degree-4 first.
    pub quartic: [f64; 5],
    /// Admissible (real, positive) quartic root count.
    pub root_count: usize,
    /// Weight passes actually performed (1 = no reweighting).
    pub weight_passes: usize,
    /// A later weight pass failed and the previous pass was kept.
    pub weight_fallback: bool,
    /// Condition number of the stage-1 normal matrix (final pass).
    pub stage1_condition: f64,
    /// Condition number of the stage-2 normal matrix, if assembled.
    pub stage2_condition: f64,
    /// Stage 2 was skipped (singular or degenerate at the stage-1 estimate).
    pub refinement_skipped: bool,
}

/// Output of the full pipeline.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Stage-1 estimate (best candidate by ML cost).
    pub stage1_estimate: SourceState,
    /// Stage-2 refined estimate; equals `stage1_estimate - delta`.
    pub refined_estimate: SourceState,
    /// Stage-2 error estimate for the stacked state.
    pub delta: DVector<f64>,
    /// All candidates with their ML costs, sorted by range.
    pub candidates: Vec<Candidate>,
    pub diagnostics: Diagnostics,
}

/// Pipeline options.
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    /// Stage-1 weight passes, 1..=5; pass 1 uses `W1 = Q^-1`.
    pub weight_iterations: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            weight_iterations: 2,
        }
    }
}

/// Builds the stage-1 system with the initial weight `W1 = Q^-1`.
pub fn stage1_system(meas: &MeasurementSet, sensors: &SensorArray) -> Result<Stage1System> {
    let m = sensors.measurement_count();
    let n = sensors.dim();
    if meas.len() != m {
        return Err(Error::InvalidInput(format!(
            "{} measurements for {} sensor pairs",
            meas.len(),
            m
        )));
    }

    let s0 = sensors.reference_position();
    let sd0 = sensors.reference_velocity();
    let r = meas.tdoa();
    let rd = meas.fdoa();

    let mut h1 = DVector::zeros(2 * m);
    let mut g1 = DMatrix::zeros(2 * m, 2 * n);
    let mut d1 = DMatrix::zeros(2 * m, 2);
    for i in 1..=m {
        let si = sensors.position(i);
        let sdi = sensors.velocity(i);
        let row = i - 1;
        h1[row] = r[row] * r[row] + s0.norm_squared() - si.norm_squared();
        h1[m + row] = 2.0 * r[row] * rd[row] + 2.0 * sd0.dot(s0) - 2.0 * sdi.dot(si);
        for j in 0..n {
            g1[(row, j)] = 2.0 * (s0[j] - si[j]);
            g1[(m + row, j)] = 2.0 * (sd0[j] - sdi[j]);
            g1[(m + row, n + j)] = 2.0 * (s0[j] - si[j]);
        }
        d1[(row, 0)] = 2.0 * r[row];
        d1[(m + row, 0)] = 2.0 * rd[row];
        d1[(m + row, 1)] = 2.0 * r[row];
    }

    let condition = crate::linalg::condition_2(&g1);
    if condition > CONDITION_LIMIT {
        return Err(Error::GeometryRank { condition });
    }

    let w1 = SpdSolver::new(meas.covariance())
        .ok_or(Error::CovarianceFactorization)?
        .inverse();
    Ok(Stage1System {
        h1,
        g1,
        d1,
        b1: DMatrix::identity(2 * m, 2 * m),
        w1,
    })
}

pub(crate) struct Stage1Detail {
    pub candidates: Vec<(NuisancePair, SourceState)>,
    pub quartic: QuarticPoly,
    pub condition: f64,
}

/// Affine reduction of the stage-1 WLS: `theta(phi) = s0_stack + b_stack -
/// a_stack * phi`, i.e. `u - s_0 = b - A phi` and its velocity analog.
pub(crate) struct Stage1Reduction {
    pub b_stack: DVector<f64>,
    pub a_stack: DMatrix<f64>,
    pub s0_stack: DVector<f64>,
    pub condition: f64,
}

pub(crate) fn stage1_reduction(
    sys: &Stage1System,
    sensors: &SensorArray,
) -> Result<Stage1Reduction> {
    let n = sensors.dim();
    let gtw = sys.g1.transpose() * &sys.w1;
    let normal = symmetrize(&(&gtw * &sys.g1));
    let solver = SpdSolver::new(&normal).ok_or(Error::GeometryRank {
        condition: f64::INFINITY,
    })?;
    if solver.condition > CONDITION_LIMIT {
        return Err(Error::GeometryRank {
            condition: solver.condition,
        });
    }
    let mut s0_stack = DVector::zeros(2 * n);
    s0_stack.rows_mut(0, n).copy_from(sensors.reference_position());
    s0_stack.rows_mut(n, n).copy_from(sensors.reference_velocity());
    let b_stack = solver.solve_vec(&(&gtw * &sys.h1)) - &s0_stack;
    let a_stack = -solver.solve_mat(&(&gtw * &sys.d1));
    Ok(Stage1Reduction {
        b_stack,
        a_stack,
        s0_stack,
        condition: solver.condition,
    })
}

pub(crate) fn stage1_solve_detail(
    sys: &Stage1System,
    sensors: &SensorArray,
) -> Result<Stage1Detail> {
    let m = sensors.measurement_count();
    let n = sensors.dim();
    let reduction = stage1_reduction(sys, sensors)?;
    let Stage1Reduction {
        b_stack,
        a_stack,
        s0_stack,
        condition,
    } = reduction;

    let a = a_stack.rows(0, n).into_owned();
    let adot = a_stack.rows(n, n).into_owned();
    let b = b_stack.rows(0, n).into_owned();
    let bdot = b_stack.rows(n, n).into_owned();

    let quad = quadratic_coeffs(&a, &adot, &b, &bdot);
    let quartic = sylvester_quartic(&quad)?;

    let mut h_scale: f64 = 0.0;
    for i in 0..m {
        h_scale = h_scale.max(sys.h1[i].abs());
    }
    let root_scale = if h_scale.is_finite() && h_scale > 0.0 {
        h_scale.sqrt()
    } else {
        1.0
    };

    let roots = real_positive_roots(&quartic, root_scale);
    if roots.is_empty() {
        return Err(Error::EstimationFailure {
            reason: "quartic has no admissible (real, positive) root".into(),
        });
    }

    let mut candidates = Vec::with_capacity(roots.len());
    for v in roots {
        let branches = recover_vdot_candidates(&quad, v);
        let Some(&primary) = branches.first() else { continue };
        // an exact quartic root admits an exact common range rate; when the
        // primary branch reproduces it the alternatives are redundant, and
        // only near-coalescing roots need the full pool for ML arbitration
        let keep: Vec<f64> = if quad.is_common_root(v, primary, 1e-6) {
            vec![primary]
        } else {
            branches
        };
        for vdot in keep {
            let phi = DVector::from_row_slice(&[v, vdot]);
            let theta = &s0_stack + &b_stack - &a_stack * phi;
            if theta.iter().any(|x| !x.is_finite()) {
                continue;
            }
            candidates.push((
                NuisancePair::new(v, vdot)?,
                SourceState::from_theta(&theta, n),
            ));
        }
    }
    if candidates.is_empty() {
        return Err(Error::EstimationFailure {
            reason: "no quartic root yields a recoverable range rate".into(),
        });
    }
    Ok(Stage1Detail {
        candidates,
        quartic,
        condition,
    })
}

/// Solves the stage-1 system: eliminates the nuisance pair, collects every
/// admissible `(v, v_dot)` root, and maps each back to a candidate state.
pub fn stage1_solve(
    sys: &Stage1System,
    _meas: &MeasurementSet,
    sensors: &SensorArray,
) -> Result<Vec<(NuisancePair, SourceState)>> {
    Ok(stage1_solve_detail(sys, sensors)?.candidates)
}

/// Diagonals of the noise-scaling blocks `B` and `B_dot` at a state:
/// `B_ii = 2 ||u - s_i||`, `B_dot_ii = 2 (u_dot - s_dot_i)^T (u - s_i) / ||u - s_i||`.
pub(crate) fn range_scaling_blocks(
    state: &SourceState,
    sensors: &SensorArray,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = sensors.measurement_count();
    let mut b = DVector::zeros(m);
    let mut bdot = DVector::zeros(m);
    for i in 1..=m {
        let d = &state.position - sensors.position(i);
        let range = d.norm();
        if range <= COINCIDENCE_THRESHOLD {
            return Err(Error::DegenerateGeometry {
                index: i,
                separation: range,
            });
        }
        let vd = &state.velocity - sensors.velocity(i);
        b[i - 1] = 2.0 * range;
        bdot[i - 1] = 2.0 * d.dot(&vd) / range;
    }
    Ok((b, bdot))
}

/// Assembles `B_pair = [[B, 0], [B_dot, B]]` and returns `(B_pair Q B_pair^T)^-1`.
pub(crate) fn pair_weight(
    b: &DVector<f64>,
    bdot: &DVector<f64>,
    covariance: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let m = b.len();
    let mut b_pair = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        b_pair[(i, i)] = b[i];
        b_pair[(m + i, i)] = bdot[i];
        b_pair[(m + i, m + i)] = b[i];
    }
    let prod = symmetrize(&(&b_pair * covariance * b_pair.transpose()));
    let w = SpdSolver::new(&prod)?.inverse();
    Some((b_pair, w))
}

pub(crate) struct IterateDetail {
    pub sys: Stage1System,
    pub detail: Stage1Detail,
    pub weight_fallback: bool,
    pub passes: usize,
}

pub(crate) fn stage1_iterate_detail(
    meas: &MeasurementSet,
    sensors: &SensorArray,
    iterations: usize,
) -> Result<IterateDetail> {
    if !(1..=5).contains(&iterations) {
        return Err(Error::InvalidInput(format!(
            "weight iterations must be in 1..=5, got {iterations}"
        )));
    }
    let mut sys = stage1_system(meas, sensors)?;
    let mut detail = stage1_solve_detail(&sys, sensors)?;
    let mut weight_fallback = false;
    let mut passes = 1;

    for _ in 2..=iterations {
        let (best, best_cost) = match rank_candidates(&detail.candidates, meas, sensors) {
            Ok((ranked, best_idx)) => (
                ranked[best_idx].state.clone(),
                ranked[best_idx].ml_cost,
            ),
            Err(_) => {
                weight_fallback = true;
                break;
            }
        };
        let (b, bdot) = match range_scaling_blocks(&best, sensors) {
            Ok(x) => x,
            Err(_) => {
                weight_fallback = true;
                break;
            }
        };
        let Some((b_pair, w)) = pair_weight(&b, &bdot, meas.covariance()) else {
            weight_fallback = true;
            break;
        };
        let candidate_sys = Stage1System {
            b1: b_pair,
            w1: w,
            ..sys.clone()
        };
        match stage1_solve_detail(&candidate_sys, sensors) {
            Ok(d) => {
                // a reweighted pass can lose the good root entirely under
                // heavy noise; keep it only if the ML cost does not worsen
                let improved = match rank_candidates(&d.candidates, meas, sensors) {
                    Ok((ranked, best_idx)) => {
                        ranked[best_idx].ml_cost <= best_cost + 1e-9 * (1.0 + best_cost)
                    }
                    Err(_) => false,
                };
                if improved {
                    sys = candidate_sys;
                    detail = d;
                    passes += 1;
                } else {
                    weight_fallback = true;
                    break;
                }
            }
            Err(_) => {
                weight_fallback = true;
                break;
            }
        }
    }

    Ok(IterateDetail {
        sys,
        detail,
        weight_fallback,
        passes,
    })
}

/// Runs stage 1 with Remark-2 style weight refinement.
///
/// Pass 1 uses `W1 = Q^-1`; each later pass rebuilds `B1` from the current
/// best candidate and `W1 = (B1 Q B1^T)^-1`, then re-solves. If a later pass
/// fails, the previous pass's output is kept.
pub fn stage1_iterate_weight(
    meas: &MeasurementSet,
    sensors: &SensorArray,
    iterations: usize,
) -> Result<(Stage1System, Vec<(NuisancePair, SourceState)>)> {
    let out = stage1_iterate_detail(meas, sensors, iterations)?;
    Ok((out.sys, out.detail.candidates))
}

pub(crate) fn rank_candidates(
    candidates: &[(NuisancePair, SourceState)],
    meas: &MeasurementSet,
    sensors: &SensorArray,
) -> Result<(Vec<Candidate>, usize)> {
    if candidates.is_empty() {
        return Err(Error::EstimationFailure {
            reason: "no candidates to select from".into(),
        });
    }
    let mut ranked = Vec::with_capacity(candidates.len());
    for (nuisance, state) in candidates {
        let cost = match ml_cost(meas, state, sensors) {
            Ok(c) if c.is_finite() => c,
            _ => continue,
        };
        ranked.push(Candidate {
            nuisance: *nuisance,
            state: state.clone(),
            ml_cost: cost,
        });
    }
    if ranked.is_empty() {
        return Err(Error::EstimationFailure {
            reason: "every candidate is degenerate for the ML cost".into(),
        });
    }
    // candidates arrive sorted by v, so on ties the smaller range wins
    let mut best = 0;
    for i in 1..ranked.len() {
        let (ci, cb) = (ranked[i].ml_cost, ranked[best].ml_cost);
        if ci < cb && (cb - ci) > 1e-12 * cb.max(ci) {
            best = i;
        }
    }
    Ok((ranked, best))
}

/// Picks the candidate with the smallest ML cost (ties: smaller range).
pub fn select_candidate(
    candidates: &[(NuisancePair, SourceState)],
    meas: &MeasurementSet,
    sensors: &SensorArray,
) -> Result<SourceState> {
    let (ranked, best) = rank_candidates(candidates, meas, sensors)?;
    Ok(ranked[best].state.clone())
}

/// Stage-2 outcome; when `skipped` is set the refinement system was singular
/// or degenerate and `refined` simply equals the stage-1 estimate.
#[derive(Debug, Clone)]
pub struct Stage2Refinement {
    pub delta: DVector<f64>,
    pub refined: SourceState,
    pub skipped: bool,
    pub condition: f64,
}

/// Regressand/regressor blocks of the stage-2 error system at `theta`:
/// returns `(d, d_dot, F, F_dot)` for the given measured `r`, `r_dot`.
pub(crate) fn stage2_blocks(
    theta: &SourceState,
    sensors: &SensorArray,
    r: &DVector<f64>,
    rd: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let m = sensors.measurement_count();
    let n = sensors.dim();
    let s0 = sensors.reference_position();
    let sd0 = sensors.reference_velocity();
    let u = &theta.position;
    let ud = &theta.velocity;

    let d0 = u - s0;
    let v = d0.norm();
    if v <= COINCIDENCE_THRESHOLD {
        return Err(Error::DegenerateGeometry {
            index: 0,
            separation: v,
        });
    }
    let rho = &d0 / v;
    // projection of the relative velocity orthogonal to the line of sight
    let vd0 = ud - sd0;
    let rho_dot = (&vd0 - &rho * rho.dot(&vd0)) / v;

    let mut d = DVector::zeros(m);
    let mut ddot = DVector::zeros(m);
    let mut f = DMatrix::zeros(m, n);
    let mut fdot = DMatrix::zeros(m, n);
    for i in 1..=m {
        let si = sensors.position(i);
        let sdi = sensors.velocity(i);
        let row = i - 1;
        d[row] = r[row] * r[row] + s0.norm_squared() - si.norm_squared()
            + 2.0 * (si - s0).dot(u)
            + 2.0 * r[row] * v;
        ddot[row] = 2.0 * rd[row] * r[row] + 2.0 * sd0.dot(s0) - 2.0 * sdi.dot(si)
            + 2.0 * (sdi - sd0).dot(u)
            + 2.0 * (si - s0).dot(ud)
            + 2.0 * rd[row] * v
            + 2.0 * r[row] * rho.dot(&vd0);
        for j in 0..n {
            f[(row, j)] = 2.0 * (r[row] * rho[j] + si[j] - s0[j]);
            fdot[(row, j)] = 2.0 * (rd[row] * rho[j] + r[row] * rho_dot[j] + sdi[j] - sd0[j]);
        }
    }
    Ok((d, ddot, f, fdot))
}

/// Stage-2 linear refinement: estimates the stage-1 error and subtracts it.
pub fn stage2_refine(
    theta_hat: &SourceState,
    meas: &MeasurementSet,
    sensors: &SensorArray,
) -> Result<Stage2Refinement> {
    if !theta_hat.is_finite() {
        return Err(Error::InvalidInput("stage-1 estimate is not finite".into()));
    }
    if theta_hat.dim() != sensors.dim() {
        return Err(Error::InvalidInput(
            "estimate dimension does not match sensors".into(),
        ));
    }
    let n = sensors.dim();
    let m = sensors.measurement_count();
    let skip = |condition: f64| Stage2Refinement {
        delta: DVector::zeros(2 * n),
        refined: theta_hat.clone(),
        skipped: true,
        condition,
    };

    let blocks = stage2_blocks(theta_hat, sensors, meas.tdoa(), meas.fdoa());
    let (d, ddot, f, fdot) = match blocks {
        Ok(x) => x,
        Err(_) => return Ok(skip(f64::INFINITY)),
    };
    let Ok((b, bdot)) = range_scaling_blocks(theta_hat, sensors) else {
        return Ok(skip(f64::INFINITY));
    };
    let Some((_, w2)) = pair_weight(&b, &bdot, meas.covariance()) else {
        return Ok(skip(f64::INFINITY));
    };

    let mut g2 = DMatrix::zeros(2 * m, 2 * n);
    g2.view_mut((0, 0), (m, n)).copy_from(&f);
    g2.view_mut((m, 0), (m, n)).copy_from(&fdot);
    g2.view_mut((m, n), (m, n)).copy_from(&f);
    let mut h2 = DVector::zeros(2 * m);
    h2.rows_mut(0, m).copy_from(&d);
    h2.rows_mut(m, m).copy_from(&ddot);

    let gtw = g2.transpose() * &w2;
    let normal = symmetrize(&(&gtw * &g2));
    let Some(solver) = SpdSolver::new(&normal) else {
        return Ok(skip(f64::INFINITY));
    };
    if solver.condition > CONDITION_LIMIT {
        return Ok(skip(solver.condition));
    }
    let delta = solver.solve_vec(&(&gtw * &h2));
    let refined = SourceState::from_theta(&(theta_hat.theta() - &delta), n);
    Ok(Stage2Refinement {
        delta,
        refined,
        skipped: false,
        condition: solver.condition,
    })
}

/// Full pipeline: weighted stage 1, ML candidate selection, stage-2 refinement.
pub fn clear_estimate(
    meas: &MeasurementSet,
    sensors: &SensorArray,
    options: &EstimateOptions,
) -> Result<EstimationResult> {
    let iter = stage1_iterate_detail(meas, sensors, options.weight_iterations)?;
    let (candidates, best_idx) = rank_candidates(&iter.detail.candidates, meas, sensors)?;
    let stage1_estimate = candidates[best_idx].state.clone();
    let stage1_cost = candidates[best_idx].ml_cost;

    let mut refinement = stage2_refine(&stage1_estimate, meas, sensors)?;
    if !refinement.refined.is_finite() {
        return Err(Error::EstimationFailure {
            reason: "refined estimate is not finite".into(),
        });
    }
    if !refinement.skipped {
        // the correction is only trustworthy inside the linearization
        // region; when it worsens the ML cost, keep the stage-1 estimate
        let refined_cost = ml_cost(meas, &refinement.refined, sensors)
            .ok()
            .filter(|c| c.is_finite());
        let acceptable = refined_cost
            .map(|c| c <= stage1_cost + 1e-9 * (1.0 + stage1_cost))
            .unwrap_or(false);
        if !acceptable {
            refinement.refined = stage1_estimate.clone();
            refinement.delta.fill(0.0);
            refinement.skipped = true;
        }
    }

    Ok(EstimationResult {
        stage1_estimate,
        refined_estimate: refinement.refined,
        delta: refinement.delta,
        candidates,
        diagnostics: Diagnostics {
            quartic: iter.detail.quartic.p,
            root_count: iter.detail.candidates.len(),
            weight_passes: iter.passes,
            weight_fallback: iter.weight_fallback,
            stage1_condition: iter.detail.condition,
            stage2_condition: refinement.condition,
            refinement_skipped: refinement.skipped,
        },
    })
}
