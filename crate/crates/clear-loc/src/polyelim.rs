//! Bivariate quadratic elimination for the range / range-rate nuisance pair.
//!
//! Stage 1 of the estimator reduces the localization problem to two quadratic
//! polynomials in `(v, v_dot)`, the range and range rate from the source to
//! the reference sensor. Eliminating `v_dot` through the Sylvester resultant
//! leaves a quartic in `v`; its admissible (real, positive) roots are the
//! range candidates, and back-substitution recovers the matching range rate.
//!
//! The quartic coefficients are not expanded symbolically. The 4x4 resultant
//! determinant is evaluated at five Chebyshev-spaced nodes and the degree-4
//! interpolating polynomial is recovered from the Vandermonde system, which
//! is exact up to conditioning.

use nalgebra::{DMatrix, DVector, Matrix4};

use crate::error::{Error, Result};

/// Admissible range candidates must exceed this (meters).
pub const MIN_RANGE: f64 = 1e-6;

/// Range and range rate from the source to the reference sensor,
/// `phi = [v, v_dot]` with `v > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisancePair {
    pub v: f64,
    pub vdot: f64,
}

impl NuisancePair {
    pub fn new(v: f64, vdot: f64) -> Result<Self> {
        if !(v.is_finite() && vdot.is_finite()) || v <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "nuisance pair needs finite values and v > 0, got ({v}, {vdot})"
            )));
        }
        Ok(Self { v, vdot })
    }
}

/// Coefficients of the two quadratics in `(v, v_dot)`:
///
/// `f_k = a_k v^2 + b_k v v_dot + c_k v_dot^2 + d_k v + e_k v_dot + f_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPair {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub e1: f64,
    pub f1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub d2: f64,
    pub e2: f64,
    pub f2: f64,
}

impl QuadraticPair {
    pub fn eval_f1(&self, v: f64, vdot: f64) -> f64 {
        self.a1 * v * v + self.b1 * v * vdot + self.c1 * vdot * vdot
            + self.d1 * v
            + self.e1 * vdot
            + self.f1
    }

    pub fn eval_f2(&self, v: f64, vdot: f64) -> f64 {
        self.a2 * v * v + self.b2 * v * vdot + self.c2 * vdot * vdot
            + self.d2 * v
            + self.e2 * vdot
            + self.f2
    }

    /// Sum of absolute term magnitudes of `f1`, the scale for residual checks.
    pub fn f1_term_scale(&self, v: f64, vdot: f64) -> f64 {
        (self.a1 * v * v).abs()
            + (self.b1 * v * vdot).abs()
            + (self.c1 * vdot * vdot).abs()
            + (self.d1 * v).abs()
            + (self.e1 * vdot).abs()
            + self.f1.abs()
    }

    /// Sum of absolute term magnitudes of `f2`.
    pub fn f2_term_scale(&self, v: f64, vdot: f64) -> f64 {
        (self.a2 * v * v).abs()
            + (self.b2 * v * vdot).abs()
            + (self.c2 * vdot * vdot).abs()
            + (self.d2 * v).abs()
            + (self.e2 * vdot).abs()
            + self.f2.abs()
    }

    /// True when `(v, vdot)` annihilates both polynomials to the stated
    /// relative tolerance (term-magnitude scaled).
    pub fn is_common_root(&self, v: f64, vdot: f64, tol: f64) -> bool {
        self.eval_f1(v, vdot).abs() <= tol * self.f1_term_scale(v, vdot).max(f64::MIN_POSITIVE)
            && self.eval_f2(v, vdot).abs()
                <= tol * self.f2_term_scale(v, vdot).max(f64::MIN_POSITIVE)
    }

    fn coefficients(&self) -> [[f64; 6]; 2] {
        [
            [self.a1, self.b1, self.c1, self.d1, self.e1, self.f1],
            [self.a2, self.b2, self.c2, self.d2, self.e2, self.f2],
        ]
    }
}

/// Quartic `p[0] v^4 + p[1] v^3 + p[2] v^2 + p[3] v + p[4]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticPoly {
    pub p: [f64; 5],
}

impl QuarticPoly {
    pub fn eval(&self, v: f64) -> f64 {
        self.p.iter().fold(0.0, |acc, &c| acc * v + c)
    }

    /// `|p1| |v|^4 + ... + |p5|`, the term-magnitude scale at `v`.
    pub fn eval_abs(&self, v: f64) -> f64 {
        let av = v.abs();
        self.p.iter().fold(0.0, |acc, &c| acc * av + c.abs())
    }

    pub fn eval_derivative(&self, v: f64) -> f64 {
        let [p1, p2, p3, p4, _] = self.p;
        ((4.0 * p1 * v + 3.0 * p2) * v + 2.0 * p3) * v + p4
    }
}

/// Builds the quadratic pair from the stage-1 reduction
/// `u - s_0 = b - A phi`, `u_dot - s_dot_0 = b_dot - A_dot phi`.
///
/// The first quadratic encodes `v^2 = ||u - s_0||^2`, the second
/// `v v_dot = (u_dot - s_dot_0)^T (u - s_0)`.
pub fn quadratic_coeffs(
    a: &DMatrix<f64>,
    adot: &DMatrix<f64>,
    b: &nalgebra::DVector<f64>,
    bdot: &nalgebra::DVector<f64>,
) -> QuadraticPair {
    let n = b.len();
    assert_eq!(a.nrows(), n, "A must be N x 2");
    assert_eq!(a.ncols(), 2, "A must be N x 2");
    assert_eq!(adot.nrows(), n, "A_dot must be N x 2");
    assert_eq!(adot.ncols(), 2, "A_dot must be N x 2");
    assert_eq!(bdot.len(), n, "b_dot must have length N");

    let ata = a.transpose() * a;
    let adota = adot.transpose() * a;
    QuadraticPair {
        a1: ata[(0, 0)] - 1.0,
        b1: 2.0 * ata[(0, 1)],
        c1: ata[(1, 1)],
        d1: -2.0 * b.dot(&a.column(0)),
        e1: -2.0 * b.dot(&a.column(1)),
        f1: b.dot(b),
        a2: adota[(0, 0)],
        b2: adota[(0, 1)] + adota[(1, 0)] - 1.0,
        c2: adota[(1, 1)],
        d2: -bdot.dot(&a.column(0)) - b.dot(&adot.column(0)),
        e2: -bdot.dot(&a.column(1)) - b.dot(&adot.column(1)),
        f2: bdot.dot(b),
    }
}

/// Sylvester matrix of the pair, viewed as quadratics in `v_dot`, at a fixed `v`.
pub fn sylvester_matrix(q: &QuadraticPair, v: f64) -> Matrix4<f64> {
    let beta1 = q.b1 * v + q.e1;
    let beta2 = q.b2 * v + q.e2;
    let gamma1 = (q.a1 * v + q.d1) * v + q.f1;
    let gamma2 = (q.a2 * v + q.d2) * v + q.f2;
    Matrix4::new(
        q.c1, 0.0, q.c2, 0.0, //
        beta1, q.c1, beta2, q.c2, //
        gamma1, beta1, gamma2, beta2, //
        0.0, gamma1, 0.0, gamma2,
    )
}

/// Effective degrees of the two polynomials in `v_dot` at the working scale.
///
/// The minimal-measurement configuration (`M = N`) makes the stage-1 solve
/// square, which zeroes the `v_dot` column of the position block exactly;
/// `f1` then has no `v_dot` term and the fixed 4x4 Sylvester determinant
/// vanishes identically. Detecting the true degrees keeps the resultant
/// meaningful in every configuration.
fn vdot_degrees(q: &QuadraticPair, v_scale: f64) -> (usize, usize) {
    let vs = v_scale.abs().max(1e-6);
    let ys = vs.max(1.0);
    let classify = |a: f64, b: f64, c: f64, d: f64, e: f64, f: f64| -> usize {
        let w2 = c.abs() * ys * ys;
        let w1 = (b.abs() * vs + e.abs()) * ys;
        let w0 = a.abs() * vs * vs + d.abs() * vs + f.abs();
        let total = w2 + w1 + w0;
        if total == 0.0 {
            0
        } else if w2 > 1e-12 * total {
            2
        } else if w1 > 1e-12 * total {
            1
        } else {
            0
        }
    };
    (
        classify(q.a1, q.b1, q.c1, q.d1, q.e1, q.f1),
        classify(q.a2, q.b2, q.c2, q.d2, q.e2, q.f2),
    )
}

/// Resultant of the pair with respect to `v_dot` at `v`, built for the
/// effective `v_dot` degrees, together with its magnitude scale (the
/// roundoff floor of the value is machine epsilon times the scale).
fn resultant_at(q: &QuadraticPair, v: f64, degrees: (usize, usize)) -> (f64, f64) {
    let beta1 = q.b1 * v + q.e1;
    let beta2 = q.b2 * v + q.e2;
    let gamma1 = (q.a1 * v + q.d1) * v + q.f1;
    let gamma2 = (q.a2 * v + q.d2) * v + q.f2;
    let beta1_abs = (q.b1 * v).abs() + q.e1.abs();
    let beta2_abs = (q.b2 * v).abs() + q.e2.abs();
    let gamma1_abs = (q.a1 * v * v).abs() + (q.d1 * v).abs() + q.f1.abs();
    let gamma2_abs = (q.a2 * v * v).abs() + (q.d2 * v).abs() + q.f2.abs();

    match degrees {
        (2, 2) => {
            // Bezout form of the 4x4 Sylvester determinant; grouping the
            // c-products first avoids the determinant's cancellation blowup
            // near the minimal configuration where c1, c2 are small
            let a = q.c1 * gamma2 - q.c2 * gamma1;
            let b = q.c1 * beta2 - q.c2 * beta1;
            let c = beta1 * gamma2 - beta2 * gamma1;
            let a_abs = (q.c1 * gamma2).abs() + (q.c2 * gamma1).abs();
            let b_abs = (q.c1 * beta2).abs() + (q.c2 * beta1).abs();
            let c_abs = beta1_abs * gamma2_abs + beta2_abs * gamma1_abs;
            (a * a - b * c, a.abs() * a_abs + b_abs * c_abs)
        }
        (2, 1) => (
            q.c1 * gamma2 * gamma2 - beta1 * beta2 * gamma2 + gamma1 * beta2 * beta2,
            q.c1.abs() * gamma2_abs * gamma2_abs
                + beta1_abs * beta2_abs * gamma2_abs
                + gamma1_abs * beta2_abs * beta2_abs,
        ),
        (1, 2) => (
            q.c2 * gamma1 * gamma1 - beta2 * beta1 * gamma1 + gamma2 * beta1 * beta1,
            q.c2.abs() * gamma1_abs * gamma1_abs
                + beta2_abs * beta1_abs * gamma1_abs
                + gamma2_abs * beta1_abs * beta1_abs,
        ),
        (1, 1) => (
            beta1 * gamma2 - beta2 * gamma1,
            beta1_abs * gamma2_abs + beta2_abs * gamma1_abs,
        ),
        (0, 2) => (gamma1 * gamma1, gamma1_abs * gamma1_abs),
        (0, 1) => (gamma1, gamma1_abs),
        (2, 0) => (gamma2 * gamma2, gamma2_abs * gamma2_abs),
        (1, 0) => (gamma2, gamma2_abs),
        _ => (0.0, 0.0),
    }
}

/// Resultant of the pair with respect to `v_dot`, evaluated at `v`.
///
/// Equals the 4x4 Sylvester determinant (computed in the numerically grouped
/// Bezout form) when both polynomials are genuinely quadratic in `v_dot`;
/// degree-degenerate pairs use the matching smaller elimination so the value
/// still vanishes exactly at common roots.
pub fn sylvester_det(q: &QuadraticPair, v: f64) -> f64 {
    resultant_at(q, v, vdot_degrees(q, v)).0
}

/// Magnitude scale of the resultant at `v`; the roundoff floor of
/// [`sylvester_det`] is machine epsilon times this.
pub fn sylvester_det_scale(q: &QuadraticPair, v: f64) -> f64 {
    resultant_at(q, v, vdot_degrees(q, v)).1
}

/// Hadamard bound on the determinant magnitude (product of column norms).
fn hadamard_bound(m: &Matrix4<f64>) -> f64 {
    (0..4).map(|j| m.column(j).norm()).product()
}

/// Length-scale estimate for the interpolation nodes, from the coefficient
/// balance of the two quadratics (`v ~ sqrt(f/a)` and `v ~ f/d`).
fn node_scale(q: &QuadraticPair) -> f64 {
    let mut scale: f64 = 0.0;
    for (num, den) in [(q.f1, q.a1), (q.f2, q.a2)] {
        if den != 0.0 {
            let c = (num / den).abs().sqrt();
            if c.is_finite() {
                scale = scale.max(c);
            }
        }
    }
    for (num, den) in [(q.f1, q.d1), (q.f2, q.d2)] {
        if den != 0.0 {
            let c = (num / den).abs();
            if c.is_finite() {
                scale = scale.max(c);
            }
        }
    }
    if !scale.is_finite() || scale <= 0.0 {
        1.0
    } else {
        scale.clamp(1e-6, 1e12)
    }
}

/// Extracts the quartic resultant polynomial by evaluate-and-interpolate.
///
/// Fails with [`Error::RankDeficientQuadratics`] when the two quadratics are
/// (numerically) proportional, in which case the resultant vanishes
/// identically and no isolated common root exists.
pub fn sylvester_quartic(q: &QuadraticPair) -> Result<QuarticPoly> {
    let [q1, q2] = q.coefficients();
    if q1.iter().any(|x| !x.is_finite()) || q2.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("quadratic coefficients not finite".into()));
    }
    let n1 = q1.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n2 = q2.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::RankDeficientQuadratics);
    }
    let mut max_cross: f64 = 0.0;
    for i in 0..6 {
        for j in (i + 1)..6 {
            max_cross = max_cross.max((q1[i] * q2[j] - q1[j] * q2[i]).abs());
        }
    }
    if max_cross < 1e-10 * n1 * n2 {
        return Err(Error::RankDeficientQuadratics);
    }

    // first fit at the coefficient-balance scale, then refit at the root
    // bound of that polynomial so the nodes straddle the actual roots
    let scale = node_scale(q);
    let degrees = vdot_degrees(q, scale);
    if degrees == (0, 0) {
        // neither polynomial constrains v_dot; nothing to eliminate
        return Err(Error::RankDeficientQuadratics);
    }
    let poly = fit_quartic(q, scale, degrees)?;
    match root_magnitude_bound(&poly, scale) {
        Some(bound) => fit_quartic(q, bound.clamp(1e-6, 1e12), degrees),
        None => Ok(poly),
    }
}

/// Interpolates the resultant by a quartic, sampling at Chebyshev nodes of
/// the given scale. The fit uses the normalized variable `w = v / scale` so
/// the Vandermonde system is fixed and well conditioned.
fn fit_quartic(q: &QuadraticPair, scale: f64, degrees: (usize, usize)) -> Result<QuarticPoly> {
    let w_nodes: Vec<f64> = (0..5)
        .map(|k| (k as f64 * std::f64::consts::FRAC_PI_4).cos())
        .collect();
    let mut values = [0.0_f64; 5];
    let mut bound: f64 = 0.0;
    for (k, &w) in w_nodes.iter().enumerate() {
        let (value, value_scale) = resultant_at(q, scale * w, degrees);
        values[k] = value;
        bound = bound.max(value_scale);
    }
    if values.iter().all(|y| y.abs() <= 1e-12 * bound) {
        // resultant is numerically zero everywhere it was sampled
        return Err(Error::RankDeficientQuadratics);
    }

    let vander = DMatrix::from_fn(5, 5, |k, j| w_nodes[k].powi(4 - j as i32));
    let rhs = DVector::from_row_slice(&values);
    let coeffs = vander
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::RankDeficientQuadratics)?;
    let mut p = [0.0_f64; 5];
    for (j, c) in coeffs.iter().enumerate() {
        p[j] = c / scale.powi(4 - j as i32);
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficientQuadratics);
    }
    Ok(QuarticPoly { p })
}

/// Fujiwara-style bound on the root magnitudes of the quartic.
///
/// Leading coefficients that are negligible at the sampling scale are
/// interpolation noise, not structure; the bound is taken over the deflated
/// polynomial so a spurious tiny lead cannot inflate it.
fn root_magnitude_bound(poly: &QuarticPoly, scale_hint: f64) -> Option<f64> {
    let s = scale_hint.abs().max(1e-12);
    let weights: Vec<f64> = (0..5)
        .map(|k| poly.p[k].abs() * s.powi(4 - k as i32))
        .collect();
    let wmax = weights.iter().cloned().fold(0.0_f64, f64::max);
    if wmax == 0.0 || !wmax.is_finite() {
        return None;
    }
    let mut lead = 0;
    while lead < 4 && weights[lead] <= 1e-14 * wmax {
        lead += 1;
    }
    let lead_coeff = poly.p[lead];
    if lead_coeff == 0.0 {
        return None;
    }
    let mut bound: f64 = 0.0;
    for k in (lead + 1)..5 {
        let ratio = (poly.p[k] / lead_coeff)
            .abs()
            .powf(1.0 / (k - lead) as f64);
        bound = bound.max(ratio);
    }
    let bound = 2.0 * bound;
    (bound.is_finite() && bound > 0.0).then_some(bound)
}

/// Real, strictly positive roots of the quartic, sorted ascending.
///
/// Roots come from the eigenvalues of the (scaled) companion matrix, keeping
/// eigenvalues with `|Im| <= 1e-8 * scale`, polishing with a few Newton steps,
/// and requiring `|p(v)| <= 1e-6 * (|p1| v^4 + ... + |p5|)` and `v > 1e-6`.
pub fn real_positive_roots(poly: &QuarticPoly, scale: f64) -> Vec<f64> {
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let weights: Vec<f64> = (0..5)
        .map(|k| poly.p[k].abs() * scale.powi(4 - k as i32))
        .collect();
    let wmax = weights.iter().cloned().fold(0.0_f64, f64::max);
    if wmax == 0.0 || !wmax.is_finite() {
        return Vec::new();
    }
    let mut lead = 0;
    while lead < 4 && weights[lead] <= 1e-14 * wmax {
        lead += 1;
    }
    let degree = 4 - lead;
    if degree == 0 {
        return Vec::new();
    }

    // substitute v = scale * w so the companion matrix is well balanced
    let lead_coeff = poly.p[lead] * scale.powi(degree as i32);
    let mut companion = DMatrix::zeros(degree, degree);
    for j in 1..=degree {
        let c = poly.p[lead + j] * scale.powi((degree - j) as i32) / lead_coeff;
        companion[(0, j - 1)] = -c;
    }
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }

    let eigenvalues = companion.complex_eigenvalues();
    let mut roots = Vec::new();
    for lambda in eigenvalues.iter() {
        let im = lambda.im * scale;
        if im.abs() > 1e-8 * scale {
            continue;
        }
        let mut v = lambda.re * scale;
        for _ in 0..3 {
            let f = poly.eval(v);
            let df = poly.eval_derivative(v);
            if df == 0.0 {
                break;
            }
            let step = f / df;
            let candidate = v - step;
            if poly.eval(candidate).abs() < f.abs() {
                v = candidate;
            } else {
                break;
            }
        }
        if v > MIN_RANGE && poly.eval(v).abs() <= 1e-6 * poly.eval_abs(v) {
            roots.push(v);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * scale.max(a.abs()));
    roots
}

/// All plausible range-rate branches paired with a quartic root `v`, in
/// preference order: the ratio-of-determinants elimination value first, then
/// the roots of `f1` (respectively `f2`) viewed as a polynomial in `v_dot`.
///
/// Near coalescing quartic roots the branch that best satisfies one
/// polynomial may not be the common root, so the caller should keep every
/// branch as a candidate and let the ML cost arbitrate.
pub(crate) fn recover_vdot_candidates(q: &QuadraticPair, v: f64) -> Vec<f64> {
    let (d1, d2) = vdot_degrees(q, v);
    let det = |x1: f64, y1: f64, x2: f64, y2: f64| x1 * y2 - x2 * y1;
    let mut out: Vec<f64> = Vec::new();
    let mut push = |vd: f64| {
        if vd.is_finite() && !out.iter().any(|x| (x - vd).abs() <= 1e-9 * (1.0 + vd.abs())) {
            out.push(vd);
        }
    };

    if d1 == 2 || d2 == 2 {
        let num = det(q.c1, q.a1, q.c2, q.a2) * v * v
            + det(q.c1, q.d1, q.c2, q.d2) * v
            + det(q.c1, q.f1, q.c2, q.f2);
        let den = det(q.c1, q.b1, q.c2, q.b2) * v + det(q.c1, q.e1, q.c2, q.e2);
        let den_scale = (q.c1 * q.b2 * v).abs()
            + (q.c2 * q.b1 * v).abs()
            + (q.c1 * q.e2).abs()
            + (q.c2 * q.e1).abs();
        if den_scale > 0.0 && den.abs() >= 1e-9 * den_scale {
            push(-num / den);
        }
    }
    if d1 >= 1 {
        let a = if d1 == 2 { q.c1 } else { 0.0 };
        let b = q.b1 * v + q.e1;
        let c = (q.a1 * v + q.d1) * v + q.f1;
        if let Some(mut roots) = solve_quadratic(a, b, c) {
            // best f2 residual first
            roots.sort_by(|x, y| {
                q.eval_f2(v, *x)
                    .abs()
                    .partial_cmp(&q.eval_f2(v, *y).abs())
                    .unwrap()
            });
            for vd in roots {
                push(vd);
            }
        }
    }
    if d2 >= 1 {
        let a = if d2 == 2 { q.c2 } else { 0.0 };
        let b = q.b2 * v + q.e2;
        let c = (q.a2 * v + q.d2) * v + q.f2;
        if let Some(mut roots) = solve_quadratic(a, b, c) {
            roots.sort_by(|x, y| {
                q.eval_f1(v, *x)
                    .abs()
                    .partial_cmp(&q.eval_f1(v, *y).abs())
                    .unwrap()
            });
            for vd in roots {
                push(vd);
            }
        }
    }
    out
}

/// Recovers the range rate paired with a quartic root `v`.
///
/// Primary route is the ratio-of-determinants elimination formula, which is
/// meaningful whenever at least one polynomial is genuinely quadratic in
/// `v_dot`. When its denominator degenerates, falls back to solving
/// `f1(v, v_dot) = 0` in `v_dot` (picking the root that best satisfies
/// `f2`), and symmetrically to `f2` when `f1` carries no `v_dot` term at
/// all, as happens in the minimal-measurement configuration.
pub fn recover_vdot(q: &QuadraticPair, v: f64) -> Result<f64> {
    recover_vdot_candidates(q, v)
        .into_iter()
        .next()
        .ok_or(Error::NoVdotSolution { v })
}

/// Real roots of `a x^2 + b x + c = 0` with a cancellation-safe formula;
/// `None` when no real root exists (within tolerance of the term scale).
fn solve_quadratic(a: f64, b: f64, c: f64) -> Option<Vec<f64>> {
    if a == 0.0 {
        if b == 0.0 {
            return None;
        }
        return Some(vec![-c / b]);
    }
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc >= -1e-9 * (b * b + 4.0 * (a * c).abs()) {
            disc = 0.0;
        } else {
            return None;
        }
    }
    let sq = disc.sqrt();
    let qf = -0.5 * (b + b.signum() * sq);
    if qf == 0.0 {
        return Some(vec![0.0]);
    }
    let mut roots = vec![qf / a, c / qf];
    roots.retain(|r| r.is_finite());
    if roots.is_empty() {
        None
    } else {
        Some(roots)
    }
}
