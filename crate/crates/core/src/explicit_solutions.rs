//! Closed-form solution families of the nonlinear Cauchy-Riemann system.
//!
//! The Harvey-Lawson family is characterised by
//! `v^2 + y^2 = (x^2 + u^2)(x^2 + u^2 + 2|a|)` and `v u + y x = 0`.
//! Eliminating `v` gives a cubic in `α = u^2`:
//!
//! ```text
//! α^3 + (2x^2 + 2|a|) α^2 + (x^4 + 2|a| x^2 - y^2) α - x^2 y^2 = 0
//! ```
//!
//! whose nonnegative root is unique. Signs follow `u y <= 0`, `v x >= 0`.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("derivative undefined at ({x}, {y})")]
    UndefinedDerivative { x: f64, y: f64 },
    #[error("scale factor must be positive, got {0}")]
    NonpositiveScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnalyticPair {
    Affine { alpha: f64, beta: f64, gamma: f64 },
    Catenoid,
    ParaboloidUnion,
    HarveyLawson { a: f64 },
}

/// Partial derivatives (u_x, u_y, v_x, v_y).
pub type Jet = [f64; 4];

pub fn affine_pair(alpha: f64, beta: f64, gamma: f64) -> AnalyticPair {
    AnalyticPair::Affine { alpha, beta, gamma }
}

pub fn catenoid_pair() -> AnalyticPair {
    AnalyticPair::Catenoid
}

pub fn paraboloid_union_pair() -> AnalyticPair {
    AnalyticPair::ParaboloidUnion
}

pub fn harvey_lawson_pair(a: f64) -> AnalyticPair {
    AnalyticPair::HarveyLawson { a: a.abs() }
}

impl AnalyticPair {
    /// The fibre parameter the pair solves for, if it is fixed.
    pub fn natural_a(&self) -> Option<f64> {
        match *self {
            AnalyticPair::Affine { .. } => None,
            AnalyticPair::Catenoid | AnalyticPair::ParaboloidUnion => Some(0.0),
            AnalyticPair::HarveyLawson { a } => Some(a),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            AnalyticPair::Affine { alpha, beta, gamma } => (alpha * x + beta, alpha * y + gamma),
            AnalyticPair::Catenoid => {
                let sech2 = 1.0 / x.cosh().powi(2);
                (y * x.tanh(), 0.5 * y * y * sech2 - 0.5 * x.cosh().powi(2))
            }
            AnalyticPair::ParaboloidUnion => (y.abs() - 0.5 * (2.0 * x).cosh(), -y * (2.0 * x).sinh()),
            AnalyticPair::HarveyLawson { a } => harvey_lawson_eval(a, x, y),
        }
    }

    pub fn derivatives(&self, x: f64, y: f64) -> Result<Jet, FamilyError> {
        match *self {
            AnalyticPair::Affine { alpha, .. } => Ok([alpha, 0.0, 0.0, alpha]),
            AnalyticPair::Catenoid => {
                let (c, t) = (x.cosh(), x.tanh());
                let sech2 = 1.0 / (c * c);
                Ok([y * sech2, t, -y * y * sech2 * t - c * x.sinh(), y * sech2])
            }
            AnalyticPair::ParaboloidUnion => {
                if y == 0.0 {
                    return Err(FamilyError::UndefinedDerivative { x, y });
                }
                Ok([-(2.0 * x).sinh(), y.signum(), -2.0 * y * (2.0 * x).cosh(), -(2.0 * x).sinh()])
            }
            AnalyticPair::HarveyLawson { a } => harvey_lawson_derivatives(a, x, y),
        }
    }
}

/// Residual of the system at a point from the analytic jet:
/// (u_x - v_y, v_x + 2 (v^2 + y^2 + a^2)^{1/2} u_y).
pub fn analytic_residual(pair: &AnalyticPair, a: f64, x: f64, y: f64) -> Result<(f64, f64), FamilyError> {
    let (_, v) = pair.eval(x, y);
    let [ux, uy, vx, vy] = pair.derivatives(x, y)?;
    let s = (v * v + y * y + a * a).sqrt();
    Ok((ux - vy, vx + 2.0 * s * uy))
}

/// Largest real root of `t^3 + b t^2 + c t + d`, for `d <= 0 <= b`, where
/// it is the unique nonnegative root.
pub fn nonnegative_cubic_root(b: f64, c: f64, d: f64) -> f64 {
    let p = |t: f64| ((t + b) * t + c) * t + d;
    let dp = |t: f64| (3.0 * t + 2.0 * b) * t + c;
    if d == 0.0 && c >= 0.0 {
        // t (t^2 + b t + c) with nonnegative coefficients: root 0.
        return 0.0;
    }
    // Closed form on the depressed cubic t = s - b/3.
    let shift = b / 3.0;
    let pp = c - b * b / 3.0;
    let qq = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);
    let estimate = if disc <= 0.0 && pp < 0.0 {
        let m = 2.0 * (-pp / 3.0).sqrt();
        let arg = (3.0 * qq / (pp * m)).clamp(-1.0, 1.0);
        m * (arg.acos() / 3.0).cos() - shift
    } else {
        let sq = disc.max(0.0).sqrt();
        (-qq / 2.0 + sq).cbrt() + (-qq / 2.0 - sq).cbrt() - shift
    };

    // Safeguarded Newton on the bracket [0, hi]; p is convex and
    // increasing past its nonnegative root.
    let mut lo = 0.0;
    let mut hi = 1.0 + b.abs().max(c.abs()).max(d.abs());
    while p(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut t = estimate.clamp(lo, hi);
    for _ in 0..100 {
        let pt = p(t);
        if pt == 0.0 {
            return t;
        }
        if pt < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let slope = dp(t);
        let mut next = t - pt / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi {
            t = next;
            break;
        }
        t = next;
    }
    t.max(0.0)
}

/// Harvey-Lawson pair (u, v) at (x, y); `a` enters through |a|.
pub fn harvey_lawson_eval(a: f64, x: f64, y: f64) -> (f64, f64) {
    let a = a.abs();
    if y == 0.0 {
        return (0.0, x * (x * x + 2.0 * a).sqrt());
    }
    if x == 0.0 {
        return (-y / (a + (y * y + a * a).sqrt()).sqrt(), 0.0);
    }
    let x2 = x * x;
    let alpha = nonnegative_cubic_root(2.0 * x2 + 2.0 * a, x2 * x2 + 2.0 * a * x2 - y * y, -x2 * y * y);
    let u = -y.signum() * alpha.sqrt();
    assert!(u != 0.0, "Harvey-Lawson root vanished at y = {y} != 0");
    (u, -y * x / u)
}

fn harvey_lawson_derivatives(a: f64, x: f64, y: f64) -> Result<Jet, FamilyError> {
    let a = a.abs();
    if x == 0.0 && y == 0.0 {
        if a == 0.0 {
            return Err(FamilyError::UndefinedDerivative { x, y });
        }
        let r = (2.0 * a).sqrt();
        return Ok([0.0, -1.0 / r, r, 0.0]);
    }
    let (u, v) = harvey_lawson_eval(a, x, y);
    // Implicit differentiation of
    //   G1 = v^2 + y^2 - W (W + 2a), W = x^2 + u^2,   G2 = v u + y x.
    let c = 2.0 * (x * x + u * u) + 2.0 * a;
    let det = -2.0 * u * u * c - 2.0 * v * v;
    let solve = |r1: f64, r2: f64| {
        // [[-2uc, 2v], [v, u]] (du, dv) = (r1, r2)
        let du = (r1 * u - 2.0 * v * r2) / det;
        let dv = (-2.0 * u * c * r2 - v * r1) / det;
        (du, dv)
    };
    let (ux, vx) = solve(2.0 * c * x, -y);
    let (uy, vy) = solve(-2.0 * y, -x);
    Ok([ux, uy, vx, vy])
}

/// Harvey-Lawson potential f with f_x = v, f_y = u and f(0, 0) = 0,
/// integrated along the x-axis in closed form and then vertically by
/// composite Gauss-Legendre quadrature.
pub fn harvey_lawson_potential(a: f64, x: f64, y: f64) -> f64 {
    let a = a.abs();
    let along_x = ((x * x + 2.0 * a).powf(1.5) - (2.0 * a).powf(1.5)) / 3.0;
    if y == 0.0 {
        return along_x;
    }
    let rule = GaussLegendre::new(20).expect("20-point rule exists");
    let panels = 16;
    let step = y / panels as f64;
    let vertical: f64 = (0..panels)
        .map(|k| {
            let s0 = k as f64 * step;
            rule.integrate(s0, s0 + step, |s| harvey_lawson_eval(a, x, s).0)
        })
        .sum();
    along_x + vertical
}

/// Max over samples (x, y, t) of
/// |u0(tx, t^2 y) - t u0(x, y)| + |v0(tx, t^2 y) - t^2 v0(x, y)|.
pub fn weighted_homogeneity_check(samples: &[(f64, f64, f64)]) -> Result<f64, FamilyError> {
    let mut worst: f64 = 0.0;
    for &(x, y, t) in samples {
        if !(t > 0.0) {
            return Err(FamilyError::NonpositiveScale(t));
        }
        let (u, v) = harvey_lawson_eval(0.0, x, y);
        let (us, vs) = harvey_lawson_eval(0.0, t * x, t * t * y);
        worst = worst.max((us - t * u).abs() + (vs - t * t * v).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_values() {
        assert_eq!(affine_pair(1.0, 0.0, 0.0).eval(2.0, 3.0), (2.0, 3.0));
        let p = affine_pair(0.0, 5.0, -1.0);
        assert_eq!(p.eval(0.3, -7.0), (5.0, -1.0));
        assert_eq!(p.derivatives(1.0, 1.0).unwrap(), [0.0; 4]);
    }

    #[test]
    fn catenoid_and_paraboloid_values() {
        let (u, v) = catenoid_pair().eval(0.0, 3.0);
        assert_eq!(u, 0.0);
        assert!((v - 4.0).abs() < 1e-15);
        let (u, v) = catenoid_pair().eval(0.7, 0.0);
        assert_eq!(u, 0.0);
        assert!((v + 0.5 * 0.7f64.cosh().powi(2)).abs() < 1e-15);
        assert_eq!(paraboloid_union_pair().eval(0.0, 1.0), (0.5, -0.0));
        assert!(matches!(
            paraboloid_union_pair().derivatives(1.0, 0.0),
            Err(FamilyError::UndefinedDerivative { .. })
        ));
    }

    #[test]
    fn jets_match_central_differences() {
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = [catenoid_pair(), paraboloid_union_pair(), harvey_lawson_pair(0.0), harvey_lawson_pair(0.7)];
        for pair in pairs {
            for _ in 0..50 {
                let (x, y): (f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
                if y.abs() < 0.05 || (x.abs() < 0.05 && y.abs() < 0.05) {
                    continue;
                }
                let jet = pair.derivatives(x, y).unwrap();
                let d = |dx: f64, dy: f64| {
                    let (up, vp) = pair.eval(x + dx, y + dy);
                    let (um, vm) = pair.eval(x - dx, y - dy);
                    ((up - um) / (2.0 * h), (vp - vm) / (2.0 * h))
                };
                let (ux, vx) = d(h, 0.0);
                let (uy, vy) = d(0.0, h);
                for (a, b) in jet.iter().zip([ux, uy, vx, vy]) {
                    assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{pair:?} at ({x},{y}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn analytic_residuals_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            for (pair, a) in [
                (catenoid_pair(), 0.0),
                (paraboloid_union_pair(), 0.0),
                (harvey_lawson_pair(0.0), 0.0),
                (harvey_lawson_pair(0.25), 0.25),
                (harvey_lawson_pair(1.0), 1.0),
                (affine_pair(0.3, -1.0, 2.0), 0.6),
            ] {
                let (r1, r2) = analytic_residual(&pair, a, x, y).unwrap();
                assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12, "{pair:?} ({x}, {y}): {r1} {r2}");
            }
        }
    }

    #[test]
    fn harvey_lawson_boundary_formulas() {
        assert_eq!(harvey_lawson_eval(0.0, 0.0, 1.0), (-1.0, 0.0));
        assert_eq!(harvey_lawson_eval(0.0, 2.0, 0.0), (0.0, 4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..2.0);
            let t: f64 = rng.gen_range(-3.0..3.0);
            let (u, v) = harvey_lawson_eval(a, 0.0, t);
            assert_eq!(v, 0.0);
            assert!((u + t / (a + (t * t + a * a).sqrt()).sqrt()).abs() < 1e-10);
            // The generic branch, just off the axes, agrees with the axis formulas.
            let (u2, _) = harvey_lawson_eval(a, 1e-9, t);
            assert!((u - u2).abs() < 1e-8);
            let (_, v2) = harvey_lawson_eval(a, t, 1e-12);
            assert!((v2 - t * (t * t + 2.0 * a).sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_point_matches_golden_root() {
        // α^3 + 2α^2 - 1 = (α + 1)(α^2 + α - 1).
        let alpha = (5f64.sqrt() - 1.0) / 2.0;
        let (u, v) = harvey_lawson_eval(0.0, 1.0, 1.0);
        assert!((u + alpha.sqrt()).abs() < 1e-14);
        assert!((v - 1.0 / alpha.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sign_structure_and_cubic_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let a: f64 = rng.gen_range(0.0..2.0);
            let scale = 10f64.powf(rng.gen_range(-6.0..2.0));
            let (x, y) = (scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0));
            let (u, v) = harvey_lawson_eval(a, x, y);
            assert!(u * y <= 0.0 && v * x >= 0.0);
            assert_eq!(u == 0.0, y == 0.0);
            assert_eq!(v == 0.0, x == 0.0);
            let x2 = x * x;
            let (b, c, d) = (2.0 * x2 + 2.0 * a, x2 * x2 + 2.0 * a * x2 - y * y, -x2 * y * y);
            let al = u * u;
            let res = ((al + b) * al + c) * al + d;
            let size = al.powi(3) + b * al * al + c.abs() * al + d.abs();
            assert!(res.abs() <= 1e-12 * (1.0 + size), "({x}, {y}, {a}): {res}");
        }
    }

    #[test]
    fn cubic_root_against_companion_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let b: f64 = rng.gen_range(0.0..5.0);
            let c: f64 = rng.gen_range(-5.0..5.0);
            let d: f64 = rng.gen_range(-5.0..0.0);
            let companion = nalgebra::Matrix3::new(0.0, 0.0, -d, 1.0, 0.0, -c, 0.0, 1.0, -b);
            let oracle = companion
                .complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() < 1e-7)
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
            let t = nonnegative_cubic_root(b, c, d);
            assert!((t - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{b} {c} {d}: {t} vs {oracle}");
        }
    }

    #[test]
    fn continuation_from_zero_is_continuous() {
        let (x, y) = (0.8, -0.6);
        let mut prev = harvey_lawson_eval(0.0, x, y);
        for k in 1..=200 {
            let now = harvey_lawson_eval(k as f64 * 1e-3, x, y);
            assert!((now.0 - prev.0).abs() < 1e-2 && (now.1 - prev.1).abs() < 1e-2);
            prev = now;
        }
    }

    #[test]
    fn homogeneity() {
        assert_eq!(weighted_homogeneity_check(&[(1.0, 0.0, 2.0)]).unwrap(), 0.0);
        assert_eq!(weighted_homogeneity_check(&[(0.0, 1.0, 3.0)]).unwrap(), 0.0);
        assert!(weighted_homogeneity_check(&[(1.0, 1.0, 0.0)]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<_> =
            (0..100).map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0))).collect();
        assert!(weighted_homogeneity_check(&samples).unwrap() < 1e-10);
    }

    #[test]
    fn potential_gradient_matches_pair() {
        let a = 0.8;
        let h = 1e-4;
        for &(x, y) in &[(0.3, 0.4), (-0.7, 0.2), (0.5, -0.9)] {
            let fx = (harvey_lawson_potential(a, x + h, y) - harvey_lawson_potential(a, x - h, y)) / (2.0 * h);
            let fy = (harvey_lawson_potential(a, x, y + h) - harvey_lawson_potential(a, x, y - h)) / (2.0 * h);
            let (u, v) = harvey_lawson_eval(a, x, y);
            assert!((fx - v).abs() < 1e-7 && (fy - u).abs() < 1e-7);
        }
    }
}
