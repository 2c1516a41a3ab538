//! Geometry in C^3: the metric, Kähler form and holomorphic volume form,
//! the anti-bilinear cross product, the lift of a solution pair to the
//! U(1)-invariant 3-fold
//!
//! ```text
//! N = { (z1, z2, z3) : |z1|^2 - |z2|^2 = 2a, z1 z2 = v + iy, z3 = x + iu },
//! ```
//!
//! its tangent frames, pointwise special Lagrangian checks and OBJ export.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy_riemann::SolutionPair;
use crate::domain_grid::field_gradient;

pub type C3Vector = Vector3<Complex64>;

#[derive(Debug, Error)]
pub enum SlError {
    #[error("a = 0 is not admissible here")]
    ZeroA,
    #[error("singular fibre at ({x:.4}, {y:.4}): z1 = z2 = 0")]
    SingularFibre { x: f64, y: f64 },
    #[error("node {0} is invalid or lifts to a non-finite point")]
    NonFiniteVertex(usize),
    #[error("theta_samples must be positive")]
    NoThetaSamples,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// (r̄2 s̄3 - r̄3 s̄2, r̄3 s̄1 - r̄1 s̄3, r̄1 s̄2 - r̄2 s̄1).
pub fn cross_product(r: &C3Vector, s: &C3Vector) -> C3Vector {
    let (r, s) = (r.map(|z| z.conj()), s.map(|z| z.conj()));
    Vector3::new(r[1] * s[2] - r[2] * s[1], r[2] * s[0] - r[0] * s[2], r[0] * s[1] - r[1] * s[0])
}

fn hermitian(r: &C3Vector, s: &C3Vector) -> Complex64 {
    r.iter().zip(s.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Euclidean metric g(r, s) = Re Σ r̄_j s_j.
pub fn metric(r: &C3Vector, s: &C3Vector) -> f64 {
    hermitian(r, s).re
}

/// Kähler form ω(r, s) = Im Σ r̄_j s_j.
pub fn kahler_form(r: &C3Vector, s: &C3Vector) -> f64 {
    hermitian(r, s).im
}

/// Ω(r, s, t) = det[r s t].
pub fn holomorphic_volume(r: &C3Vector, s: &C3Vector, t: &C3Vector) -> Complex64 {
    Matrix3::from_columns(&[*r, *s, *t]).determinant()
}

/// The U(1)-action (z1, z2, z3) -> (e^{iθ} z1, e^{-iθ} z2, z3).
pub fn u1_action(z: &C3Vector, theta: f64) -> C3Vector {
    let e = Complex64::from_polar(1.0, theta);
    Vector3::new(e * z[0], e.conj() * z[1], z[2])
}

/// Haar-distributed element of SU(3): QR of a complex Gaussian matrix with
/// the phases of R's diagonal absorbed, then scaled by a cube root of
/// the conjugate determinant.
pub fn random_su3<R: Rng>(rng: &mut R) -> Matrix3<Complex64> {
    let mut gauss = || {
        let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(f64::MIN_POSITIVE), rng.gen());
        let r = (-2.0 * u1.ln()).sqrt();
        Complex64::new(r * (2.0 * PI * u2).cos(), r * (2.0 * PI * u2).sin())
    };
    let m = Matrix3::from_fn(|_, _| gauss());
    let qr = m.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..3 {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let col = q.column(j) * phase;
        q.set_column(j, &col);
    }
    let det = q.determinant();
    let root = Complex64::from_polar(1.0, -det.arg() / 3.0);
    q * root
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedPoint {
    pub base: (f64, f64),
    pub theta: f64,
    pub point: C3Vector,
    pub a: f64,
}

/// Moduli squared (|z1|^2, |z2|^2), each computed in the form free of
/// cancellation.
fn moduli_sq(y: f64, v: f64, a: f64) -> (f64, f64) {
    let q = v * v + y * y;
    let s = (q + a * a).sqrt();
    if a >= 0.0 {
        (a + s, if q == 0.0 { 0.0 } else { q / (s + a) })
    } else {
        (if q == 0.0 { 0.0 } else { q / (s - a) }, s - a)
    }
}

/// The point of N over (x, y) with z1 = |z1| e^{iθ}. When z1 = 0 the
/// fibre is parametrized by z2 = |z2| e^{-iθ}.
pub fn lift_point(x: f64, y: f64, u: f64, v: f64, a: f64, theta: f64) -> LiftedPoint {
    let (m1, m2) = moduli_sq(y, v, a);
    let (r1, r2) = (m1.sqrt(), m2.sqrt());
    let (z1, z2) = if r1 > 0.0 {
        let z1 = Complex64::from_polar(r1, theta);
        (z1, Complex64::new(v, y) / z1)
    } else {
        (Complex64::new(0.0, 0.0), Complex64::from_polar(r2, -theta))
    };
    LiftedPoint { base: (x, y), theta, point: Vector3::new(z1, z2, Complex64::new(x, u)), a }
}

/// Tangent vectors of N at the lift with fibre angle θ, from the values
/// and first derivatives of (u, v). Here Σ = |z1|^2 + |z2|^2,
///
/// ```text
/// p1 = (i z1, -i z2, 0),
/// p2 = (w z̄2/Σ, w z̄1/Σ, 1 + i u_x)   with w = v_x,
/// p3 = (w z̄2/Σ, w z̄1/Σ, i u_y)       with w = v_y + i,
/// ```
///
/// The frame commutes with the U(1)-action and, when z1 = z2, has equal
/// first two components in p2 and p3.
pub fn frame_from_jet(x: f64, y: f64, u: f64, v: f64, a: f64, theta: f64, jet: [f64; 4]) -> Result<[C3Vector; 3], SlError> {
    let [ux, uy, vx, vy] = jet;
    let z = lift_point(x, y, u, v, a, 0.0).point;
    let sigma = z[0].norm_sqr() + z[1].norm_sqr();
    if sigma == 0.0 {
        return Err(SlError::SingularFibre { x, y });
    }
    let lift = |w: Complex64, third: Complex64| Vector3::new(w * z[1].conj() / sigma, w * z[0].conj() / sigma, third);
    let p1 = Vector3::new(I * z[0], -I * z[1], Complex64::new(0.0, 0.0));
    let p2 = lift(Complex64::new(vx, 0.0), Complex64::new(1.0, ux));
    let p3 = lift(Complex64::new(vy, 1.0), Complex64::new(0.0, uy));
    Ok([p1, p2, p3].map(|p| u1_action(&p, theta)))
}

/// Tangent frame at a node of a pair, using discrete derivatives.
pub fn tangent_frame(p: &SolutionPair, node: usize, theta: f64) -> Result<[C3Vector; 3], SlError> {
    let (ux, uy) = field_gradient(&p.u);
    let (vx, vy) = field_gradient(&p.v);
    let n = p.domain().node(node);
    let jet = [ux.values[node], uy.values[node], vx.values[node], vy.values[node]];
    frame_from_jet(n.x, n.y, p.u.values[node], p.v.values[node], p.a, theta, jet)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    /// max |ω(p_i, p_j)| over frames.
    pub max_omega: f64,
    pub max_im_omega: f64,
    /// min Re Ω(p1, p2, p3); positive values witness orientation.
    pub min_re_omega: f64,
    pub frames_checked: usize,
}

/// Evaluates the Lagrangian and special conditions over the frames at all
/// interior nodes off the boundary ring and `theta_samples` fibre angles.
pub fn verify_sl(p: &SolutionPair, theta_samples: usize) -> Result<SlReport, SlError> {
    if p.a == 0.0 {
        return Err(SlError::ZeroA);
    }
    if theta_samples == 0 {
        return Err(SlError::NoThetaSamples);
    }
    let grid = p.domain();
    let (ux, uy) = field_gradient(&p.u);
    let (vx, vy) = field_gradient(&p.v);
    let mut report = SlReport { max_omega: 0.0, max_im_omega: 0.0, min_re_omega: f64::INFINITY, frames_checked: 0 };
    for &k in grid.interior() {
        if grid.is_ring(k) || !(ux.is_valid(k) && vx.is_valid(k) && p.u.is_valid(k) && p.v.is_valid(k)) {
            continue;
        }
        let n = grid.node(k);
        let jet = [ux.values[k], uy.values[k], vx.values[k], vy.values[k]];
        for j in 0..theta_samples {
            let theta = 2.0 * PI * j as f64 / theta_samples as f64;
            let [p1, p2, p3] = frame_from_jet(n.x, n.y, p.u.values[k], p.v.values[k], p.a, theta, jet)?;
            let omega = kahler_form(&p1, &p2).abs().max(kahler_form(&p1, &p3).abs()).max(kahler_form(&p2, &p3).abs());
            let vol = holomorphic_volume(&p1, &p2, &p3);
            report.max_omega = report.max_omega.max(omega);
            report.max_im_omega = report.max_im_omega.max(vol.im.abs());
            report.min_re_omega = report.min_re_omega.min(vol.re);
            report.frames_checked += 1;
        }
    }
    Ok(report)
}

/// Real coordinate of C^3 used by mesh projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    ReZ1,
    ImZ1,
    ReZ2,
    ImZ2,
    ReZ3,
    ImZ3,
}

impl Coordinate {
    pub fn of(self, z: &C3Vector) -> f64 {
        match self {
            Coordinate::ReZ1 => z[0].re,
            Coordinate::ImZ1 => z[0].im,
            Coordinate::ReZ2 => z[1].re,
            Coordinate::ImZ2 => z[1].im,
            Coordinate::ReZ3 => z[2].re,
            Coordinate::ImZ3 => z[2].im,
        }
    }
}

pub const DEFAULT_PROJECTION: [Coordinate; 3] = [Coordinate::ReZ1, Coordinate::ImZ1, Coordinate::ReZ3];

/// Writes the lifted pair as an OBJ mesh: vertex `k * theta_samples + j`
/// (0-based) is node k at angle 2πj/theta_samples, and each grid edge
/// sweeps a cyclically closed band of quads.
pub fn write_obj<W: Write>(p: &SolutionPair, theta_samples: usize, projection: [Coordinate; 3], out: &mut W) -> Result<(), SlError> {
    if theta_samples == 0 {
        return Err(SlError::NoThetaSamples);
    }
    let grid = p.domain();
    for k in 0..grid.node_count() {
        let n = grid.node(k);
        if !(p.u.is_valid(k) && p.v.is_valid(k)) {
            return Err(SlError::NonFiniteVertex(k));
        }
        for j in 0..theta_samples {
            let theta = 2.0 * PI * j as f64 / theta_samples as f64;
            let z = lift_point(n.x, n.y, p.u.values[k], p.v.values[k], p.a, theta).point;
            let c = projection.map(|c| c.of(&z));
            if c.iter().any(|x| !x.is_finite()) {
                return Err(SlError::NonFiniteVertex(k));
            }
            writeln!(out, "v {} {} {}", c[0], c[1], c[2])?;
        }
    }
    let idx = |k: usize, j: usize| k * theta_samples + j % theta_samples + 1;
    for e in grid.edges() {
        for j in 0..theta_samples {
            writeln!(out, "f {} {} {} {}", idx(e.a, j), idx(e.b, j), idx(e.b, j + 1), idx(e.a, j + 1))?;
        }
    }
    Ok(())
}

/// `write_obj` into a file.
pub fn export_mesh(p: &SolutionPair, theta_samples: usize, projection: [Coordinate; 3], path: &Path) -> Result<(), SlError> {
    let mut buf = Vec::new();
    write_obj(p, theta_samples, projection, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy_riemann::sample_pair;
    use crate::domain_grid::{build_grid, GridShape};
    use crate::explicit_solutions::{affine_pair, harvey_lawson_pair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn e(j: usize) -> C3Vector {
        let mut v = Vector3::zeros();
        v[j] = c(1.0, 0.0);
        v
    }

    fn random_vector(rng: &mut ChaCha8Rng) -> C3Vector {
        Vector3::from_fn(|_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn basic_values() {
        assert_eq!(cross_product(&e(0), &e(1)), e(2));
        assert_eq!(cross_product(&e(0), &(e(1) * I)), e(2) * -I);
        assert_eq!(kahler_form(&e(0), &(e(0) * I)), 1.0);
        assert_eq!(holomorphic_volume(&e(0), &e(1), &e(2)), c(1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, s) = (random_vector(&mut rng), random_vector(&mut rng));
        assert_eq!(kahler_form(&r, &r), 0.0);
        assert!(holomorphic_volume(&r, &s, &r).norm() < 1e-15);
    }

    #[test]
    fn random_su3_is_special_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_su3(&mut rng);
            assert!((u.adjoint() * u - Matrix3::identity()).norm() < 1e-12);
            assert!((u.determinant() - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn lift_examples() {
        let cone = lift_point(0.0, 1.0, -1.0, 0.0, 0.0, 0.0).point;
        assert!((cone - Vector3::new(c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0))).norm() < 1e-15);
        let prod = cone[0] * cone[1] * cone[2];
        assert!(prod.im.abs() < 1e-15 && (prod.re - 1.0).abs() < 1e-15);
        let axis = lift_point(0.0, 0.0, 0.0, 0.0, 1.0, 0.0).point;
        assert_eq!(axis, Vector3::new(c(2f64.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)));
        let neg = lift_point(0.3, 0.0, 0.2, 0.0, -0.5, 0.4).point;
        assert!(neg[0].norm() == 0.0 && (neg[1].norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lift_invariants_and_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (x, y, u, v) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a = rng.gen_range(-1.5..1.5);
            let theta = rng.gen_range(0.0..2.0 * PI);
            let z = lift_point(x, y, u, v, a, theta).point;
            assert!((z[0].norm_sqr() - z[1].norm_sqr() - 2.0 * a).abs() < 1e-12 * (1.0 + z[0].norm_sqr()));
            assert!((z[0] * z[1] - c(v, y)).norm() < 1e-12 * (1.0 + v.abs() + y.abs()));
            assert_eq!(z[2], c(x, u));
            let z0 = lift_point(x, y, u, v, a, 0.0).point;
            assert!((u1_action(&z0, theta) - z).norm() < 1e-12 * (1.0 + z.norm()));
        }
    }

    #[test]
    fn frame_at_trivial_solution() {
        // u = v = 0, a = 1/2, y = 0: z = (1, 0, x).
        let [p1, p2, p3] = frame_from_jet(0.4, 0.0, 0.0, 0.0, 0.5, 0.0, [0.0; 4]).unwrap();
        assert_eq!(p1, Vector3::new(I, c(0.0, 0.0), c(0.0, 0.0)));
        assert_eq!(p2, e(2));
        assert_eq!(p3, Vector3::new(c(0.0, 0.0), I, c(0.0, 0.0)));
        assert_eq!(holomorphic_volume(&p1, &p2, &p3), c(1.0, 0.0));
        assert!(matches!(frame_from_jet(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, [0.0; 4]), Err(SlError::SingularFibre { .. })));
    }

    #[test]
    fn frame_reduces_to_symmetric_form_when_z1_equals_z2() {
        // a = 0, v = 0, y = 2 gives z1 = √2, z2 = √2 i; at θ = π/4 both equal √2 e^{iπ/4}.
        let jet = [0.3, -0.7, 1.1, 0.3];
        let [p1, p2, p3] = frame_from_jet(0.5, 2.0, 0.1, 0.0, 0.0, PI / 4.0, jet).unwrap();
        let z1 = Complex64::from_polar(2f64.sqrt(), PI / 4.0);
        let half = (z1 * 2.0).inv();
        assert!((p1 - Vector3::new(I * z1, -I * z1, c(0.0, 0.0))).norm() < 1e-14);
        assert!((p2 - Vector3::new(half * jet[2], half * jet[2], c(1.0, jet[0]))).norm() < 1e-14);
        assert!((p3 - Vector3::new(half * c(jet[3], 1.0), half * c(jet[3], 1.0), c(0.0, jet[1]))).norm() < 1e-14);
    }

    #[test]
    fn affine_pair_is_exactly_special_lagrangian() {
        let g = build_grid(GridShape::unit_disc(), 17, 17).unwrap();
        let p = sample_pair(&affine_pair(0.6, -0.2, 0.3), &g, 1.0);
        let r = verify_sl(&p, 4).unwrap();
        assert!(r.max_omega < 1e-12 && r.max_im_omega < 1e-12, "{r:?}");
        assert!(r.min_re_omega > 0.0);
    }

    #[test]
    fn harvey_lawson_lift_errors_shrink_at_second_order() {
        let report = |n: usize| {
            let g = build_grid(GridShape::unit_disc(), n, n).unwrap();
            verify_sl(&sample_pair(&harvey_lawson_pair(1.0), &g, 1.0), 3).unwrap()
        };
        let (r1, r2) = (report(33), report(65));
        assert!(r1.max_im_omega / r2.max_im_omega > 3.5, "{r1:?} {r2:?}");
        assert!(r1.max_omega / r2.max_omega > 3.5, "{r1:?} {r2:?}");
        assert!(r2.min_re_omega > 0.1);
    }

    #[test]
    fn obj_export_counts() {
        let g = build_grid(GridShape::unit_square(), 5, 5).unwrap();
        let p = sample_pair(&affine_pair(1.0, 0.5, -0.5), &g, 1.0);
        let mut buf = Vec::new();
        write_obj(&p, 8, DEFAULT_PROJECTION, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let vertices = text.lines().filter(|l| l.starts_with("v ")).count();
        let faces: Vec<&str> = text.lines().filter(|l| l.starts_with("f ")).collect();
        assert_eq!(vertices, 200);
        assert_eq!(faces.len(), g.edges().len() * 8);
        assert!(!text.contains("NaN"));
        // The last quad of the first band closes back onto angle 0.
        assert_eq!(faces[7], "f 8 16 9 1");
    }
}
