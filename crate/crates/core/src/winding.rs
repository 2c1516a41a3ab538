//! Winding numbers of planar loops, zeros of differences of solution pairs
//! with their multiplicities, local holomorphic models at zeros, and audits
//! of the zero-counting bounds.
//!
//! Zeros are located on the piecewise-linear interpolant of the difference
//! over the grid triangulation. For that interpolant the winding number
//! along the boundary loop equals the signed count of its zeros, so the
//! discrete counting identity is exact up to the multiplicity estimate.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy_riemann::SolutionPair;
use crate::domain_grid::{classify_morse, classify_transverse, BoundaryFunction, GridDomain, GridError, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindingError {
    #[error("loop passes through the origin at sample {0}")]
    ZeroOnLoop(usize),
    #[error("angle step of {step:.3} rad at sample {index} is not below pi")]
    InadequateSampling { index: usize, step: f64 },
    #[error("loop sample {0} is not finite")]
    NonFiniteSample(usize),
    #[error("the two pairs live on different grids or at different a")]
    Mismatch,
    #[error("the two pairs are identical")]
    IdenticalPairs,
    #[error("zeros near ({x:.4}, {y:.4}) are {distance:.3e} apart, below two cells")]
    ZeroClusterUnresolved { x: f64, y: f64, distance: f64 },
    #[error("zero near ({x:.4}, {y:.4}) has local winding {k}")]
    NonPositiveMultiplicity { x: f64, y: f64, k: i64 },
    #[error("local model fit is ill-conditioned: {0}")]
    IllConditionedFit(String),
    #[error("boundary data difference is not Morse")]
    NotMorse,
    #[error("boundary v-difference is not transverse")]
    NotTransverse,
    #[error("(p, q) = (0, 0) is excluded")]
    ZeroDerivativeData,
    #[error("a = 0 is not admissible here")]
    ZeroA,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConstants {
    pub c_re: f64,
    pub c_im: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroRecord {
    pub x: f64,
    pub y: f64,
    /// Multiplicity; boundary zeros carry 1 and count only toward `m`.
    pub k: u32,
    pub on_boundary: bool,
    pub local_constants: Option<LocalConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindingReport {
    /// Winding of the difference along the boundary loop; `None` when the
    /// difference vanishes on the boundary.
    pub boundary_winding: Option<i64>,
    pub zeros: Vec<ZeroRecord>,
    /// Sum of interior multiplicities.
    pub interior_sum: u32,
    /// Number of boundary zeros.
    pub m: u32,
    /// Count l from the Morse or transverse classification, once audited.
    pub l: Option<usize>,
}

impl WindingReport {
    /// Interior multiplicities sum to the boundary winding (when defined).
    pub fn counting_identity_holds(&self) -> Option<bool> {
        self.boundary_winding.map(|w| w == i64::from(self.interior_sum))
    }
}

/// Degree of a closed sampled loop about the origin, by summing principal
/// angle increments (the closing step from last to first included).
pub fn winding_number(samples: &[[f64; 2]]) -> Result<i64, WindingError> {
    let n = samples.len();
    for (i, p) in samples.iter().enumerate() {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(WindingError::NonFiniteSample(i));
        }
        if p[0] == 0.0 && p[1] == 0.0 {
            return Err(WindingError::ZeroOnLoop(i));
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let (p, q) = (samples[i], samples[(i + 1) % n]);
        let step = (p[0] * q[1] - p[1] * q[0]).atan2(p[0] * q[0] + p[1] * q[1]);
        if step.abs() >= PI {
            return Err(WindingError::InadequateSampling { index: i, step });
        }
        total += step;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Samples a pair of nodal fields by piecewise-linear interpolation on a
/// circle; `None` when the circle leaves the mesh.
fn circle_samples(grid: &GridDomain, du: &[f64], dv: &[f64], centre: [f64; 2], radius: f64, count: usize) -> Option<Vec<[f64; 2]>> {
    let mesh = grid.mesh();
    (0..count)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / count as f64;
            let p = [centre[0] + radius * t.cos(), centre[1] + radius * t.sin()];
            let loc = mesh.locate(p, 1e-9)?;
            Some([mesh.eval(du, &loc), mesh.eval(dv, &loc)])
        })
        .collect()
}

fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

fn distance_to_boundary(grid: &GridDomain, p: [f64; 2]) -> f64 {
    let lp = grid.boundary_loop();
    let n = lp.len();
    (0..n)
        .map(|i| {
            let (a, b) = (grid.node(lp[i]), grid.node(lp[(i + 1) % n]));
            distance_to_segment(p, [a.x, a.y], [b.x, b.y])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Samples on a multiplicity circle.
const CIRCLE_SAMPLES: usize = 128;
/// Default multiplicity-circle radius, in cells.
const CIRCLE_CELLS: f64 = 3.0;
/// Relative size below which a loop value counts as a boundary zero.
const BOUNDARY_ZERO_TOL: f64 = 1e-9;

/// Difference (u1 - u2, v1 - v2) with invalid nodes set to NaN.
fn difference(p1: &SolutionPair, p2: &SolutionPair) -> Result<(Vec<f64>, Vec<f64>), WindingError> {
    if !p1.domain().same_as(p2.domain()) || p1.a != p2.a {
        return Err(WindingError::Mismatch);
    }
    let n = p1.domain().node_count();
    let ok = |k: usize| p1.u.is_valid(k) && p1.v.is_valid(k) && p2.u.is_valid(k) && p2.v.is_valid(k);
    let du = (0..n).map(|k| if ok(k) { p1.u.values[k] - p2.u.values[k] } else { f64::NAN }).collect();
    let dv = (0..n).map(|k| if ok(k) { p1.v.values[k] - p2.v.values[k] } else { f64::NAN }).collect();
    Ok((du, dv))
}

/// Zero of the affine interpolant on one triangle.
fn triangle_zero(grid: &GridDomain, t: [usize; 3], du: &[f64], dv: &[f64]) -> Option<[f64; 2]> {
    let d = t.map(|k| [du[k], dv[k]]);
    if d.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return None;
    }
    let (e1, e2) = ([d[1][0] - d[0][0], d[1][1] - d[0][1]], [d[2][0] - d[0][0], d[2][1] - d[0][1]]);
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    if det == 0.0 {
        return None;
    }
    let w1 = (-d[0][0] * e2[1] + d[0][1] * e2[0]) / det;
    let w2 = (-e1[0] * d[0][1] + e1[1] * d[0][0]) / det;
    let w0 = 1.0 - w1 - w2;
    let slack = -1e-12;
    if w0 < slack || w1 < slack || w2 < slack {
        return None;
    }
    let pts = t.map(|k| grid.node(k));
    let p = [
        w0 * pts[0].x + w1 * pts[1].x + w2 * pts[2].x,
        w0 * pts[0].y + w1 * pts[1].y + w2 * pts[2].y,
    ];
    Some(p)
}

/// Single-linkage clustering of points within `reach`; returns centroids.
fn cluster(points: &[[f64; 2]], reach: f64) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]) <= reach {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sums: Vec<([f64; 2], usize)> = vec![([0.0; 2], 0); n];
    for i in 0..n {
        let r = root(&mut label, i);
        sums[r].0[0] += points[i][0];
        sums[r].0[1] += points[i][1];
        sums[r].1 += 1;
    }
    sums.into_iter().filter(|s| s.1 > 0).map(|(s, c)| [s[0] / c as f64, s[1] / c as f64]).collect()
}

/// Boundary-loop points where the interpolated difference vanishes.
fn boundary_zeros(grid: &GridDomain, du: &[f64], dv: &[f64]) -> Vec<[f64; 2]> {
    let lp = grid.boundary_loop();
    let n = lp.len();
    let scale = lp.iter().map(|&k| du[k].hypot(dv[k])).fold(0.0, f64::max);
    let tol = BOUNDARY_ZERO_TOL * scale;
    let mut out = Vec::new();
    for i in 0..n {
        let (ka, kb) = (lp[i], lp[(i + 1) % n]);
        let (a, b) = ([du[ka], dv[ka]], [du[kb], dv[kb]]);
        if distance_to_segment([0.0, 0.0], a, b) <= tol {
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = if len2 > 0.0 { (-(a[0] * d[0] + a[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let (na, nb) = (grid.node(ka), grid.node(kb));
            out.push([na.x + t * (nb.x - na.x), na.y + t * (nb.y - na.y)]);
        }
    }
    out
}

/// Local winding of the difference about `centre`, shrinking the circle
/// when it leaves the mesh or meets a zero of the interpolant.
fn local_winding(grid: &GridDomain, du: &[f64], dv: &[f64], centre: [f64; 2], radius: f64) -> Result<i64, WindingError> {
    let mut r = radius;
    let mut last = WindingError::IllConditionedFit("circle never fits in the mesh".into());
    for _ in 0..6 {
        if let Some(samples) = circle_samples(grid, du, dv, centre, r, CIRCLE_SAMPLES) {
            match winding_number(&samples) {
                Ok(k) => return Ok(k),
                Err(e) => last = e,
            }
        }
        r *= 0.7;
    }
    Err(last)
}

/// Locates the zeros of (u1 - u2, v1 - v2) and their multiplicities.
pub fn find_zeros(p1: &SolutionPair, p2: &SolutionPair) -> Result<WindingReport, WindingError> {
    let grid = p1.domain();
    let (du, dv) = difference(p1, p2)?;
    let size = |f: &ScalarField| f.max_abs_where(|_| true);
    let scale = 1.0 + size(&p1.u).max(size(&p1.v));
    let gap = du.iter().chain(&dv).filter(|x| x.is_finite()).fold(0.0f64, |m, x| m.max(x.abs()));
    if gap <= 1e-13 * scale {
        return Err(WindingError::IdenticalPairs);
    }
    let (hx, hy) = grid.spacing();
    let h = hx.max(hy);

    let on_boundary = cluster(&boundary_zeros(grid, &du, &dv), h);
    let candidates: Vec<[f64; 2]> = grid
        .mesh()
        .triangles
        .iter()
        .filter_map(|&t| triangle_zero(grid, t, &du, &dv))
        .filter(|p| on_boundary.iter().all(|b| (p[0] - b[0]).hypot(p[1] - b[1]) > h))
        .collect();
    let interior = cluster(&candidates, h);

    for (i, a) in interior.iter().enumerate() {
        for b in &interior[i + 1..] {
            let distance = (a[0] - b[0]).hypot(a[1] - b[1]);
            if distance < 2.0 * h {
                return Err(WindingError::ZeroClusterUnresolved { x: a[0], y: a[1], distance });
            }
        }
    }

    let mut zeros = Vec::new();
    for (i, &c) in interior.iter().enumerate() {
        let nearest_other = interior
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .chain(on_boundary.iter().enumerate())
            .map(|(_, q)| (c[0] - q[0]).hypot(c[1] - q[1]))
            .fold(f64::INFINITY, f64::min);
        let radius = (CIRCLE_CELLS * h).min(0.9 * distance_to_boundary(grid, c)).min(0.5 * nearest_other);
        let k = local_winding(grid, &du, &dv, c, radius)?;
        if k < 1 {
            return Err(WindingError::NonPositiveMultiplicity { x: c[0], y: c[1], k });
        }
        zeros.push(ZeroRecord { x: c[0], y: c[1], k: k as u32, on_boundary: false, local_constants: None });
    }
    let interior_sum = zeros.iter().map(|z| z.k).sum();
    let m = on_boundary.len() as u32;
    zeros.extend(on_boundary.iter().map(|b| ZeroRecord { x: b[0], y: b[1], k: 1, on_boundary: true, local_constants: None }));

    let boundary_winding = if m == 0 {
        let lp = grid.boundary_loop();
        Some(winding_number(&lp.iter().map(|&k| [du[k], dv[k]]).collect::<Vec<_>>())?)
    } else {
        None
    };
    Ok(WindingReport { boundary_winding, zeros, interior_sum, m, l: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub k: u32,
    pub c: Complex64,
    pub lambda: f64,
    /// Relative RMS misfit of the model on the fit rings.
    pub residual: f64,
}

/// Fits lambda (u1-u2) + i (v1-v2) ≈ C (lambda (x-b) + i (y-c))^k on rings
/// of radius 3 to 6 cells (shrunk to fit inside the domain).
pub fn fit_local_model(p1: &SolutionPair, p2: &SolutionPair, zero: &ZeroRecord) -> Result<LocalModel, WindingError> {
    let grid = p1.domain();
    let (hx, hy) = grid.spacing();
    let h = hx.max(hy);
    let outer = (6.0 * h).min(0.9 * distance_to_boundary(grid, [zero.x, zero.y]));
    fit_local_model_at(p1, p2, zero, outer)
}

/// As `fit_local_model`, with rings at 0.5, 0.75 and 1 times `outer`.
pub fn fit_local_model_at(p1: &SolutionPair, p2: &SolutionPair, zero: &ZeroRecord, outer: f64) -> Result<LocalModel, WindingError> {
    if zero.on_boundary {
        return Err(WindingError::IllConditionedFit("boundary zeros carry no local model".into()));
    }
    if p1.a == 0.0 {
        return Err(WindingError::ZeroA);
    }
    let grid = p1.domain();
    let (du, dv) = difference(p1, p2)?;
    let (b, c) = (zero.x, zero.y);
    let v1 = grid
        .mesh()
        .interpolate(&p1.v.values, [b, c], 1e-9)
        .ok_or_else(|| WindingError::IllConditionedFit("zero lies outside the mesh".into()))?;
    let lambda = 2f64.sqrt() * (v1 * v1 + c * c + p1.a * p1.a).powf(0.25);
    let k = zero.k as i32;
    let (mut num, mut den, mut data2) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    let mut samples = Vec::new();
    for frac in [0.5, 0.75, 1.0] {
        let r = frac * outer;
        let ring = circle_samples(grid, &du, &dv, [b, c], r, 64)
            .ok_or_else(|| WindingError::IllConditionedFit("fit ring leaves the mesh".into()))?;
        for (j, d) in ring.into_iter().enumerate() {
            let t = 2.0 * PI * j as f64 / 64.0;
            let model = Complex64::new(lambda * r * t.cos(), r * t.sin()).powi(k);
            let data = Complex64::new(lambda * d[0], d[1]);
            num += model.conj() * data;
            den += model.norm_sqr();
            data2 += data.norm_sqr();
            samples.push((model, data));
        }
    }
    if !(den > 0.0 && den.is_finite() && data2 > 0.0) {
        return Err(WindingError::IllConditionedFit("degenerate ring data".into()));
    }
    let coeff = num / den;
    let misfit: f64 = samples.iter().map(|(m, d)| (d - coeff * m).norm_sqr()).sum();
    Ok(LocalModel { k: zero.k, c: coeff, lambda, residual: (misfit / data2).sqrt() })
}

/// Attaches fitted local constants to every interior zero of a report.
pub fn annotate_local_models(p1: &SolutionPair, p2: &SolutionPair, report: &mut WindingReport) {
    for z in report.zeros.iter_mut().filter(|z| !z.on_boundary) {
        z.local_constants = fit_local_model(p1, p2, z)
            .ok()
            .map(|m| LocalConstants { c_re: m.c.re, c_im: m.c.im, lambda: m.lambda });
    }
}

/// Outcome of a zero-counting bound check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountAudit {
    pub l: usize,
    /// Σk + m.
    pub count: u32,
    pub bound: i64,
    /// Whether the boundary winding lies in [1 - l, 1 + l]; Morse audits only.
    pub winding_in_range: Option<bool>,
    pub passed: bool,
}

fn subtract(a: &BoundaryFunction, b: &BoundaryFunction) -> Result<BoundaryFunction, WindingError> {
    if !a.domain.same_as(&b.domain) {
        return Err(WindingError::Mismatch);
    }
    Ok(BoundaryFunction::new(a.domain.clone(), a.samples.iter().zip(&b.samples).map(|(x, y)| x - y).collect())?)
}

/// Checks Σk + m ≤ l - 1 and 1 - l ≤ winding ≤ 1 + l for the gradient
/// difference of two potentials, with l the number of maxima of the
/// boundary difference f1 - f2.
pub fn audit_count_morse(f1: &ScalarField, f2: &ScalarField, report: &mut WindingReport) -> Result<CountAudit, WindingError> {
    let morse = classify_morse(&subtract(&f1.boundary_trace(), &f2.boundary_trace())?)?;
    if !morse.is_morse {
        return Err(WindingError::NotMorse);
    }
    let l = morse.l;
    report.l = Some(l);
    let count = report.interior_sum + report.m;
    let bound = l as i64 - 1;
    let winding_in_range = report.boundary_winding.map(|w| (1 - l as i64..=1 + l as i64).contains(&w));
    let passed = i64::from(count) <= bound && winding_in_range != Some(false);
    Ok(CountAudit { l, count, bound, winding_in_range, passed })
}

/// Checks Σk + m ≤ l, with 2l the number of transverse boundary zeros of
/// v1 - v2.
pub fn audit_count_transverse(p1: &SolutionPair, p2: &SolutionPair, report: &mut WindingReport) -> Result<CountAudit, WindingError> {
    let tr = classify_transverse(&subtract(&p1.v.boundary_trace(), &p2.v.boundary_trace())?)?;
    if !tr.is_transverse {
        return Err(WindingError::NotTransverse);
    }
    let l = tr.l;
    report.l = Some(l);
    let count = report.interior_sum + report.m;
    let bound = l as i64;
    Ok(CountAudit { l, count, bound, winding_in_range: None, passed: i64::from(count) <= bound })
}

/// Derivatives (p0, q0) = (v_x, v_y) that a solution cannot attain at the
/// image point when the inverse map has data (û0, v̂0, p̂0, q̂0) at ŷ0:
/// p0 = -p̂0/D, q0 = q̂0/D with D = ½ (v̂0²+ŷ0²+a²)^{-1/2} p̂0² + q̂0².
pub fn forbidden_data_transform(
    _u_hat: f64,
    v_hat: f64,
    y_hat: f64,
    p_hat: f64,
    q_hat: f64,
    a: f64,
) -> Result<(f64, f64), WindingError> {
    if a == 0.0 {
        return Err(WindingError::ZeroA);
    }
    if p_hat == 0.0 && q_hat == 0.0 {
        return Err(WindingError::ZeroDerivativeData);
    }
    let d = 0.5 * p_hat * p_hat / (v_hat * v_hat + y_hat * y_hat + a * a).sqrt() + q_hat * q_hat;
    Ok((-p_hat / d, q_hat / d))
}
