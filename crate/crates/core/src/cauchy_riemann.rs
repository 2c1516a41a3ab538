//! The nonlinear Cauchy-Riemann system on grids: residuals, potentials,
//! recovery of u from v, and the inverse-pair involution.

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::domain_grid::{build_grid, field_gradient, Axis, GridDomain, GridError, GridShape, ScalarField};
use crate::explicit_solutions::AnalyticPair;
use crate::mesh::{signed_area, TriMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("u and v live on different grids")]
    DomainMismatch,
    #[error("loop integrals of the one-form reach {curl:.3e} per unit area against derivative scale {scale:.3e} (relative tolerance {tolerance:.3e})")]
    PathDependenceExceedsTolerance { curl: f64, scale: f64, tolerance: f64 },
    #[error("a = 0 is not admissible here")]
    ZeroA,
    #[error("anchor node {0} is not a valid node")]
    BadAnchor(usize),
    #[error("the map (x, y) -> (u, v) is not injective: {0}")]
    NonInjectiveMap(String),
}

/// A (u, v) pair on one grid together with the fibre parameter a.
#[derive(Debug, Clone)]
pub struct SolutionPair {
    pub u: ScalarField,
    pub v: ScalarField,
    pub a: f64,
    /// Residual bound the pair is known to satisfy, if verified.
    pub verified: Option<f64>,
}

impl SolutionPair {
    pub fn new(u: ScalarField, v: ScalarField, a: f64) -> Result<Self, CrError> {
        if !u.domain.same_as(&v.domain) {
            return Err(CrError::DomainMismatch);
        }
        Ok(SolutionPair { u, v, a, verified: None })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.u.domain
    }

    /// Flags the pair as verified when its interior residual is below `tol`.
    pub fn verify(mut self, tol: f64) -> Self {
        self.verified = (self.residual_norm() <= tol).then_some(tol);
        self
    }

    /// Max over interior nodes of max(|r1|, |r2|).
    pub fn residual_norm(&self) -> f64 {
        let (r1, r2) = cr_residual(self);
        r1.max_abs_interior().max(r2.max_abs_interior())
    }

    /// Pointwise (u - u', v - v').
    pub fn difference(&self, other: &SolutionPair) -> Result<(ScalarField, ScalarField), CrError> {
        Ok((self.u.zip(&other.u, |a, b| a - b)?, self.v.zip(&other.v, |a, b| a - b)?))
    }
}

/// Samples an analytic pair on a grid.
pub fn sample_pair(pair: &AnalyticPair, grid: &Arc<GridDomain>, a: f64) -> SolutionPair {
    let uv: Vec<(f64, f64)> = grid.nodes().iter().map(|n| pair.eval(n.x, n.y)).collect();
    let u = ScalarField { domain: Arc::clone(grid), values: uv.iter().map(|p| p.0).collect(), valid: None };
    let v = ScalarField { domain: Arc::clone(grid), values: uv.iter().map(|p| p.1).collect(), valid: None };
    SolutionPair { u, v, a, verified: None }
}

/// Discrete residuals r1 = u_x - v_y and r2 = v_x + 2 (v^2+y^2+a^2)^{1/2} u_y
/// at interior nodes; boundary nodes are flagged invalid.
pub fn cr_residual(p: &SolutionPair) -> (ScalarField, ScalarField) {
    let grid = p.domain();
    let (ux, uy) = field_gradient(&p.u);
    let (vx, vy) = field_gradient(&p.v);
    let n = grid.node_count();
    let mut r1 = vec![f64::NAN; n];
    let mut r2 = vec![f64::NAN; n];
    let mut valid = vec![false; n];
    for &k in grid.interior() {
        if !(ux.is_valid(k) && vx.is_valid(k) && p.v.is_valid(k)) {
            continue;
        }
        let y = grid.node(k).y;
        let s = (p.v.values[k].powi(2) + y * y + p.a * p.a).sqrt();
        r1[k] = ux.values[k] - vy.values[k];
        r2[k] = vx.values[k] + 2.0 * s * uy.values[k];
        valid[k] = true;
    }
    (
        ScalarField { domain: Arc::clone(grid), values: r1, valid: Some(valid.clone()) },
        ScalarField { domain: Arc::clone(grid), values: r2, valid: Some(valid) },
    )
}

/// Path-independence diagnostics of a discrete line integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathAudit {
    /// Largest |circulation| / area over complete cells off the boundary.
    pub max_curl: f64,
    /// Largest of |∂q/∂x|, |∂p/∂y| over the same cells.
    pub curl_scale: f64,
    /// Largest disagreement between the x-first and y-first spanning trees.
    pub max_path_gap: f64,
}

/// Default bound on the cell curl accepted by path integration, relative to
/// max(curl_scale, 1).
pub const DEFAULT_MAX_CURL: f64 = 0.25;

/// Integrates the one-form `p dx + q dy` from `anchor` by the trapezoidal
/// rule along grid edges. Values are taken from the x-first spanning tree.
pub fn integrate_one_form(
    grid: &Arc<GridDomain>,
    p: &[f64],
    q: &[f64],
    anchor: usize,
    curl_tolerance: f64,
) -> Result<(ScalarField, PathAudit), CrError> {
    if anchor >= grid.node_count() {
        return Err(CrError::BadAnchor(anchor));
    }
    let edges = grid.edges();
    let increment = |e: usize, from: usize| {
        let edge = edges[e];
        let coeff = if edge.axis == Axis::X { p } else { q };
        let step = 0.5 * (coeff[edge.a] + coeff[edge.b]) * edge.length;
        if from == edge.a {
            step
        } else {
            -step
        }
    };
    let tree = |first: Axis| {
        let second = if first == Axis::X { Axis::Y } else { Axis::X };
        let mut values = vec![f64::NAN; grid.node_count()];
        values[anchor] = 0.0;
        let mut queue = VecDeque::from([anchor]);
        while let Some(k) = queue.pop_front() {
            for pass in [first, second] {
                for &(e, other) in grid.adjacency(k) {
                    if edges[e].axis == pass && values[other].is_nan() {
                        values[other] = values[k] + increment(e, k);
                        queue.push_back(other);
                    }
                }
            }
        }
        values
    };
    let primary = tree(Axis::X);
    let secondary = tree(Axis::Y);
    let max_path_gap = primary.iter().zip(&secondary).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    // Complete cells, each found from its bottom edge.
    let up = |k: usize| {
        grid.adjacency(k).iter().copied().find(|&(id, _)| edges[id].axis == Axis::Y && edges[id].a == k)
    };
    let (mut max_curl, mut curl_scale): (f64, f64) = (0.0, 0.0);
    for (bottom, e) in edges.iter().enumerate() {
        if e.axis != Axis::X {
            continue;
        }
        let (sw, se) = (e.a, e.b);
        let (Some((east, ne)), Some((west, nw))) = (up(se), up(sw)) else { continue };
        let Some(&(top, _)) =
            grid.adjacency(nw).iter().find(|&&(id, other)| other == ne && edges[id].axis == Axis::X)
        else {
            continue;
        };
        // Boundary-node gradients are one-sided fits; their cells do not
        // measure closedness.
        if [sw, se, ne, nw].iter().any(|&k| grid.is_boundary(k)) {
            continue;
        }
        let area = e.length * edges[east].length;
        // ∂q/∂x and -∂p/∂y from edge averages; they cancel for closed forms.
        let dq = (increment(east, se) + increment(west, nw)) / area;
        let dp = (increment(bottom, sw) + increment(top, ne)) / area;
        max_curl = max_curl.max((dq + dp).abs());
        curl_scale = curl_scale.max(dq.abs()).max(dp.abs());
    }
    if max_curl > curl_tolerance * curl_scale.max(1.0) {
        return Err(CrError::PathDependenceExceedsTolerance { curl: max_curl, scale: curl_scale, tolerance: curl_tolerance });
    }
    let audit = PathAudit { max_curl, curl_scale, max_path_gap };
    Ok((ScalarField { domain: Arc::clone(grid), values: primary, valid: None }, audit))
}

/// Potential f with f_x = v, f_y = u and f(anchor) = 0.
pub fn potential_from_pair(p: &SolutionPair, anchor: usize) -> Result<ScalarField, CrError> {
    potential_from_pair_audited(p, anchor, DEFAULT_MAX_CURL).map(|(f, _)| f)
}

pub fn potential_from_pair_audited(
    p: &SolutionPair,
    anchor: usize,
    curl_tolerance: f64,
) -> Result<(ScalarField, PathAudit), CrError> {
    integrate_one_form(p.domain(), &p.v.values, &p.u.values, anchor, curl_tolerance)
}

/// The pair (f_y, f_x) of a potential.
pub fn pair_from_potential(f: &ScalarField, a: f64) -> SolutionPair {
    let (fx, fy) = field_gradient(f);
    SolutionPair { u: fy, v: fx, a, verified: None }
}

/// Reconstructs u from v through u_x = v_y, u_y = -(1/2)(v^2+y^2+a^2)^{-1/2} v_x,
/// with u(anchor) = 0.
pub fn u_from_v(v: &ScalarField, a: f64, anchor: usize) -> Result<ScalarField, CrError> {
    u_from_v_audited(v, a, anchor, DEFAULT_MAX_CURL).map(|(u, _)| u)
}

pub fn u_from_v_audited(
    v: &ScalarField,
    a: f64,
    anchor: usize,
    curl_tolerance: f64,
) -> Result<(ScalarField, PathAudit), CrError> {
    if a == 0.0 {
        return Err(CrError::ZeroA);
    }
    let grid = &v.domain;
    let (vx, vy) = field_gradient(v);
    let q: Vec<f64> = (0..grid.node_count())
        .map(|k| {
            let y = grid.node(k).y;
            -0.5 * vx.values[k] / (v.values[k].powi(2) + y * y + a * a).sqrt()
        })
        .collect();
    integrate_one_form(grid, &vy.values, &q, anchor, curl_tolerance)
}

/// Relative threshold on the discrete Jacobian determinant below which the
/// map is treated as singular.
pub const INJECTIVITY_THRESHOLD: f64 = 1e-8;

/// Inverts the map (x, y) -> (u, v): the returned pair lives on a rectangle
/// covering the image, with u' = x and v' = y resampled by piecewise-linear
/// interpolation. Lattice nodes outside the image are flagged invalid.
pub fn inverse_pair(p: &SolutionPair, nx: usize, ny: usize) -> Result<SolutionPair, CrError> {
    let grid = p.domain();
    let valid_node = |k: usize| p.u.is_valid(k) && p.v.is_valid(k);
    let images: Vec<[f64; 2]> = (0..grid.node_count())
        .map(|k| if valid_node(k) { [p.u.values[k], p.v.values[k]] } else { [f64::NAN; 2] })
        .collect();
    let src = grid.mesh();
    let triangles: Vec<[usize; 3]> =
        src.triangles.iter().copied().filter(|t| t.iter().all(|&k| valid_node(k))).collect();
    if triangles.is_empty() {
        return Err(CrError::NonInjectiveMap("no valid triangles".into()));
    }

    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for t in &triangles {
        for &k in t {
            let [u, v] = images[k];
            let n = grid.node(k);
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
            xmin = xmin.min(n.x);
            xmax = xmax.max(n.x);
            ymin = ymin.min(n.y);
            ymax = ymax.max(n.y);
        }
    }
    let scale = ((umax - umin).hypot(vmax - vmin) / (xmax - xmin).hypot(ymax - ymin)).powi(2);
    for t in &triangles {
        let source_area = signed_area(src.points[t[0]], src.points[t[1]], src.points[t[2]]);
        let image_area = signed_area(images[t[0]], images[t[1]], images[t[2]]);
        let det = image_area / source_area;
        if !(det > INJECTIVITY_THRESHOLD * scale) {
            let c = grid.node(t[0]);
            return Err(CrError::NonInjectiveMap(format!(
                "discrete Jacobian {det:.3e} near ({:.4}, {:.4})",
                c.x, c.y
            )));
        }
    }
    let image_mesh = TriMesh::new(images.clone(), triangles.clone(), 0.0);
    // Orientation-preserving triangles can still overlap when the map
    // folds over globally; detect any image vertex inside a triangle that
    // does not contain it.
    let mut used = vec![false; grid.node_count()];
    for t in &triangles {
        for &k in t {
            used[k] = true;
        }
    }
    for k in (0..grid.node_count()).filter(|&k| used[k]) {
        if let Some(t) = image_mesh.containing_triangles(images[k], 1e-9).find(|&t| !image_mesh.triangles[t].contains(&k)) {
            let n = grid.node(k);
            return Err(CrError::NonInjectiveMap(format!(
                "image of ({:.4}, {:.4}) overlaps triangle {t}",
                n.x, n.y
            )));
        }
    }

    let target = build_grid(GridShape::Rectangle { x0: umin, x1: umax, y0: vmin, y1: vmax }, nx, ny)?;
    let xs: Vec<f64> = grid.nodes().iter().map(|n| n.x).collect();
    let ys: Vec<f64> = grid.nodes().iter().map(|n| n.y).collect();
    let slack = 1e-10;
    let mut up = Vec::with_capacity(target.node_count());
    let mut vp = Vec::with_capacity(target.node_count());
    let mut valid = Vec::with_capacity(target.node_count());
    for n in target.nodes() {
        match image_mesh.locate([n.x, n.y], slack) {
            Some(loc) => {
                up.push(image_mesh.eval(&xs, &loc));
                vp.push(image_mesh.eval(&ys, &loc));
                valid.push(true);
            }
            None => {
                up.push(f64::NAN);
                vp.push(f64::NAN);
                valid.push(false);
            }
        }
    }
    let valid = Some(valid);
    Ok(SolutionPair {
        u: ScalarField { domain: Arc::clone(&target), values: up, valid: valid.clone() },
        v: ScalarField { domain: target, values: vp, valid },
        a: p.a,
        verified: None,
    })
}
