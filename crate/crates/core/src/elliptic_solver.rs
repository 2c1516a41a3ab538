//! Newton solvers for the Dirichlet problems of the potential equation
//!
//! ```text
//! P(f) = d/dx A(y, f_x) + 2 f_yy = 0
//! ```
//!
//! and the v-equation
//!
//! ```text
//! Q(v) = d/dx [(v^2+y^2+a^2)^{-1/2} v_x] + 2 v_yy = 0,
//! ```
//!
//! together with the discrete variational functional whose Euler-Lagrange
//! equation is P(f) = 0.
//!
//! Both operators are discretized in flux form on the axis-aligned stencils
//! of the grid. At an interior node with neighbour spacings hE, hW, hN, hS
//! and half-sums m_x = (hE+hW)/2, m_y = (hN+hS)/2,
//!
//! ```text
//! R = (F_E - F_W)/m_x + 2 [(w_N - w)/hN - (w - w_S)/hS]/m_y,
//! ```
//!
//! where F is A(y, slope) for P and c * slope for Q, with c evaluated at
//! the face average of v. Each face flux is increasing in the downstream
//! value, so both schemes satisfy a discrete maximum principle.

use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy_riemann::{u_from_v, CrError, SolutionPair};
use crate::domain_grid::{Axis, BoundaryFunction, GridDomain, GridError, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("a = 0 is rejected: the equations are not elliptic there")]
    ZeroA,
    #[error("A(y, v) is undefined at y = a = 0")]
    UndefinedCoefficient,
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("initial guess has {got} values, grid has {expected} nodes")]
    InitialGuessLength { expected: usize, got: usize },
    #[error("boundary data has non-finite samples")]
    NonFiniteBoundaryData,
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Cr(#[from] CrError),
}

/// Starting iterate for Newton's method; boundary nodes always carry φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialGuess {
    /// Discrete harmonic extension of φ (five-point Laplacian).
    HarmonicExtension,
    /// Mean of φ at every interior node.
    BoundaryMean,
    Constant { value: f64 },
    /// Interior values taken from a full nodal field.
    Nodal { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_newton_iters: usize,
    /// Sup-norm bound on the interior residual.
    pub newton_tol: f64,
    /// Largest Newton step fraction tried; backtracking halves from here.
    pub damping: f64,
    /// Relative sup-norm bound on the linearized residual of each step.
    pub linear_solver_tol: f64,
    /// Number of intermediate a-levels used when |a| is small.
    pub continuation_steps: usize,
    pub initial_guess: InitialGuess,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_newton_iters: 40,
            newton_tol: 1e-10,
            damping: 1.0,
            linear_solver_tol: 1e-10,
            continuation_steps: 6,
            initial_guess: InitialGuess::HarmonicExtension,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.newton_tol) || !positive(self.linear_solver_tol) {
            return Err(SolverError::InvalidOptions("tolerances must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::InvalidOptions("damping must lie in (0, 1]".into()));
        }
        if self.max_newton_iters == 0 {
            return Err(SolverError::InvalidOptions("max_newton_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Implies `final_residual <= newton_tol`.
    pub converged: bool,
    /// Newton steps taken, summed over continuation levels.
    pub iterations: usize,
    pub final_residual: f64,
    /// Smallest face coefficient (s^2+y^2+a^2)^{-1/2} met at accepted iterates.
    pub ellipticity_min: f64,
    /// Values of a solved for, including the target.
    pub continuation_levels: usize,
}

/// A(y, v) = asinh(v / (y^2+a^2)^{1/2}), the primitive in v of
/// (w^2+y^2+a^2)^{-1/2} vanishing at v = 0.
pub fn a_coefficient(y: f64, v: f64, a: f64) -> Result<f64, SolverError> {
    let r2 = y * y + a * a;
    if r2 == 0.0 {
        return Err(SolverError::UndefinedCoefficient);
    }
    Ok(asinh_ratio(v, r2))
}

/// B(y, v) = v A(y, v) - (v^2+y^2+a^2)^{1/2} + (y^2+a^2)^{1/2}, the
/// primitive in v of A vanishing at v = 0.
pub fn b_coefficient(y: f64, v: f64, a: f64) -> Result<f64, SolverError> {
    let r2 = y * y + a * a;
    if r2 == 0.0 {
        return Err(SolverError::UndefinedCoefficient);
    }
    Ok(b_value(v, r2))
}

fn asinh_ratio(v: f64, r2: f64) -> f64 {
    (v / r2.sqrt()).asinh()
}

// s - r rewritten as v^2/(s + r) to avoid cancellation for small v.
fn b_value(v: f64, r2: f64) -> f64 {
    let r = r2.sqrt();
    let s = (v * v + r2).sqrt();
    v * asinh_ratio(v, r2) - v * v / (s + r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Operator {
    Potential,
    Graph,
    Laplace,
}

struct Flux {
    value: f64,
    d_left: f64,
    d_right: f64,
    coefficient: f64,
}

impl Operator {
    fn y_factor(self) -> f64 {
        match self {
            Operator::Laplace => 1.0,
            _ => 2.0,
        }
    }

    /// Flux across the x-face from `left` to `right` at distance `h`.
    fn flux(self, y: f64, a: f64, left: f64, right: f64, h: f64) -> Flux {
        let slope = (right - left) / h;
        let r2 = y * y + a * a;
        match self {
            Operator::Potential => {
                let c = 1.0 / (slope * slope + r2).sqrt();
                Flux { value: asinh_ratio(slope, r2), d_left: -c / h, d_right: c / h, coefficient: c }
            }
            Operator::Graph => {
                let mean = 0.5 * (left + right);
                let c = 1.0 / (mean * mean + r2).sqrt();
                let dc = -0.5 * mean * c * c * c;
                Flux { value: c * slope, d_left: dc * slope - c / h, d_right: dc * slope + c / h, coefficient: c }
            }
            Operator::Laplace => Flux { value: slope, d_left: -1.0 / h, d_right: 1.0 / h, coefficient: 1.0 },
        }
    }
}

struct Assembly {
    /// Residual per unknown, ordered like `grid.interior()`.
    residual: Vec<f64>,
    triplets: Vec<Triplet<usize, usize, f64>>,
    coefficient_min: f64,
}

fn assemble(op: Operator, grid: &GridDomain, w: &[f64], a: f64, jacobian: bool) -> Assembly {
    let stencils = grid.stencils();
    let mut residual = Vec::with_capacity(stencils.len());
    let mut triplets = Vec::with_capacity(if jacobian { 5 * stencils.len() } else { 0 });
    let mut coefficient_min = f64::INFINITY;
    let yf = op.y_factor();
    for (row, st) in stencils.iter().enumerate() {
        let i = st.node;
        let y = grid.node(i).y;
        let (e, wst, n, s) = (st.east, st.west, st.north, st.south);
        let mx = 0.5 * (e.h + wst.h);
        let my = 0.5 * (n.h + s.h);
        let fe = op.flux(y, a, w[i], w[e.node], e.h);
        let fw = op.flux(y, a, w[wst.node], w[i], wst.h);
        coefficient_min = coefficient_min.min(fe.coefficient).min(fw.coefficient);
        let r = (fe.value - fw.value) / mx + yf * ((w[n.node] - w[i]) / n.h - (w[i] - w[s.node]) / s.h) / my;
        residual.push(r);
        if jacobian {
            let mut push = |node: usize, d: f64| {
                if let Some(col) = grid.unknown_index(node) {
                    triplets.push(Triplet::new(row, col, d));
                }
            };
            push(i, (fe.d_left - fw.d_right) / mx - yf * (1.0 / n.h + 1.0 / s.h) / my);
            push(e.node, fe.d_right / mx);
            push(wst.node, -fw.d_left / mx);
            push(n.node, yf / (n.h * my));
            push(s.node, yf / (s.h * my));
        }
    }
    Assembly { residual, triplets, coefficient_min }
}

fn sup_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, &x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

fn interior_field(grid: &Arc<GridDomain>, interior_values: &[f64]) -> ScalarField {
    let n = grid.node_count();
    let mut values = vec![f64::NAN; n];
    let mut valid = vec![false; n];
    for (&k, &r) in grid.interior().iter().zip(interior_values) {
        values[k] = r;
        valid[k] = true;
    }
    ScalarField { domain: Arc::clone(grid), values, valid: Some(valid) }
}

fn operator_residual(op: Operator, w: &ScalarField, a: f64) -> Result<ScalarField, SolverError> {
    if a == 0.0 {
        return Err(SolverError::ZeroA);
    }
    let asm = assemble(op, &w.domain, &w.values, a, false);
    Ok(interior_field(&w.domain, &asm.residual))
}

/// Discrete P(f) at interior nodes; boundary nodes are flagged invalid.
pub fn residual_p(f: &ScalarField, a: f64) -> Result<ScalarField, SolverError> {
    operator_residual(Operator::Potential, f, a)
}

/// Discrete Q(v) at interior nodes; boundary nodes are flagged invalid.
pub fn residual_q(v: &ScalarField, a: f64) -> Result<ScalarField, SolverError> {
    operator_residual(Operator::Graph, v, a)
}

/// Solves J x = rhs with a sparse LU factorization, refining once when the
/// linear residual exceeds `tol` relative to the right-hand side.
fn sparse_solve(
    n: usize,
    triplets: &[Triplet<usize, usize, f64>],
    rhs: &[f64],
    tol: f64,
) -> Result<Vec<f64>, SolverError> {
    let jac = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, triplets)
        .map_err(|e| SolverError::LinearSolve(format!("{e:?}")))?;
    let lu = jac.sp_lu().map_err(|e| SolverError::LinearSolve(format!("{e:?}")))?;
    let b = Col::<f64>::from_fn(n, |i| rhs[i]);
    let mut x = lu.solve(&b);
    let scale = sup_norm(rhs).max(f64::MIN_POSITIVE);
    for _ in 0..2 {
        let r = &b - &jac * &x;
        let gap = (0..n).fold(0.0f64, |m, i| m.max(r[i].abs()));
        if !gap.is_finite() {
            return Err(SolverError::LinearSolve("non-finite solution".into()));
        }
        if gap <= tol * scale {
            break;
        }
        x += lu.solve(&r);
    }
    Ok((0..n).map(|i| x[i]).collect())
}

/// Nodal values with boundary nodes set from φ.
fn with_boundary(phi: &BoundaryFunction, mut w: Vec<f64>) -> Vec<f64> {
    for (&k, &p) in phi.domain.boundary_loop().iter().zip(&phi.samples) {
        w[k] = p;
    }
    w
}

fn initial_iterate(phi: &BoundaryFunction, guess: &InitialGuess) -> Result<Vec<f64>, SolverError> {
    let grid = &phi.domain;
    let n = grid.node_count();
    let fill = |c: f64| with_boundary(phi, vec![c; n]);
    Ok(match guess {
        InitialGuess::HarmonicExtension => harmonic_extension(phi)?,
        InitialGuess::BoundaryMean => {
            fill(phi.samples.iter().sum::<f64>() / phi.samples.len() as f64)
        }
        InitialGuess::Constant { value } => fill(*value),
        InitialGuess::Nodal { values } => {
            if values.len() != n {
                return Err(SolverError::InitialGuessLength { expected: n, got: values.len() });
            }
            with_boundary(phi, values.clone())
        }
    })
}

/// Discrete harmonic extension of φ with the five-point Laplacian.
pub fn harmonic_extension(phi: &BoundaryFunction) -> Result<Vec<f64>, SolverError> {
    let grid = &phi.domain;
    let w = with_boundary(phi, vec![0.0; grid.node_count()]);
    let asm = assemble(Operator::Laplace, grid, &w, 1.0, true);
    let rhs: Vec<f64> = asm.residual.iter().map(|r| -r).collect();
    let dx = sparse_solve(rhs.len(), &asm.triplets, &rhs, 1e-13)?;
    let mut w = w;
    for (&k, d) in grid.interior().iter().zip(dx) {
        w[k] += d;
    }
    Ok(w)
}

/// Values of a visited by continuation: a geometric sequence from
/// 0.05 * scale (with the sign of a) down to a when |a| is below that.
fn continuation_levels(a: f64, scale: f64, steps: usize) -> Vec<f64> {
    let start = 0.05 * scale;
    if steps == 0 || !(a.abs() < start) {
        return vec![a];
    }
    let start = start.copysign(a);
    let ratio = a / start;
    (0..=steps).map(|k| if k == steps { a } else { start * ratio.powf(k as f64 / steps as f64) }).collect()
}

struct NewtonOutcome {
    converged: bool,
    iterations: usize,
    residual: f64,
    coefficient_min: f64,
}

/// Damped Newton on the interior unknowns of `w`, backtracking on the
/// sup-norm of the residual.
fn newton(op: Operator, grid: &GridDomain, w: &mut [f64], a: f64, opts: &SolverOptions) -> Result<NewtonOutcome, SolverError> {
    let interior = grid.interior();
    let m = interior.len();
    let mut asm = assemble(op, grid, w, a, true);
    let mut norm = sup_norm(&asm.residual);
    let mut coefficient_min = asm.coefficient_min;
    let mut iterations = 0;
    while norm > opts.newton_tol && iterations < opts.max_newton_iters {
        let rhs: Vec<f64> = asm.residual.iter().map(|r| -r).collect();
        let step = sparse_solve(m, &asm.triplets, &rhs, opts.linear_solver_tol)?;
        iterations += 1;
        let mut t = opts.damping;
        let mut trial = w.to_vec();
        let accepted = loop {
            for (&k, d) in interior.iter().zip(&step) {
                trial[k] = w[k] + t * d;
            }
            let next = assemble(op, grid, &trial, a, true);
            let next_norm = sup_norm(&next.residual);
            if next_norm < (1.0 - 1e-4 * t) * norm {
                break Some((next, next_norm));
            }
            t *= 0.5;
            if t < 1e-4 {
                break None;
            }
        };
        let Some((next, next_norm)) = accepted else { break };
        w.copy_from_slice(&trial);
        asm = next;
        norm = next_norm;
        coefficient_min = coefficient_min.min(asm.coefficient_min);
    }
    Ok(NewtonOutcome { converged: norm <= opts.newton_tol, iterations, residual: norm, coefficient_min })
}

fn solve_dirichlet(
    op: Operator,
    phi: &BoundaryFunction,
    a: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport), SolverError> {
    if a == 0.0 {
        return Err(SolverError::ZeroA);
    }
    opts.validate()?;
    if phi.samples.iter().any(|s| !s.is_finite()) {
        return Err(SolverError::NonFiniteBoundaryData);
    }
    let grid = &phi.domain;
    let mut w = initial_iterate(phi, &opts.initial_guess)?;
    let (x0, x1, y0, y1) = grid.shape().bounds();
    let scale = phi.samples.iter().fold(0.5 * (x1 - x0).hypot(y1 - y0), |m, s| m.max(s.abs()));
    let levels = continuation_levels(a, scale, opts.continuation_steps);
    let mut report = SolveReport {
        converged: false,
        iterations: 0,
        final_residual: f64::INFINITY,
        ellipticity_min: f64::INFINITY,
        continuation_levels: levels.len(),
    };
    for &level in &levels {
        let out = newton(op, grid, &mut w, level, opts)?;
        report.iterations += out.iterations;
        report.final_residual = out.residual;
        report.ellipticity_min = report.ellipticity_min.min(out.coefficient_min);
        report.converged = out.converged;
        if !out.converged {
            break;
        }
    }
    Ok((ScalarField { domain: Arc::clone(grid), values: w, valid: None }, report))
}

/// Solves P(f) = 0 with f = φ on the boundary. Non-convergence is reported
/// through `SolveReport::converged`, not as an error.
pub fn solve_dirichlet_f(
    phi: &BoundaryFunction,
    a: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport), SolverError> {
    solve_dirichlet(Operator::Potential, phi, a, opts)
}

/// Solves Q(v) = 0 with v = φ on the boundary and recovers u with
/// u(anchor) = 0. A converged pair is flagged verified with its discrete
/// Cauchy-Riemann residual.
pub fn solve_dirichlet_v(
    phi: &BoundaryFunction,
    a: f64,
    anchor: usize,
    opts: &SolverOptions,
) -> Result<(SolutionPair, SolveReport), SolverError> {
    let (v, report) = solve_dirichlet(Operator::Graph, phi, a, opts)?;
    let u = u_from_v(&v, a, anchor)?;
    let mut pair = SolutionPair::new(u, v, a)?;
    if report.converged {
        pair.verified = Some(pair.residual_norm());
    }
    Ok((pair, report))
}

/// Discrete I(f) = ∫ B(y, f_x) + f_y^2: each grid edge contributes
/// width * length * integrand evaluated at its difference quotient.
pub fn functional_i(f: &ScalarField, a: f64) -> Result<f64, SolverError> {
    if a == 0.0 {
        return Err(SolverError::ZeroA);
    }
    let grid = &f.domain;
    let w = &f.values;
    let mut total = 0.0;
    for e in grid.edges() {
        let s = (w[e.b] - w[e.a]) / e.length;
        let density = match e.axis {
            Axis::X => {
                let y = grid.node(e.a).y;
                b_value(s, y * y + a * a)
            }
            Axis::Y => s * s,
        };
        total += e.width * e.length * density;
    }
    Ok(total)
}

/// Exact gradient of `functional_i` with respect to interior node values;
/// boundary nodes are flagged invalid. On rectangles it equals
/// -(cell area) * residual_p.
pub fn functional_gradient(f: &ScalarField, a: f64) -> Result<ScalarField, SolverError> {
    if a == 0.0 {
        return Err(SolverError::ZeroA);
    }
    let grid = &f.domain;
    let w = &f.values;
    let n = grid.node_count();
    let mut g = vec![0.0; n];
    for e in grid.edges() {
        let s = (w[e.b] - w[e.a]) / e.length;
        let d = match e.axis {
            Axis::X => {
                let y = grid.node(e.a).y;
                asinh_ratio(s, y * y + a * a)
            }
            Axis::Y => 2.0 * s,
        };
        g[e.b] += e.width * d;
        g[e.a] -= e.width * d;
    }
    let mut valid = vec![false; n];
    for (k, gk) in g.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *gk = f64::NAN;
        } else {
            valid[k] = true;
        }
    }
    Ok(ScalarField { domain: Arc::clone(grid), values: g, valid: Some(valid) })
}
