//! Reusable numerical experiments: identity suites, refinement ladders with
//! observed orders, and randomized property trials for the solvers, the
//! counting bounds and the lift. The CLI scorecard and the acceptance suite
//! are both assembled from these.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cauchy_riemann::{cr_residual, pair_from_potential, potential_from_pair, sample_pair, SolutionPair};
use crate::domain_grid::{build_grid, field_gradient, BoundaryFunction, GridDomain, GridShape, ScalarField};
use crate::elliptic_solver::{
    functional_gradient, functional_i, solve_dirichlet_f, solve_dirichlet_v, InitialGuess, SolveReport, SolverError,
    SolverOptions,
};
use crate::explicit_solutions::{
    affine_pair, analytic_residual, catenoid_pair, harvey_lawson_eval, harvey_lawson_pair, paraboloid_union_pair,
    weighted_homogeneity_check,
};
use crate::sl_geometry::{cross_product, holomorphic_volume, kahler_form, metric, random_su3, verify_sl, C3Vector, SlReport};
use crate::winding::{audit_count_morse, audit_count_transverse, find_zeros, WindingError};

/// Least-squares slope of log(error) against log(h).
pub fn observed_order(h: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h.iter().zip(errors).map(|(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Errors along a refinement sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub sizes: Vec<usize>,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// Order between consecutive levels.
    pub pairwise_orders: Vec<f64>,
    /// Least-squares order over all levels.
    pub fitted_order: f64,
}

impl Ladder {
    pub fn new(sizes: Vec<usize>, h: Vec<f64>, errors: Vec<f64>) -> Self {
        let pairwise_orders = (1..errors.len())
            .map(|i| (errors[i - 1] / errors[i]).ln() / (h[i - 1] / h[i]).ln())
            .collect();
        let fitted_order = observed_order(&h, &errors);
        Ladder { sizes, h, errors, pairwise_orders, fitted_order }
    }

    /// The smallest of the fitted and pairwise orders.
    pub fn worst_order(&self) -> f64 {
        self.pairwise_orders.iter().cloned().fold(self.fitted_order, f64::min)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// C^3 algebra

/// Largest relative defects of the cross-product identities over random
/// pairs: g- and ω-orthogonality of r×s to r and s, the norm identity,
/// Im Ω(r, s, r×s) = 0, and SU(3)-equivariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefects {
    pub metric_orthogonality: f64,
    pub kahler_orthogonality: f64,
    pub norm_identity: f64,
    pub im_volume: f64,
    pub su3_equivariance: f64,
}

impl IdentityDefects {
    pub fn max(&self) -> f64 {
        self.metric_orthogonality
            .max(self.kahler_orthogonality)
            .max(self.norm_identity)
            .max(self.im_volume)
            .max(self.su3_equivariance)
    }
}

pub fn cross_product_identities(samples: usize, seed: u64) -> IdentityDefects {
    let mut rng = rng(seed);
    let vec = |rng: &mut ChaCha8Rng| -> C3Vector {
        C3Vector::from_fn(|_, _| num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    };
    let mut d = IdentityDefects {
        metric_orthogonality: 0.0,
        kahler_orthogonality: 0.0,
        norm_identity: 0.0,
        im_volume: 0.0,
        su3_equivariance: 0.0,
    };
    for _ in 0..samples {
        let (r, s) = (vec(&mut rng), vec(&mut rng));
        let rs = cross_product(&r, &s);
        let (nr, ns) = (r.norm(), s.norm());
        let scale = nr * nr * ns * ns;
        d.metric_orthogonality = d.metric_orthogonality.max(metric(&r, &rs).abs().max(metric(&s, &rs).abs()) / scale);
        d.kahler_orthogonality =
            d.kahler_orthogonality.max(kahler_form(&r, &rs).abs().max(kahler_form(&s, &rs).abs()) / scale);
        let rhs = scale - metric(&r, &s).powi(2) - kahler_form(&r, &s).powi(2);
        d.norm_identity = d.norm_identity.max((rs.norm_squared() - rhs).abs() / scale);
        d.im_volume = d.im_volume.max(holomorphic_volume(&r, &s, &rs).im.abs() / (scale * nr * ns));
        let u = random_su3(&mut rng);
        let lhs = u * rs;
        let rhs = cross_product(&(u * r), &(u * s));
        d.su3_equivariance = d.su3_equivariance.max((lhs - rhs).norm() / (nr * ns));
    }
    d
}

// ---------------------------------------------------------------------------
// Explicit families

/// Largest analytic residuals over random points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitResiduals {
    pub affine: f64,
    pub catenoid: f64,
    pub paraboloid_union: f64,
}

pub fn explicit_residuals(samples: usize, seed: u64) -> ExplicitResiduals {
    let mut rng = rng(seed);
    let mut out = ExplicitResiduals { affine: 0.0, catenoid: 0.0, paraboloid_union: 0.0 };
    let worst = |r: (f64, f64)| r.0.abs().max(r.1.abs());
    for _ in 0..samples {
        let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let pair = affine_pair(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let a = rng.gen_range(-2.0..2.0);
        out.affine = out.affine.max(worst(analytic_residual(&pair, a, x, y).expect("affine jets exist")));
        out.catenoid = out.catenoid.max(worst(analytic_residual(&catenoid_pair(), 0.0, x, y).expect("smooth")));
        let y = if y == 0.0 { 0.5 } else { y };
        out.paraboloid_union =
            out.paraboloid_union.max(worst(analytic_residual(&paraboloid_union_pair(), 0.0, x, y).expect("y != 0")));
    }
    out
}

/// Finite-difference Cauchy-Riemann residuals of the sampled Harvey-Lawson
/// pair on [0.5, 1.5]^2 (away from the a = 0 singularity at the origin).
pub fn harvey_lawson_fd_ladder(a: f64, sizes: &[usize]) -> Ladder {
    let shape = GridShape::Rectangle { x0: 0.5, x1: 1.5, y0: 0.5, y1: 1.5 };
    let mut h = Vec::new();
    let mut errors = Vec::new();
    for &n in sizes {
        let g = build_grid(shape, n, n).expect("valid grid");
        let (r1, r2) = cr_residual(&sample_pair(&harvey_lawson_pair(a), &g, a));
        h.push(g.spacing().0);
        errors.push(r1.max_abs_interior().max(r2.max_abs_interior()));
    }
    Ladder::new(sizes.to_vec(), h, errors)
}

/// Structural checks of the Harvey-Lawson family over random points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarveyLawsonStructure {
    /// Points violating u·y ≤ 0, v·x ≥ 0, (u = 0 ⇔ y = 0) or (v = 0 ⇔ x = 0).
    pub sign_violations: usize,
    /// Largest error of the closed forms on the axes x = 0 and y = 0.
    pub axis_formula_error: f64,
    /// Weighted-homogeneity deviation of the a = 0 family.
    pub homogeneity_deviation: f64,
}

pub fn harvey_lawson_structure(samples: usize, seed: u64) -> HarveyLawsonStructure {
    let mut rng = rng(seed);
    let mut out = HarveyLawsonStructure { sign_violations: 0, axis_formula_error: 0.0, homogeneity_deviation: 0.0 };
    for &a in &[0.0, 0.25, 1.0] {
        for i in 0..samples {
            let mut x: f64 = rng.gen_range(-2.0..2.0);
            let mut y: f64 = rng.gen_range(-2.0..2.0);
            // Every tenth point lies on an axis.
            match i % 10 {
                0 => x = 0.0,
                5 => y = 0.0,
                _ => {}
            }
            let (u, v) = harvey_lawson_eval(a, x, y);
            let ok = u * y <= 0.0 && v * x >= 0.0 && ((u == 0.0) == (y == 0.0)) && ((v == 0.0) == (x == 0.0));
            out.sign_violations += usize::from(!ok);
            let t: f64 = rng.gen_range(-2.0..2.0);
            let (u_axis, _) = harvey_lawson_eval(a, 0.0, t);
            let (_, v_axis) = harvey_lawson_eval(a, t, 0.0);
            let u_exact = -t / (a.abs() + (t * t + a * a).sqrt()).sqrt();
            let u_exact = if t == 0.0 { 0.0 } else { u_exact };
            let v_exact = t * (t * t + 2.0 * a.abs()).sqrt();
            out.axis_formula_error = out.axis_formula_error.max((u_axis - u_exact).abs()).max((v_axis - v_exact).abs());
        }
    }
    let triples: Vec<(f64, f64, f64)> =
        (0..samples).map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.2..3.0))).collect();
    out.homogeneity_deviation = weighted_homogeneity_check(&triples).expect("positive scales");
    out
}

// ---------------------------------------------------------------------------
// Dirichlet solvers

/// Random smooth boundary data: c0 + Σ_{k≤3} (a_k cos kθ + b_k sin kθ)/k
/// in the polar angle about the centre of the shape, coefficients in
/// [-0.5, 0.5].
pub fn random_boundary_data(grid: &Arc<GridDomain>, rng: &mut impl Rng) -> BoundaryFunction {
    let c0: f64 = rng.gen_range(-0.5..0.5);
    let coeffs: Vec<(f64, f64)> = (0..3).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
    let (x0, x1, y0, y1) = grid.shape().bounds();
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    BoundaryFunction::from_xy(grid, |x, y| {
        let t = (y - cy).atan2(x - cx);
        c0 + coeffs
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let k = (i + 1) as f64;
                (a * (k * t).cos() + b * (k * t).sin()) / k
            })
            .sum::<f64>()
    })
}

fn sup_diff(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values.iter().zip(&b.values).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// One level of the v-solver refinement study on the unit disc with
/// Harvey-Lawson boundary data.
#[derive(Debug, Clone)]
pub struct VLevel {
    pub n: usize,
    pub h: f64,
    pub error: f64,
    pub report: SolveReport,
    pub pair: SolutionPair,
}

pub fn v_solver_levels(a: f64, sizes: &[usize], opts: &SolverOptions) -> Result<Vec<VLevel>, SolverError> {
    sizes
        .iter()
        .map(|&n| {
            let g = build_grid(GridShape::unit_disc(), n, n)?;
            let exact = g.sample(|x, y| harvey_lawson_eval(a, x, y).1);
            let (pair, report) = solve_dirichlet_v(&exact.boundary_trace(), a, g.center_node(), opts)?;
            let error = sup_diff(&pair.v, &exact);
            Ok(VLevel { n, h: g.spacing().0, error, report, pair })
        })
        .collect()
}

pub fn ladder_of(levels: &[VLevel], pick: impl Fn(&VLevel) -> f64) -> Ladder {
    Ladder::new(levels.iter().map(|l| l.n).collect(), levels.iter().map(|l| l.h).collect(), levels.iter().map(pick).collect())
}

/// f-solver refinement on the unit disc against the path-integrated
/// Harvey-Lawson potential, which also supplies the boundary data.
pub fn f_solver_ladder(a: f64, sizes: &[usize], opts: &SolverOptions) -> Result<(Ladder, Vec<SolveReport>), SolverError> {
    let mut h = Vec::new();
    let mut errors = Vec::new();
    let mut reports = Vec::new();
    for &n in sizes {
        let g = build_grid(GridShape::unit_disc(), n, n)?;
        let oracle = potential_from_pair(&sample_pair(&harvey_lawson_pair(a), &g, a), g.center_node())?;
        let (f, report) = solve_dirichlet_f(&oracle.boundary_trace(), a, opts)?;
        h.push(g.spacing().0);
        errors.push(sup_diff(&f, &oracle));
        reports.push(report);
    }
    Ok((Ladder::new(sizes.to_vec(), h, errors), reports))
}

/// Maximum-principle measurements for one boundary datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleTrial {
    pub converged: bool,
    /// Largest excursion of f outside [min φ, max φ].
    pub f_overshoot: f64,
    pub v_overshoot: f64,
    /// max interior |v_x| minus max near-boundary |v_x|, where near-boundary
    /// means boundary and ring nodes.
    pub vx_excess: f64,
    pub h: f64,
}

pub fn max_principle_trial(phi: &BoundaryFunction, a: f64, opts: &SolverOptions) -> Result<MaxPrincipleTrial, SolverError> {
    let grid = &phi.domain;
    let (lo, hi) = (phi.min(), phi.max());
    let overshoot = |w: &ScalarField| w.values.iter().map(|&x| (x - hi).max(lo - x)).fold(0.0, f64::max);
    let (f, rf) = solve_dirichlet_f(phi, a, opts)?;
    let (p, rv) = solve_dirichlet_v(phi, a, grid.center_node(), opts)?;
    let (vx, _) = field_gradient(&p.v);
    let near = |k: usize| grid.is_boundary(k) || grid.is_ring(k);
    let inner = vx.max_abs_where(|k| !near(k));
    let outer = vx.max_abs_where(near);
    Ok(MaxPrincipleTrial {
        converged: rf.converged && rv.converged,
        f_overshoot: overshoot(&f),
        v_overshoot: overshoot(&p.v),
        vx_excess: inner - outer,
        h: grid.spacing().0.max(grid.spacing().1),
    })
}

/// Comparison-principle measurements for φ1 ≤ φ2 and φ1 ≤ φ2' - gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTrial {
    pub converged: bool,
    /// max (w1 - w2) for the weakly ordered data.
    pub f_violation: f64,
    pub v_violation: f64,
    /// min (w2' - w1) for the strictly ordered data.
    pub f_strict_gap: f64,
    pub v_strict_gap: f64,
}

pub fn comparison_trial(
    phi1: &BoundaryFunction,
    bump: &BoundaryFunction,
    gap: f64,
    a: f64,
    opts: &SolverOptions,
) -> Result<ComparisonTrial, SolverError> {
    let grid = &phi1.domain;
    let shifted = |shift: f64| {
        let samples = phi1.samples.iter().zip(&bump.samples).map(|(p, b)| p + b + shift).collect();
        BoundaryFunction::new(Arc::clone(grid), samples).expect("same loop")
    };
    let (phi2, phi3) = (shifted(0.0), shifted(gap));
    let anchor = grid.center_node();
    let mut converged = true;
    let mut solve_f = |phi: &BoundaryFunction| -> Result<ScalarField, SolverError> {
        let (f, r) = solve_dirichlet_f(phi, a, opts)?;
        converged &= r.converged;
        Ok(f)
    };
    let (f1, f2, f3) = (solve_f(phi1)?, solve_f(&phi2)?, solve_f(&phi3)?);
    let mut solve_v = |phi: &BoundaryFunction| -> Result<ScalarField, SolverError> {
        let (p, r) = solve_dirichlet_v(phi, a, anchor, opts)?;
        converged &= r.converged;
        Ok(p.v)
    };
    let (v1, v2, v3) = (solve_v(phi1)?, solve_v(&phi2)?, solve_v(&phi3)?);
    let max_excess = |x: &ScalarField, y: &ScalarField| x.values.iter().zip(&y.values).map(|(p, q)| p - q).fold(f64::NEG_INFINITY, f64::max);
    Ok(ComparisonTrial {
        converged,
        f_violation: max_excess(&f1, &f2),
        v_violation: max_excess(&v1, &v2),
        f_strict_gap: -max_excess(&f1, &f3),
        v_strict_gap: -max_excess(&v1, &v3),
    })
}

/// Non-negative smooth bump on the boundary, peaking at a random angle.
pub fn random_bump(grid: &Arc<GridDomain>, rng: &mut impl Rng) -> BoundaryFunction {
    let (t0, amp): (f64, f64) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.05..0.5));
    let (x0, x1, y0, y1) = grid.shape().bounds();
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    BoundaryFunction::from_xy(grid, |x, y| amp * (0.5 + 0.5 * ((y - cy).atan2(x - cx) - t0).cos()).powi(2))
}

/// Largest sup-norm disagreement between solutions started from the
/// harmonic extension, the boundary mean and a constant above max φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniquenessTrial {
    pub converged: bool,
    pub f_spread: f64,
    pub v_spread: f64,
}

pub fn uniqueness_trial(phi: &BoundaryFunction, a: f64, opts: &SolverOptions) -> Result<UniquenessTrial, SolverError> {
    let guesses = [
        InitialGuess::HarmonicExtension,
        InitialGuess::BoundaryMean,
        InitialGuess::Constant { value: phi.max() + 1.0 },
    ];
    let mut converged = true;
    let mut fs = Vec::new();
    let mut vs = Vec::new();
    for g in guesses {
        let o = SolverOptions { initial_guess: g, ..opts.clone() };
        let (f, rf) = solve_dirichlet_f(phi, a, &o)?;
        let (p, rv) = solve_dirichlet_v(phi, a, phi.domain.center_node(), &o)?;
        converged &= rf.converged && rv.converged;
        fs.push(f);
        vs.push(p.v);
    }
    let spread = |w: &[ScalarField]| sup_diff(&w[0], &w[1]).max(sup_diff(&w[0], &w[2])).max(sup_diff(&w[1], &w[2]));
    Ok(UniquenessTrial { converged, f_spread: spread(&fs), v_spread: spread(&vs) })
}

// ---------------------------------------------------------------------------
// Counting bounds

/// Outcome of one randomized counting experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingTrial {
    /// Interior sum equals boundary winding for the v-pairs, when defined.
    pub v_identity: Option<bool>,
    /// Same for the gradient pairs of the potentials.
    pub f_identity: Option<bool>,
    /// Σk + m ≤ l - 1 and the winding range, for the potentials.
    pub morse_bound: Option<bool>,
    /// Σk + m ≤ l for the v-pairs.
    pub transverse_bound: Option<bool>,
    /// Σ k over interior zeros of the v-pair and potential-pair differences.
    pub v_interior_sum: u32,
    pub f_interior_sum: u32,
    /// Error from zero finding or classification, if any.
    pub failure: Option<String>,
}

impl CountingTrial {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && self.v_identity != Some(false)
            && self.f_identity != Some(false)
            && self.morse_bound == Some(true)
            && self.transverse_bound == Some(true)
    }
}

/// The boundary difference φ1 - φ2 is 0.2 Σ_{k≤l} (a_k cos kθ + b_k sin kθ)
/// with random l ∈ {1, 2, 3} and a dominant top harmonic, so it has at
/// most 2l transverse zeros.
pub fn counting_trial(grid: &Arc<GridDomain>, a: f64, opts: &SolverOptions, rng: &mut impl Rng) -> Result<CountingTrial, SolverError> {
    let phi1 = random_boundary_data(grid, rng);
    let top = rng.gen_range(1..=3usize);
    let coeffs: Vec<(f64, f64)> = (1..=top)
        .map(|k| {
            let scale = if k == top { 1.0 } else { 0.3 };
            (scale * rng.gen_range(-1.0..1.0), scale * rng.gen_range(-1.0..1.0))
        })
        .collect();
    let diff = BoundaryFunction::from_xy(grid, |x, y| {
        let t = y.atan2(x);
        coeffs
            .iter()
            .enumerate()
            .map(|(i, (c, s))| {
                let k = (i + 1) as f64;
                0.2 * (c * (k * t).cos() + s * (k * t).sin())
            })
            .sum::<f64>()
    });
    let phi2 = BoundaryFunction::new(Arc::clone(grid), phi1.samples.iter().zip(&diff.samples).map(|(p, d)| p - d).collect())?;
    let anchor = grid.center_node();

    let mut trial = CountingTrial {
        v_identity: None,
        f_identity: None,
        morse_bound: None,
        transverse_bound: None,
        v_interior_sum: 0,
        f_interior_sum: 0,
        failure: None,
    };
    let note = |e: WindingError| Some(e.to_string());

    let (p1, _) = solve_dirichlet_v(&phi1, a, anchor, opts)?;
    let (p2, _) = solve_dirichlet_v(&phi2, a, anchor, opts)?;
    match find_zeros(&p1, &p2) {
        Ok(mut rep) => {
            trial.v_identity = rep.counting_identity_holds();
            trial.v_interior_sum = rep.interior_sum;
            match audit_count_transverse(&p1, &p2, &mut rep) {
                Ok(audit) => trial.transverse_bound = Some(audit.passed),
                Err(e) => trial.failure = note(e),
            }
        }
        Err(e) => trial.failure = note(e),
    }

    let (f1, _) = solve_dirichlet_f(&phi1, a, opts)?;
    let (f2, _) = solve_dirichlet_f(&phi2, a, opts)?;
    let (q1, q2) = (pair_from_potential(&f1, a), pair_from_potential(&f2, a));
    match find_zeros(&q1, &q2) {
        Ok(mut rep) => {
            trial.f_identity = rep.counting_identity_holds();
            trial.f_interior_sum = rep.interior_sum;
            match audit_count_morse(&f1, &f2, &mut rep) {
                Ok(audit) => trial.morse_bound = Some(audit.passed),
                Err(e) => trial.failure = trial.failure.take().or(note(e)),
            }
        }
        Err(e) => trial.failure = trial.failure.take().or(note(e)),
    }
    Ok(trial)
}

// ---------------------------------------------------------------------------
// Functional

/// Relative mismatch between the analytic directional derivative of the
/// discrete functional and its central difference, for a random smooth f
/// and a random interior direction.
pub fn gradient_fd_mismatch(grid: &Arc<GridDomain>, a: f64, rng: &mut impl Rng) -> f64 {
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..PI)))
        .collect();
    let f = grid.sample(|x, y| modes.iter().map(|(c, kx, ky, p)| c * (kx * x + ky * y + p).sin()).sum());
    let dir: Vec<f64> = (0..grid.node_count()).map(|k| if grid.is_boundary(k) { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
    let grad = functional_gradient(&f, a).expect("a != 0");
    let analytic: f64 = grid.interior().iter().map(|&k| grad.values[k] * dir[k]).sum();
    let eps = 1e-5;
    let shift = |s: f64| ScalarField { values: f.values.iter().zip(&dir).map(|(v, d)| v + s * d).collect(), ..f.clone() };
    let fd = (functional_i(&shift(eps), a).expect("a != 0") - functional_i(&shift(-eps), a).expect("a != 0")) / (2.0 * eps);
    (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE)
}

/// Sup-norm of the functional gradient at a converged f-solution, divided
/// by (newton_tol * cell area).
pub fn stationarity_ratio(phi: &BoundaryFunction, a: f64, opts: &SolverOptions) -> Result<(f64, bool), SolverError> {
    let (f, report) = solve_dirichlet_f(phi, a, opts)?;
    let grad = functional_gradient(&f, a)?;
    Ok((grad.max_abs_interior() / (opts.newton_tol * phi.domain.cell_area()), report.converged))
}

// ---------------------------------------------------------------------------
// Lift

/// verify_sl on a copy of the pair with v raised by `bump` at the node
/// nearest the centre.
pub fn corrupted_sl_report(p: &SolutionPair, bump: f64, theta_samples: usize) -> SlReport {
    let mut q = p.clone();
    q.v.values[p.domain().center_node()] += bump;
    verify_sl(&q, theta_samples).expect("a != 0")
}

// ---------------------------------------------------------------------------
// Continuity

/// Fitted constants K_δ = |w_δ - w|_∞ / δ for boundary perturbations of
/// sup-norm δ, for the f- and v-solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityProbe {
    pub deltas: Vec<f64>,
    pub k_f: Vec<f64>,
    pub k_v: Vec<f64>,
}

pub fn continuity_probe(phi: &BoundaryFunction, a: f64, deltas: &[f64], opts: &SolverOptions, rng: &mut impl Rng) -> Result<ContinuityProbe, SolverError> {
    let grid = &phi.domain;
    let dir = random_boundary_data(grid, rng);
    let norm = dir.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let anchor = grid.center_node();
    let (f0, _) = solve_dirichlet_f(phi, a, opts)?;
    let (p0, _) = solve_dirichlet_v(phi, a, anchor, opts)?;
    let mut out = ContinuityProbe { deltas: deltas.to_vec(), k_f: Vec::new(), k_v: Vec::new() };
    for &d in deltas {
        let samples = phi.samples.iter().zip(&dir.samples).map(|(p, q)| p + d * q / norm).collect();
        let pert = BoundaryFunction::new(Arc::clone(grid), samples)?;
        let (f, _) = solve_dirichlet_f(&pert, a, opts)?;
        let (p, _) = solve_dirichlet_v(&pert, a, anchor, opts)?;
        out.k_f.push(sup_diff(&f, &f0) / d);
        out.k_v.push(sup_diff(&p.v, &p0.v) / d);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scorecard

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub seed: u64,
    pub quick: bool,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

fn at_most(name: &str, measured: f64, threshold: f64) -> Check {
    Check { name: name.into(), passed: measured <= threshold, measured, threshold }
}

fn at_least(name: &str, measured: f64, threshold: f64) -> Check {
    Check { name: name.into(), passed: measured >= threshold, measured, threshold }
}

/// Runs the invariant suite. `quick` uses coarse grids and few trials.
pub fn scorecard(quick: bool, seed: u64) -> Scorecard {
    let mut rng = rng(seed);
    let opts = SolverOptions::default();
    let mut checks = Vec::new();
    let trials = if quick { 3 } else { 10 };
    let n = if quick { 25 } else { 41 };

    checks.push(at_most("cross_product_identities", cross_product_identities(1000, seed).max(), 1e-10));
    let ex = explicit_residuals(1000, seed);
    checks.push(at_most("explicit_residuals", ex.affine.max(ex.catenoid).max(ex.paraboloid_union), 1e-12));
    let hl = harvey_lawson_structure(100, seed);
    checks.push(at_most("harvey_lawson_signs", hl.sign_violations as f64, 0.0));
    checks.push(at_most("harvey_lawson_axis_formulas", hl.axis_formula_error, 1e-10));
    checks.push(at_most("harvey_lawson_homogeneity", hl.homogeneity_deviation, 1e-10));
    let sizes: &[usize] = if quick { &[17, 33] } else { &[33, 65, 129] };
    checks.push(at_least("harvey_lawson_fd_order", harvey_lawson_fd_ladder(1.0, sizes).worst_order(), 1.9));

    let g = build_grid(GridShape::unit_disc(), n, n).expect("valid grid");
    let mut overshoot: f64 = 0.0;
    let mut vx_excess = f64::NEG_INFINITY;
    let mut cmp_violation = f64::NEG_INFINITY;
    let mut strict_gap = f64::INFINITY;
    let mut spread: f64 = 0.0;
    let mut all_converged = true;
    for _ in 0..trials {
        let phi = random_boundary_data(&g, &mut rng);
        match max_principle_trial(&phi, 1.0, &opts) {
            Ok(t) => {
                all_converged &= t.converged;
                overshoot = overshoot.max(t.f_overshoot).max(t.v_overshoot);
                vx_excess = vx_excess.max(t.vx_excess - 5.0 * t.h);
            }
            Err(_) => all_converged = false,
        }
        let bump = random_bump(&g, &mut rng);
        match comparison_trial(&phi, &bump, 0.1, 1.0, &opts) {
            Ok(t) => {
                all_converged &= t.converged;
                cmp_violation = cmp_violation.max(t.f_violation).max(t.v_violation);
                strict_gap = strict_gap.min(t.f_strict_gap).min(t.v_strict_gap);
            }
            Err(_) => all_converged = false,
        }
        match uniqueness_trial(&phi, 1.0, &opts) {
            Ok(t) => {
                all_converged &= t.converged;
                spread = spread.max(t.f_spread).max(t.v_spread);
            }
            Err(_) => all_converged = false,
        }
    }
    checks.push(at_least("solvers_converged", f64::from(u8::from(all_converged)), 1.0));
    checks.push(at_most("maximum_principle_overshoot", overshoot, opts.newton_tol));
    checks.push(at_most("vx_maximum_principle_excess", vx_excess, 0.0));
    checks.push(at_most("comparison_violation", cmp_violation, 10.0 * opts.newton_tol));
    checks.push(Check { name: "strict_comparison_gap".into(), passed: strict_gap > 0.0, measured: strict_gap, threshold: 0.0 });
    checks.push(at_most("uniqueness_spread", spread, 10.0 * opts.newton_tol));

    let affine = find_zeros(&sample_pair(&affine_pair(1.0, 0.0, 0.0), &g, 1.0), &sample_pair(&affine_pair(0.0, 0.0, 0.0), &g, 1.0));
    let affine_ok = matches!(&affine, Ok(r) if r.interior_sum == 1 && r.boundary_winding == Some(1));
    checks.push(at_least("affine_zero_count", f64::from(u8::from(affine_ok)), 1.0));
    let counting_failures = (0..trials)
        .filter(|_| !counting_trial(&g, 1.0, &opts, &mut rng).is_ok_and(|t| t.passed()))
        .count();
    checks.push(at_most("counting_bound_failures", counting_failures as f64, 0.0));

    let fd = (0..trials).map(|_| gradient_fd_mismatch(&g, 1.0, &mut rng)).fold(0.0, f64::max);
    checks.push(at_most("functional_gradient_fd", fd, 1e-5));
    let sq = build_grid(GridShape::unit_square(), n, n).expect("valid grid");
    let stationarity = stationarity_ratio(&random_boundary_data(&sq, &mut rng), 1.0, &opts).map_or(f64::INFINITY, |r| r.0);
    checks.push(at_most("functional_stationarity", stationarity, 10.0));

    let sl = verify_sl(&sample_pair(&affine_pair(0.6, -0.2, 0.3), &g, 1.0), 4).expect("a != 0");
    checks.push(at_most("affine_lift_special_lagrangian", sl.max_omega.max(sl.max_im_omega), 1e-12));

    let all_passed = checks.iter().all(|c| c.passed);
    Scorecard { seed, quick, checks, all_passed }
}
