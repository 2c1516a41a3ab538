//! Numerical laboratory for U(1)-invariant special Lagrangian 3-folds in
//! C^3, built on the nonlinear Cauchy-Riemann system
//!
//! ```text
//! u_x = v_y,    v_x = -2 (v^2 + y^2 + a^2)^{1/2} u_y
//! ```
//!
//! and its potential and v-only elliptic reformulations.

pub mod domain_grid;
pub mod elliptic_solver;
pub mod cauchy_riemann;
pub mod explicit_solutions;
pub mod io;
pub mod mesh;
pub mod sl_geometry;
pub mod validation;
pub mod winding;
