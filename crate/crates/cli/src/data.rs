//! Grid, boundary-data and output-path resolution for the commands.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use sl3lab::domain_grid::{build_grid, BoundaryFunction, GridDomain, GridShape};
use sl3lab::explicit_solutions::{harvey_lawson_eval, harvey_lawson_potential};
use sl3lab::io::{read_boundary_csv, write_field_csv, write_pair_csv, field_to_json, pair_to_json};
use sl3lab::cauchy_riemann::SolutionPair;
use sl3lab::domain_grid::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeKind {
    Disc,
    Rectangle,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value = "disc")]
    pub shape: ShapeKind,
    #[arg(long, default_value_t = 33)]
    pub nx: usize,
    #[arg(long, default_value_t = 33)]
    pub ny: usize,
    /// Rectangle bounds x0,x1,y0,y1.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 0.0, 1.0], allow_hyphen_values = true)]
    pub bounds: Vec<f64>,
    /// Disc centre cx,cy.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0], allow_hyphen_values = true)]
    pub center: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
}

impl GridArgs {
    pub fn shape(&self) -> GridShape {
        match self.shape {
            ShapeKind::Disc => GridShape::Disc { center: [self.center[0], self.center[1]], radius: self.radius },
            ShapeKind::Rectangle => {
                GridShape::Rectangle { x0: self.bounds[0], x1: self.bounds[1], y0: self.bounds[2], y1: self.bounds[3] }
            }
        }
    }

    pub fn build(&self) -> Result<Arc<GridDomain>> {
        Ok(build_grid(self.shape(), self.nx, self.ny)?)
    }
}

/// Which unknown the boundary data prescribes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Potential,
    V,
}

#[derive(Debug, Clone, Args)]
pub struct PhiArgs {
    /// Boundary data: `affine`, `hl`, `harmonic-K` or a CSV file with
    /// columns x, y, value.
    #[arg(long, default_value = "hl")]
    pub phi: String,
    /// Coefficients α, β, γ of the affine pair u = αx+β, v = αy+γ.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.0, 0.0], allow_hyphen_values = true)]
    pub affine: Vec<f64>,
}

impl PhiArgs {
    /// Built-in data are traces of the explicit families: the potential
    /// αxy + βy + γx or the Harvey-Lawson potential for f, and αy + γ or
    /// the Harvey-Lawson v for v. `harmonic-K` is cos(Kθ) for both.
    pub fn resolve(&self, grid: &Arc<GridDomain>, a: f64, target: Target) -> Result<BoundaryFunction> {
        let [al, be, ga] = [self.affine[0], self.affine[1], self.affine[2]];
        let phi = match (self.phi.as_str(), target) {
            ("affine", Target::Potential) => BoundaryFunction::from_xy(grid, |x, y| al * x * y + be * y + ga * x),
            ("affine", Target::V) => BoundaryFunction::from_xy(grid, |_, y| al * y + ga),
            ("hl", Target::Potential) => BoundaryFunction::from_xy(grid, |x, y| harvey_lawson_potential(a, x, y)),
            ("hl", Target::V) => BoundaryFunction::from_xy(grid, |x, y| harvey_lawson_eval(a, x, y).1),
            (name, _) if name.starts_with("harmonic-") => {
                let k: u32 = name["harmonic-".len()..].parse().with_context(|| format!("bad harmonic order in {name:?}"))?;
                BoundaryFunction::from_theta(grid, |t| (f64::from(k) * t).cos())
            }
            (path, _) => {
                let file = File::open(path).with_context(|| format!("boundary data {path:?} is neither built-in nor a readable file"))?;
                read_boundary_csv(grid, file)?
            }
        };
        if phi.samples.iter().any(|s| !s.is_finite()) {
            bail!("boundary data {:?} has non-finite samples on this grid", self.phi);
        }
        Ok(phi)
    }
}

/// Explicit paths are used as given; defaults land in the output directory.
pub fn output_path(explicit: &Option<PathBuf>, out_dir: &Path, default_name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out_dir.join(default_name))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::io::Write::write_all(&mut create(path)?, text.as_bytes())?;
    Ok(())
}

pub fn write_field(path: &Path, f: &ScalarField) -> Result<()> {
    if is_csv(path) {
        write_field_csv(f, create(path)?)?;
    } else {
        std::io::Write::write_all(&mut create(path)?, field_to_json(f)?.as_bytes())?;
    }
    Ok(())
}

pub fn write_pair(path: &Path, p: &SolutionPair) -> Result<()> {
    if is_csv(path) {
        write_pair_csv(p, create(path)?)?;
    } else {
        std::io::Write::write_all(&mut create(path)?, pair_to_json(p)?.as_bytes())?;
    }
    Ok(())
}
