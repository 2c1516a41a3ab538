//! JSON and CSV serialization of fields, boundary data and solution pairs.
//!
//! JSON envelopes carry the grid parameters so the grid is rebuilt on
//! load; values round-trip bit-exactly and invalid or non-finite values are
//! written as `null`. CSV rows carry the logical indices (i, j) and the
//! node position (x, y), with empty cells for invalid values.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cauchy_riemann::SolutionPair;
use crate::domain_grid::{build_grid, BoundaryFunction, GridDomain, GridError, GridShape, ScalarField};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no boundary sample at node ({x}, {y})")]
    MissingBoundarySample { x: f64, y: f64 },
    #[error("boundary CSV has a non-numeric value at ({x}, {y})")]
    MissingValue { x: f64, y: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grid parameters sufficient to rebuild a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub shape: GridShape,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn of(grid: &GridDomain) -> Self {
        GridSpec { shape: grid.shape(), nx: grid.nx(), ny: grid.ny() }
    }

    pub fn build(&self) -> Result<Arc<GridDomain>, GridError> {
        build_grid(self.shape, self.nx, self.ny)
    }
}

/// {shape, nx, ny, values}; `values` are per node for fields and per
/// boundary-loop entry for boundary functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEnvelope {
    pub shape: GridShape,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<Option<f64>>,
}

/// {a, domain, u_values, v_values}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEnvelope {
    pub a: f64,
    pub domain: GridSpec,
    pub u_values: Vec<Option<f64>>,
    pub v_values: Vec<Option<f64>>,
}

fn encode(f: &ScalarField) -> Vec<Option<f64>> {
    (0..f.values.len()).map(|k| (f.is_valid(k) && f.values[k].is_finite()).then_some(f.values[k])).collect()
}

fn decode(domain: &Arc<GridDomain>, values: &[Option<f64>]) -> Result<ScalarField, GridError> {
    let mut field = ScalarField::new(Arc::clone(domain), values.iter().map(|v| v.unwrap_or(f64::NAN)).collect())?;
    if values.iter().any(Option::is_none) {
        field.valid = Some(values.iter().map(Option::is_some).collect());
    }
    Ok(field)
}

pub fn field_envelope(f: &ScalarField) -> FieldEnvelope {
    let spec = GridSpec::of(&f.domain);
    FieldEnvelope { shape: spec.shape, nx: spec.nx, ny: spec.ny, values: encode(f) }
}

pub fn field_to_json(f: &ScalarField) -> Result<String, IoError> {
    Ok(serde_json::to_string(&field_envelope(f))?)
}

pub fn field_from_json(text: &str) -> Result<ScalarField, IoError> {
    let env: FieldEnvelope = serde_json::from_str(text)?;
    let grid = build_grid(env.shape, env.nx, env.ny)?;
    Ok(decode(&grid, &env.values)?)
}

pub fn boundary_to_json(b: &BoundaryFunction) -> Result<String, IoError> {
    let spec = GridSpec::of(&b.domain);
    let env = FieldEnvelope { shape: spec.shape, nx: spec.nx, ny: spec.ny, values: b.samples.iter().map(|&s| s.is_finite().then_some(s)).collect() };
    Ok(serde_json::to_string(&env)?)
}

pub fn boundary_from_json(text: &str) -> Result<BoundaryFunction, IoError> {
    let env: FieldEnvelope = serde_json::from_str(text)?;
    let grid = build_grid(env.shape, env.nx, env.ny)?;
    Ok(BoundaryFunction::new(grid, env.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect())?)
}

pub fn pair_envelope(p: &SolutionPair) -> PairEnvelope {
    PairEnvelope { a: p.a, domain: GridSpec::of(p.domain()), u_values: encode(&p.u), v_values: encode(&p.v) }
}

pub fn pair_to_json(p: &SolutionPair) -> Result<String, IoError> {
    Ok(serde_json::to_string(&pair_envelope(p))?)
}

/// Loads a pair; the `verified` flag is not serialized and comes back unset.
pub fn pair_from_json(text: &str) -> Result<SolutionPair, IoError> {
    let env: PairEnvelope = serde_json::from_str(text)?;
    let grid = env.domain.build()?;
    let (u, v) = (decode(&grid, &env.u_values)?, decode(&grid, &env.v_values)?);
    Ok(SolutionPair { u, v, a: env.a, verified: None })
}

#[derive(Serialize)]
struct FieldRow {
    i: f64,
    j: f64,
    x: f64,
    y: f64,
    value: Option<f64>,
}

#[derive(Serialize)]
struct PairRow {
    i: f64,
    j: f64,
    x: f64,
    y: f64,
    u: Option<f64>,
    v: Option<f64>,
}

#[derive(Deserialize)]
struct BoundaryRow {
    x: f64,
    y: f64,
    value: Option<f64>,
}

/// Columns i, j, x, y, value; one row per node.
pub fn write_field_csv<W: Write>(f: &ScalarField, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let values = encode(f);
    for (n, value) in f.domain.nodes().iter().zip(values) {
        w.serialize(FieldRow { i: n.li, j: n.lj, x: n.x, y: n.y, value })?;
    }
    w.flush()?;
    Ok(())
}

/// Columns i, j, x, y, u, v; one row per node.
pub fn write_pair_csv<W: Write>(p: &SolutionPair, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let (u, v) = (encode(&p.u), encode(&p.v));
    for ((n, u), v) in p.domain().nodes().iter().zip(u).zip(v) {
        w.serialize(PairRow { i: n.li, j: n.lj, x: n.x, y: n.y, u, v })?;
    }
    w.flush()?;
    Ok(())
}

/// Columns i, j, x, y, value; one row per boundary-loop entry, in loop order.
pub fn write_boundary_csv<W: Write>(b: &BoundaryFunction, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for (&k, &s) in b.domain.boundary_loop().iter().zip(&b.samples) {
        let n = b.domain.node(k);
        w.serialize(FieldRow { i: n.li, j: n.lj, x: n.x, y: n.y, value: s.is_finite().then_some(s) })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads boundary samples from a CSV with at least the columns x, y, value,
/// matching rows to boundary nodes by position (within `1e-9` of the
/// domain size); row order is irrelevant.
pub fn read_boundary_csv<R: Read>(grid: &Arc<GridDomain>, input: R) -> Result<BoundaryFunction, IoError> {
    let rows: Vec<BoundaryRow> = csv::Reader::from_reader(input).deserialize().collect::<Result<_, _>>()?;
    let (x0, x1, y0, y1) = grid.shape().bounds();
    let tol = 1e-9 * (x1 - x0).max(y1 - y0);
    let samples = grid
        .boundary_loop()
        .iter()
        .map(|&k| {
            let n = grid.node(k);
            let row = rows
                .iter()
                .find(|r| (r.x - n.x).abs() <= tol && (r.y - n.y).abs() <= tol)
                .ok_or(IoError::MissingBoundarySample { x: n.x, y: n.y })?;
            row.value.ok_or(IoError::MissingValue { x: n.x, y: n.y })
        })
        .collect::<Result<Vec<f64>, IoError>>()?;
    Ok(BoundaryFunction::new(Arc::clone(grid), samples)?)
}
