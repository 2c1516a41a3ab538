//! Planar domains, their structured grids and boundary loops, discrete
//! differentiation, and the Morse/transverse classification of boundary
//! data.
//!
//! Grids are Cartesian lattices. On a rectangle every lattice node is a
//! node. On a disc the lattice is clipped to the circle: lattice points
//! strictly inside become interior nodes, and each grid line leaving the
//! disc contributes a boundary node at its crossing with the circle. Every
//! interior node therefore has exactly one neighbour in each axis
//! direction, possibly at a shortened spacing.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::TriMesh;

/// Lattice points closer than this fraction of a cell to the circle,
/// along any grid line, are promoted to boundary nodes.
const SNAP_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid shape parameters: {0}")]
    InvalidShapeParameters(String),
    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("field does not belong to this grid")]
    DomainMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("boundary function needs at least 8 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridShape {
    Rectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    Disc { center: [f64; 2], radius: f64 },
}

impl GridShape {
    pub fn unit_disc() -> Self {
        GridShape::Disc { center: [0.0, 0.0], radius: 1.0 }
    }

    pub fn unit_square() -> Self {
        GridShape::Rectangle { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    /// Lattice bounding box (x0, x1, y0, y1).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            GridShape::Rectangle { x0, x1, y0, y1 } => (x0, x1, y0, y1),
            GridShape::Disc { center, radius } => {
                (center[0] - radius, center[0] + radius, center[1] - radius, center[1] + radius)
            }
        }
    }

    /// Closed-domain membership with a relative slack of a few ulps.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            GridShape::Rectangle { x0, x1, y0, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            GridShape::Disc { center, radius } => {
                (x - center[0]).hypot(y - center[1]) <= radius * (1.0 + 4.0 * f64::EPSILON)
            }
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            GridShape::Rectangle { x0, x1, y0, y1 } => {
                if !finite(&[x0, x1, y0, y1]) || x1 <= x0 || y1 <= y0 {
                    return Err(GridError::InvalidShapeParameters(format!(
                        "rectangle [{x0}, {x1}] x [{y0}, {y1}] has non-positive extent"
                    )));
                }
            }
            GridShape::Disc { center, radius } => {
                if !finite(&[center[0], center[1], radius]) || radius <= 0.0 {
                    return Err(GridError::InvalidShapeParameters(format!(
                        "disc radius {radius} is not positive"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    /// Logical coordinates; integral for lattice nodes, fractional along
    /// one axis for boundary crossings.
    pub li: f64,
    pub lj: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub h: f64,
}

/// Axis-aligned neighbours of an interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub node: usize,
    pub east: Neighbor,
    pub west: Neighbor,
    pub north: Neighbor,
    pub south: Neighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Grid-line segment between two nodes; `a` precedes `b` along the axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub axis: Axis,
    pub length: f64,
    /// Transverse extent attributed to the edge by the edge quadrature.
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct GridDomain {
    shape: GridShape,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    nodes: Vec<Node>,
    interior: Vec<usize>,
    unknown: Vec<Option<usize>>,
    stencils: Vec<Stencil>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    boundary_loop: Vec<usize>,
    theta: Vec<f64>,
    ring: Vec<bool>,
    grad_weights: Vec<Vec<(usize, f64, f64)>>,
    mesh: TriMesh,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LatticeClass {
    Outside,
    Interior,
    Boundary,
}

/// Builds the grid for `shape` with `nx` x `ny` lattice lines.
pub fn build_grid(shape: GridShape, nx: usize, ny: usize) -> Result<Arc<GridDomain>, GridError> {
    shape.validate()?;
    if nx < 4 || ny < 4 {
        return Err(GridError::ResolutionTooCoarse(format!("nx = {nx}, ny = {ny}; need at least 4 each")));
    }
    let (x0, x1, y0, y1) = shape.bounds();
    let hx = (x1 - x0) / (nx - 1) as f64;
    let hy = (y1 - y0) / (ny - 1) as f64;
    let lx = |i: usize| if i == nx - 1 { x1 } else { x0 + i as f64 * hx };
    let ly = |j: usize| if j == ny - 1 { y1 } else { y0 + j as f64 * hy };

    let mut class = vec![LatticeClass::Outside; nx * ny];
    match shape {
        GridShape::Rectangle { .. } => {
            for j in 0..ny {
                for i in 0..nx {
                    let edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
                    class[j * nx + i] = if edge { LatticeClass::Boundary } else { LatticeClass::Interior };
                }
            }
        }
        GridShape::Disc { center, radius } => {
            for j in 0..ny {
                for i in 0..nx {
                    let (dx, dy) = (lx(i) - center[0], ly(j) - center[1]);
                    let r = dx.hypot(dy);
                    class[j * nx + i] = if (r - radius).abs() <= 4.0 * f64::EPSILON * radius {
                        LatticeClass::Boundary
                    } else if r > radius {
                        LatticeClass::Outside
                    } else {
                        let half_x = (radius * radius - dy * dy).max(0.0).sqrt();
                        let half_y = (radius * radius - dx * dx).max(0.0).sqrt();
                        let gap_x = (half_x - dx.abs()) / hx;
                        let gap_y = (half_y - dy.abs()) / hy;
                        if gap_x.min(gap_y) < SNAP_FRACTION {
                            LatticeClass::Boundary
                        } else {
                            LatticeClass::Interior
                        }
                    };
                }
            }
            // Boundary lattice points with no interior lattice neighbour
            // would be isolated; drop them.
            let snapshot = class.clone();
            for j in 0..ny {
                for i in 0..nx {
                    if snapshot[j * nx + i] != LatticeClass::Boundary {
                        continue;
                    }
                    let mut linked = false;
                    for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii >= 0 && jj >= 0 && (ii as usize) < nx && (jj as usize) < ny {
                            linked |= snapshot[jj as usize * nx + ii as usize] == LatticeClass::Interior;
                        }
                    }
                    if !linked {
                        class[j * nx + i] = LatticeClass::Outside;
                    }
                }
            }
        }
    }

    let mut nodes = Vec::new();
    let mut lattice: Vec<Option<usize>> = vec![None; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if class[j * nx + i] != LatticeClass::Outside {
                lattice[j * nx + i] = Some(nodes.len());
                nodes.push(Node {
                    x: lx(i),
                    y: ly(j),
                    li: i as f64,
                    lj: j as f64,
                    boundary: class[j * nx + i] == LatticeClass::Boundary,
                });
            }
        }
    }
    if let GridShape::Disc { center, radius } = shape {
        for j in 0..ny {
            for i in 0..nx {
                if class[j * nx + i] != LatticeClass::Interior {
                    continue;
                }
                let (x, y) = (lx(i), ly(j));
                let (dx, dy) = (x - center[0], y - center[1]);
                let half_x = (radius * radius - dy * dy).max(0.0).sqrt();
                let half_y = (radius * radius - dx * dx).max(0.0).sqrt();
                for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    let inside = ii >= 0
                        && jj >= 0
                        && (ii as usize) < nx
                        && (jj as usize) < ny
                        && class[jj as usize * nx + ii as usize] != LatticeClass::Outside;
                    if inside {
                        continue;
                    }
                    let (cx, cy) = if dj == 0 {
                        (center[0] + di as f64 * half_x, y)
                    } else {
                        (x, center[1] + dj as f64 * half_y)
                    };
                    nodes.push(Node {
                        x: cx,
                        y: cy,
                        li: if dj == 0 { (cx - x0) / hx } else { i as f64 },
                        lj: if dj == 0 { j as f64 } else { (cy - y0) / hy },
                        boundary: true,
                    });
                }
            }
        }
    }

    let interior: Vec<usize> = (0..nodes.len()).filter(|&k| !nodes[k].boundary).collect();
    if interior.is_empty() {
        return Err(GridError::ResolutionTooCoarse("grid has no interior nodes".into()));
    }
    let mut unknown = vec![None; nodes.len()];
    for (slot, &k) in interior.iter().enumerate() {
        unknown[k] = Some(slot);
    }

    // Grid lines: nodes sharing an integral logical row or column.
    let mut rows: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut cols: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, n) in nodes.iter().enumerate() {
        if n.lj.fract() == 0.0 {
            rows.entry(n.lj as usize).or_default().push(k);
        }
        if n.li.fract() == 0.0 {
            cols.entry(n.li as usize).or_default().push(k);
        }
    }
    let mut edges = Vec::new();
    let mut line_keys: Vec<(Axis, usize)> = rows.keys().map(|&j| (Axis::X, j)).collect();
    line_keys.extend(cols.keys().map(|&i| (Axis::Y, i)));
    line_keys.sort_by_key(|&(axis, k)| (axis == Axis::Y, k));
    for (axis, key) in line_keys {
        let mut line = if axis == Axis::X { rows[&key].clone() } else { cols[&key].clone() };
        let coord = |k: usize| if axis == Axis::X { nodes[k].x } else { nodes[k].y };
        line.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)));
        for w in line.windows(2) {
            let (a, b) = (w[0], w[1]);
            let both_boundary = nodes[a].boundary && nodes[b].boundary;
            let spacing = if axis == Axis::X { hy } else { hx };
            edges.push(Edge {
                a,
                b,
                axis,
                length: coord(b) - coord(a),
                width: if both_boundary { 0.5 * spacing } else { spacing },
            });
        }
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (e, edge) in edges.iter().enumerate() {
        adjacency[edge.a].push((e, edge.b));
        adjacency[edge.b].push((e, edge.a));
    }

    let mut stencils = Vec::with_capacity(interior.len());
    for &k in &interior {
        let mut east = None;
        let mut west = None;
        let mut north = None;
        let mut south = None;
        for &(e, other) in &adjacency[k] {
            let edge = edges[e];
            let nb = Neighbor { node: other, h: edge.length };
            match (edge.axis, edge.a == k) {
                (Axis::X, true) => east = Some(nb),
                (Axis::X, false) => west = Some(nb),
                (Axis::Y, true) => north = Some(nb),
                (Axis::Y, false) => south = Some(nb),
            }
        }
        match (east, west, north, south) {
            (Some(east), Some(west), Some(north), Some(south)) => {
                stencils.push(Stencil { node: k, east, west, north, south })
            }
            _ => {
                return Err(GridError::ResolutionTooCoarse(format!(
                    "interior node {k} lacks an axis neighbour"
                )))
            }
        }
    }

    let boundary_loop = order_boundary(&shape, &nodes);
    if boundary_loop.len() < 8 {
        return Err(GridError::ResolutionTooCoarse(format!(
            "only {} boundary nodes",
            boundary_loop.len()
        )));
    }
    let mut cumulative = Vec::with_capacity(boundary_loop.len());
    let mut length = 0.0;
    for (p, &k) in boundary_loop.iter().enumerate() {
        cumulative.push(length);
        let next = boundary_loop[(p + 1) % boundary_loop.len()];
        length += (nodes[next].x - nodes[k].x).hypot(nodes[next].y - nodes[k].y);
    }
    let theta: Vec<f64> = cumulative.iter().map(|c| TAU * c / length).collect();

    let mut ring = vec![false; nodes.len()];
    for s in &stencils {
        ring[s.node] = [s.east, s.west, s.north, s.south].iter().any(|n| nodes[n.node].boundary);
    }

    let mesh = match shape {
        GridShape::Rectangle { .. } => {
            let mut tris = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let id = |ii: usize, jj: usize| lattice[jj * nx + ii].expect("rectangle lattice is complete");
                    let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                    tris.push([a, b, c]);
                    tris.push([a, c, d]);
                }
            }
            TriMesh::new(nodes.iter().map(|n| [n.x, n.y]).collect(), tris, 0.0)
        }
        GridShape::Disc { .. } => {
            TriMesh::delaunay(nodes.iter().map(|n| [n.x, n.y]).collect(), 1e-12 * hx * hy)
        }
    };

    let mut grid = GridDomain {
        shape,
        nx,
        ny,
        hx,
        hy,
        nodes,
        interior,
        unknown,
        stencils,
        edges,
        adjacency,
        boundary_loop,
        theta,
        ring,
        grad_weights: Vec::new(),
        mesh,
    };
    grid.grad_weights = gradient_weights(&grid);
    Ok(Arc::new(grid))
}

fn order_boundary(shape: &GridShape, nodes: &[Node]) -> Vec<usize> {
    let mut loop_nodes: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].boundary).collect();
    match *shape {
        GridShape::Disc { center, .. } => {
            let angle = |k: usize| {
                let a = (nodes[k].y - center[1]).atan2(nodes[k].x - center[0]);
                if a < 0.0 {
                    a + TAU
                } else {
                    a
                }
            };
            loop_nodes.sort_by(|&a, &b| angle(a).total_cmp(&angle(b)));
        }
        GridShape::Rectangle { x0, x1, y0, y1 } => {
            // Perimeter coordinate, counter-clockwise from (x0, y0).
            let (w, h) = (x1 - x0, y1 - y0);
            let key = |k: usize| {
                let n = nodes[k];
                if n.y == y0 {
                    n.x - x0
                } else if n.x == x1 {
                    w + (n.y - y0)
                } else if n.y == y1 {
                    w + h + (x1 - n.x)
                } else {
                    2.0 * w + h + (y1 - n.y)
                }
            };
            loop_nodes.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        }
    }
    loop_nodes
}

/// Linear weights (node, d/dx, d/dy) for the gradient at every node.
fn gradient_weights(grid: &GridDomain) -> Vec<Vec<(usize, f64, f64)>> {
    let mut weights = vec![Vec::new(); grid.nodes.len()];
    for s in &grid.stencils {
        let (e, w, n, so) = (s.east, s.west, s.north, s.south);
        let mut row = Vec::with_capacity(5);
        let (ce, cw, cc) = three_point(w.h, e.h);
        row.push((e.node, ce, 0.0));
        row.push((w.node, cw, 0.0));
        let (cn, cs, cc_y) = three_point(so.h, n.h);
        row.push((n.node, 0.0, cn));
        row.push((so.node, 0.0, cs));
        row.push((s.node, cc, cc_y));
        weights[s.node] = row;
    }
    let cell = grid.hx.max(grid.hy);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let (x0, _, y0, _) = grid.shape.bounds();
    let key = |x: f64, y: f64| (((x - x0) / cell).floor() as i64, ((y - y0) / cell).floor() as i64);
    for (k, n) in grid.nodes.iter().enumerate() {
        buckets.entry(key(n.x, n.y)).or_default().push(k);
    }
    for &k in &grid.boundary_loop {
        let p = grid.nodes[k];
        let mut radius: f64 = 2.5;
        loop {
            let reach = radius.ceil() as i64 + 1;
            let (bi, bj) = key(p.x, p.y);
            let mut near = Vec::new();
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    if let Some(list) = buckets.get(&(bi + di, bj + dj)) {
                        for &q in list {
                            let n = grid.nodes[q];
                            if ((n.x - p.x) / grid.hx).hypot((n.y - p.y) / grid.hy) <= radius {
                                near.push(q);
                            }
                        }
                    }
                }
            }
            near.sort_unstable();
            if let Some(row) = quadratic_fit_weights(grid, p, &near) {
                weights[k] = row;
                break;
            }
            radius += 1.0;
        }
    }
    weights
}

/// Weights (left, right, centre) of the second-order derivative on the
/// three points -hl, 0, +hr.
fn three_point(hl: f64, hr: f64) -> (f64, f64, f64) {
    let right = hl / (hr * (hl + hr));
    let left = -hr / (hl * (hl + hr));
    (right, left, (hr - hl) / (hl * hr))
}

fn quadratic_fit_weights(grid: &GridDomain, p: Node, near: &[usize]) -> Option<Vec<(usize, f64, f64)>> {
    if near.len() < 8 {
        return None;
    }
    let basis = |q: usize| {
        let n = grid.nodes[q];
        let (x, y) = ((n.x - p.x) / grid.hx, (n.y - p.y) / grid.hy);
        SVector::<f64, 6>::new(1.0, x, y, x * x, x * y, y * y)
    };
    let mut normal = SMatrix::<f64, 6, 6>::zeros();
    for &q in near {
        let b = basis(q);
        normal += b * b.transpose();
    }
    let svd = normal.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() < 1e-8 * smax {
        return None;
    }
    let inv = svd.pseudo_inverse(0.0).ok()?;
    Some(
        near.iter()
            .map(|&q| {
                let c = inv * basis(q);
                (q, c[1] / grid.hx, c[2] / grid.hy)
            })
            .collect(),
    )
}

impl GridDomain {
    pub fn shape(&self) -> GridShape {
        self.shape
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    /// Lattice spacings (hx, hy).
    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn node(&self, k: usize) -> Node {
        self.nodes[k]
    }
    pub fn is_boundary(&self, k: usize) -> bool {
        self.nodes[k].boundary
    }
    /// Interior node ids in row-major lattice order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }
    /// Position of a node among the interior unknowns.
    pub fn unknown_index(&self, k: usize) -> Option<usize> {
        self.unknown[k]
    }
    /// Stencils, indexed like `interior()`.
    pub fn stencils(&self) -> &[Stencil] {
        &self.stencils
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    /// (edge id, other endpoint) pairs incident to a node.
    pub fn adjacency(&self, k: usize) -> &[(usize, usize)] {
        &self.adjacency[k]
    }
    pub fn boundary_loop(&self) -> &[usize] {
        &self.boundary_loop
    }
    /// Arc-length parameter of each boundary-loop entry.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    /// Interior nodes with at least one boundary neighbour.
    pub fn is_ring(&self, k: usize) -> bool {
        self.ring[k]
    }
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }
    /// Linear weights of the discrete gradient at node `k`.
    pub fn gradient_weights(&self, k: usize) -> &[(usize, f64, f64)] {
        &self.grad_weights[k]
    }

    /// Samples a function of position at every node.
    pub fn sample<F: Fn(f64, f64) -> f64>(self: &Arc<Self>, f: F) -> ScalarField {
        let values = self.nodes.iter().map(|n| f(n.x, n.y)).collect();
        ScalarField { domain: Arc::clone(self), values, valid: None }
    }

    /// Node closest to (x, y); ties resolve to the lowest id.
    pub fn nearest_node(&self, x: f64, y: f64) -> usize {
        (0..self.nodes.len())
            .min_by(|&a, &b| {
                let (p, q) = (self.nodes[a], self.nodes[b]);
                (p.x - x).hypot(p.y - y).total_cmp(&(q.x - x).hypot(q.y - y))
            })
            .expect("grids have nodes")
    }

    /// Default anchor: the node nearest the centre of the shape.
    pub fn center_node(&self) -> usize {
        let (x0, x1, y0, y1) = self.shape.bounds();
        self.nearest_node(0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    /// Signed area enclosed by the boundary loop (shoelace formula).
    pub fn loop_signed_area(&self) -> f64 {
        let n = self.boundary_loop.len();
        (0..n)
            .map(|p| {
                let a = self.nodes[self.boundary_loop[p]];
                let b = self.nodes[self.boundary_loop[(p + 1) % n]];
                0.5 * (a.x * b.y - b.x * a.y)
            })
            .sum()
    }

    /// Two grids are interchangeable when built from the same parameters.
    pub fn same_as(&self, other: &GridDomain) -> bool {
        self.shape == other.shape && self.nx == other.nx && self.ny == other.ny
    }
}

/// Real values on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub domain: Arc<GridDomain>,
    pub values: Vec<f64>,
    /// Nodes outside the field's validity set; `None` means all valid.
    pub valid: Option<Vec<bool>>,
}

impl ScalarField {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != domain.node_count() {
            return Err(GridError::LengthMismatch { expected: domain.node_count(), got: values.len() });
        }
        Ok(ScalarField { domain, values, valid: None })
    }

    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        ScalarField { domain: Arc::clone(domain), values: vec![0.0; domain.node_count()], valid: None }
    }

    pub fn is_valid(&self, k: usize) -> bool {
        self.valid.as_ref().is_none_or(|v| v[k])
    }

    /// Largest |value| over valid nodes selected by `keep`.
    pub fn max_abs_where<P: Fn(usize) -> bool>(&self, keep: P) -> f64 {
        (0..self.values.len())
            .filter(|&k| self.is_valid(k) && keep(k))
            .map(|k| self.values[k].abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.max_abs_where(|k| !self.domain.is_boundary(k))
    }

    pub fn boundary_trace(&self) -> BoundaryFunction {
        BoundaryFunction {
            domain: Arc::clone(&self.domain),
            samples: self.domain.boundary_loop.iter().map(|&k| self.values[k]).collect(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField {
            domain: Arc::clone(&self.domain),
            values: self.values.iter().map(|&v| f(v)).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> Result<ScalarField, GridError> {
        if !self.domain.same_as(&other.domain) {
            return Err(GridError::DomainMismatch);
        }
        let valid = match (&self.valid, &other.valid) {
            (None, None) => None,
            _ => Some((0..self.values.len()).map(|k| self.is_valid(k) && other.is_valid(k)).collect()),
        };
        Ok(ScalarField {
            domain: Arc::clone(&self.domain),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            valid,
        })
    }
}

/// Values on the ordered boundary loop.
#[derive(Debug, Clone)]
pub struct BoundaryFunction {
    pub domain: Arc<GridDomain>,
    pub samples: Vec<f64>,
}

impl BoundaryFunction {
    pub fn new(domain: Arc<GridDomain>, samples: Vec<f64>) -> Result<Self, GridError> {
        let expected = domain.boundary_loop.len();
        if samples.len() != expected {
            return Err(GridError::LengthMismatch { expected, got: samples.len() });
        }
        Ok(BoundaryFunction { domain, samples })
    }

    /// Samples a function of the loop parameter θ.
    pub fn from_theta<F: Fn(f64) -> f64>(domain: &Arc<GridDomain>, f: F) -> Self {
        BoundaryFunction { domain: Arc::clone(domain), samples: domain.theta.iter().map(|&t| f(t)).collect() }
    }

    /// Samples a function of position at the boundary nodes.
    pub fn from_xy<F: Fn(f64, f64) -> f64>(domain: &Arc<GridDomain>, f: F) -> Self {
        let samples = domain
            .boundary_loop
            .iter()
            .map(|&k| {
                let n = domain.nodes[k];
                f(n.x, n.y)
            })
            .collect();
        BoundaryFunction { domain: Arc::clone(domain), samples }
    }

    pub fn theta(&self) -> &[f64] {
        &self.domain.theta
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Discrete (d/dx, d/dy). Second order at interior nodes; boundary nodes
/// use a local least-squares quadratic fit.
pub fn field_gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let grid = &f.domain;
    let n = grid.node_count();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut valid = f.valid.as_ref().map(|_| vec![true; n]);
    for k in 0..n {
        let (mut sx, mut sy) = (0.0, 0.0);
        let mut ok = true;
        for &(q, wx, wy) in &grid.grad_weights[k] {
            ok &= f.is_valid(q);
            sx += wx * f.values[q];
            sy += wy * f.values[q];
        }
        if let Some(v) = valid.as_mut() {
            v[k] = ok;
        }
        gx[k] = if ok { sx } else { f64::NAN };
        gy[k] = if ok { sy } else { f64::NAN };
    }
    (
        ScalarField { domain: Arc::clone(grid), values: gx, valid: valid.clone() },
        ScalarField { domain: Arc::clone(grid), values: gy, valid },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MorseReport {
    pub is_morse: bool,
    pub flat_segment_detected: bool,
    pub maxima: Vec<f64>,
    pub minima: Vec<f64>,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransverseReport {
    pub is_transverse: bool,
    pub tangential_zero_detected: bool,
    pub increasing_zeros: Vec<f64>,
    pub decreasing_zeros: Vec<f64>,
    pub l: usize,
}

pub fn classify_morse(phi: &BoundaryFunction) -> Result<MorseReport, GridError> {
    classify_morse_samples(phi.theta(), &phi.samples)
}

pub fn classify_transverse(w: &BoundaryFunction) -> Result<TransverseReport, GridError> {
    classify_transverse_samples(w.theta(), &w.samples)
}

/// Angular distance from `a` forward to `b`, in (0, 2π].
fn forward(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d == 0.0 {
        TAU
    } else {
        d
    }
}

/// Morse classification of a cyclic sample sequence at parameters `theta`.
pub fn classify_morse_samples(theta: &[f64], s: &[f64]) -> Result<MorseReport, GridError> {
    let n = s.len();
    if n < 8 {
        return Err(GridError::TooFewSamples(n));
    }
    let flat = (0..n).any(|i| s[i] == s[(i + 1) % n]);
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    if !flat {
        for i in 0..n {
            let (p, q) = ((i + n - 1) % n, (i + 1) % n);
            let is_max = s[i] > s[p] && s[i] > s[q];
            let is_min = s[i] < s[p] && s[i] < s[q];
            if is_max || is_min {
                let hl = forward(theta[p], theta[i]);
                let hr = forward(theta[i], theta[q]);
                let t = (theta[i] + parabola_vertex(hl, hr, s[p], s[i], s[q])).rem_euclid(TAU);
                if is_max {
                    maxima.push(t);
                } else {
                    minima.push(t);
                }
            }
        }
    }
    maxima.sort_by(f64::total_cmp);
    minima.sort_by(f64::total_cmp);
    let l = maxima.len();
    Ok(MorseReport { is_morse: !flat && l > 0 && l == minima.len(), flat_segment_detected: flat, maxima, minima, l })
}

/// Offset of the vertex of the parabola through (-hl, a), (0, b), (hr, c).
fn parabola_vertex(hl: f64, hr: f64, a: f64, b: f64, c: f64) -> f64 {
    let d1 = (b - a) / hl;
    let d2 = (c - b) / hr;
    let curvature = (d2 - d1) / (0.5 * (hl + hr));
    if curvature == 0.0 {
        return 0.0;
    }
    let slope_mid = d1 + curvature * 0.5 * hl;
    (-slope_mid / curvature).clamp(-hl, hr)
}

/// Transverse-zero classification of a cyclic sample sequence.
pub fn classify_transverse_samples(theta: &[f64], s: &[f64]) -> Result<TransverseReport, GridError> {
    let n = s.len();
    if n < 8 {
        return Err(GridError::TooFewSamples(n));
    }
    let mut increasing = Vec::new();
    let mut decreasing = Vec::new();
    let mut tangential = false;
    for i in 0..n {
        let q = (i + 1) % n;
        if s[i] == 0.0 {
            let p = (i + n - 1) % n;
            if s[p] < 0.0 && s[q] > 0.0 {
                increasing.push(theta[i]);
            } else if s[p] > 0.0 && s[q] < 0.0 {
                decreasing.push(theta[i]);
            } else {
                tangential = true;
            }
        } else if s[q] != 0.0 && (s[i] < 0.0) != (s[q] < 0.0) {
            let t = (theta[i] + forward(theta[i], theta[q]) * s[i] / (s[i] - s[q])).rem_euclid(TAU);
            if s[i] < 0.0 {
                increasing.push(t);
            } else {
                decreasing.push(t);
            }
        }
    }
    increasing.sort_by(f64::total_cmp);
    decreasing.sort_by(f64::total_cmp);
    let l = increasing.len();
    Ok(TransverseReport {
        is_transverse: !tangential && l == decreasing.len(),
        tangential_zero_detected: tangential,
        increasing_zeros: increasing,
        decreasing_zeros: decreasing,
        l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::signed_area;
    use proptest::prelude::*;

    fn disc(n: usize) -> Arc<GridDomain> {
        build_grid(GridShape::unit_disc(), n, n).unwrap()
    }

    fn point_in_polygon(grid: &GridDomain, x: f64, y: f64) -> bool {
        let lp = grid.boundary_loop();
        let mut inside = false;
        for p in 0..lp.len() {
            let a = grid.node(lp[p]);
            let b = grid.node(lp[(p + 1) % lp.len()]);
            if (a.y > y) != (b.y > y) && x < a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y) {
                inside = !inside;
            }
        }
        inside
    }

    #[test]
    fn unit_square_counts() {
        let g = build_grid(GridShape::unit_square(), 5, 5).unwrap();
        assert_eq!(g.node_count(), 25);
        assert_eq!(g.boundary_loop().len(), 16);
        assert_eq!(g.interior().len(), 9);
    }

    #[test]
    fn degenerate_shapes_rejected() {
        let bad = GridShape::Rectangle { x0: 0.0, x1: 1.0, y0: 0.0, y1: 0.0 };
        assert!(matches!(build_grid(bad, 5, 5), Err(GridError::InvalidShapeParameters(_))));
        let bad = GridShape::Disc { center: [0.0, 0.0], radius: -1.0 };
        assert!(matches!(build_grid(bad, 9, 9), Err(GridError::InvalidShapeParameters(_))));
        assert!(matches!(build_grid(GridShape::unit_square(), 3, 9), Err(GridError::ResolutionTooCoarse(_))));
    }

    #[test]
    fn disc_invariants_hold_across_resolutions() {
        for n in [4usize, 5, 8, 17, 24, 33, 40, 65] {
            let g = disc(n);
            for node in g.nodes() {
                assert!(node.x * node.x + node.y * node.y <= 1.0 + 4.0 * f64::EPSILON, "n = {n}");
            }
            assert!(g.loop_signed_area() > 0.0);
            let th = g.theta();
            assert_eq!(th[0], 0.0);
            assert!(th.windows(2).all(|w| w[1] > w[0]) && *th.last().unwrap() < TAU);
            for &k in g.interior() {
                let p = g.node(k);
                assert!(point_in_polygon(&g, p.x, p.y), "n = {n}: interior node outside loop");
            }
            for s in g.stencils() {
                for nb in [s.east, s.west, s.north, s.south] {
                    assert!(nb.h >= SNAP_FRACTION * g.spacing().0 * 0.999);
                }
            }
        }
    }

    #[test]
    fn rectangle_loop_is_counter_clockwise_from_corner() {
        let g = build_grid(GridShape::Rectangle { x0: -1.0, x1: 2.0, y0: 0.0, y1: 1.0 }, 7, 5).unwrap();
        let first = g.node(g.boundary_loop()[0]);
        assert_eq!((first.x, first.y), (-1.0, 0.0));
        assert!((g.loop_signed_area() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mesh_covers_the_loop_polygon() {
        for g in [disc(17), build_grid(GridShape::unit_square(), 6, 9).unwrap()] {
            let area: f64 = g
                .mesh()
                .triangles
                .iter()
                .map(|t| signed_area(g.mesh().points[t[0]], g.mesh().points[t[1]], g.mesh().points[t[2]]))
                .sum();
            assert!((area - g.loop_signed_area()).abs() < 1e-9 * area);
        }
    }

    #[test]
    fn gradient_exact_on_affine_and_bilinear() {
        for g in [disc(17), build_grid(GridShape::Rectangle { x0: 0.0, x1: 2.0, y0: -1.0, y1: 1.0 }, 9, 7).unwrap()] {
            let (gx, gy) = field_gradient(&g.sample(|x, y| 2.0 * x - 3.0 * y + 1.0));
            for k in 0..g.node_count() {
                assert!((gx.values[k] - 2.0).abs() < 1e-11 && (gy.values[k] + 3.0).abs() < 1e-11);
            }
            let (gx, gy) = field_gradient(&g.sample(|x, y| x * y));
            for k in 0..g.node_count() {
                let n = g.node(k);
                assert!((gx.values[k] - n.y).abs() < 1e-11 && (gy.values[k] - n.x).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn gradient_is_second_order_in_the_interior() {
        let err = |n: usize| {
            let g = build_grid(GridShape::Rectangle { x0: 0.0, x1: 2.0, y0: 0.0, y1: 1.0 }, n, n).unwrap();
            let (gx, _) = field_gradient(&g.sample(|x, _| x.sin()));
            g.interior().iter().map(|&k| (gx.values[k] - g.node(k).x.cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(17) / err(33);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn morse_examples() {
        let g = disc(33);
        let r = classify_morse(&BoundaryFunction::from_theta(&g, f64::cos)).unwrap();
        assert!(r.is_morse && r.l == 1);
        let near = |a: f64, b: f64| (a - b).abs().min(TAU - (a - b).abs());
        assert!(near(r.maxima[0], 0.0) < 0.05 && near(r.minima[0], std::f64::consts::PI) < 0.05);
        let r = classify_morse(&BoundaryFunction::from_theta(&g, |t| (2.0 * t).cos())).unwrap();
        assert!(r.is_morse && r.l == 2);
        let r = classify_morse(&BoundaryFunction::from_theta(&g, |_| 0.0)).unwrap();
        assert!(!r.is_morse && r.flat_segment_detected);
    }

    #[test]
    fn transverse_examples() {
        let g = disc(33);
        let r = classify_transverse(&BoundaryFunction::from_theta(&g, f64::sin)).unwrap();
        assert!(r.is_transverse && r.l == 1);
        assert!(r.increasing_zeros[0].abs() < 1e-12);
        assert!((r.decreasing_zeros[0] - std::f64::consts::PI).abs() < 0.05);
        let r = classify_transverse(&BoundaryFunction::from_theta(&g, |t| 1.0 + 0.5 * t.sin())).unwrap();
        assert!(r.is_transverse && r.l == 0);
        let r = classify_transverse(&BoundaryFunction::from_theta(&g, |t| t.sin().powi(2))).unwrap();
        assert!(!r.is_transverse);
    }

    #[test]
    fn too_few_samples_rejected() {
        let th: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert!(classify_morse_samples(&th, &[1.0, 2.0, 3.0, 2.0, 1.5]).is_err());
    }

    proptest! {
        #[test]
        fn classification_invariant_under_cyclic_reindexing(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 6),
            shift in 0usize..64,
        ) {
            let n = 64;
            let theta: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
            let s: Vec<f64> = theta.iter().map(|&t| {
                coeffs[0] * t.cos() + coeffs[1] * t.sin() + coeffs[2] * (2.0 * t).cos()
                    + coeffs[3] * (2.0 * t).sin() + coeffs[4] * (3.0 * t).cos() + coeffs[5]
            }).collect();
            let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(shift); w };
            let a = classify_morse_samples(&theta, &s).unwrap();
            let b = classify_morse_samples(&rot(&theta), &rot(&s)).unwrap();
            prop_assert_eq!(a.l, b.l);
            prop_assert_eq!(a.is_morse, b.is_morse);
            for (x, y) in a.maxima.iter().zip(&b.maxima) { prop_assert!((x - y).abs() < 1e-12); }
            let a = classify_transverse_samples(&theta, &s).unwrap();
            let b = classify_transverse_samples(&rot(&theta), &rot(&s)).unwrap();
            prop_assert_eq!(a.l, b.l);
            prop_assert_eq!(a.is_transverse, b.is_transverse);
            for (x, y) in a.increasing_zeros.iter().zip(&b.increasing_zeros) { prop_assert!((x - y).abs() < 1e-12); }
        }
    }
}
