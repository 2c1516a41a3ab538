//! Triangle meshes with point location, used for piecewise-linear
//! interpolation of nodal data.

/// A planar triangulation with counter-clockwise triangles.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    bins: Bins,
}

#[derive(Debug, Clone)]
struct Bins {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

/// Barycentric location of a point in a mesh triangle.
#[derive(Debug, Clone, Copy)]
pub struct Location {
    pub triangle: usize,
    pub weights: [f64; 3],
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl TriMesh {
    /// Builds a mesh; triangles are reoriented counter-clockwise and
    /// triangles with area below `min_area` are dropped.
    pub fn new(points: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, min_area: f64) -> Self {
        let triangles: Vec<[usize; 3]> = triangles
            .into_iter()
            .filter_map(|t| {
                let area = signed_area(points[t[0]], points[t[1]], points[t[2]]);
                if area.abs() <= min_area {
                    None
                } else if area > 0.0 {
                    Some(t)
                } else {
                    Some([t[0], t[2], t[1]])
                }
            })
            .collect();
        let bins = Bins::build(&points, &triangles);
        TriMesh { points, triangles, bins }
    }

    /// Delaunay triangulation of a point cloud.
    pub fn delaunay(points: Vec<[f64; 2]>, min_area: f64) -> Self {
        let pts: Vec<delaunator::Point> =
            points.iter().map(|p| delaunator::Point { x: p[0], y: p[1] }).collect();
        let tri = delaunator::triangulate(&pts);
        let triangles = tri
            .triangles
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        TriMesh::new(points, triangles, min_area)
    }

    /// Finds a triangle containing `p`, allowing barycentric weights down
    /// to `-slack`.
    pub fn locate(&self, p: [f64; 2], slack: f64) -> Option<Location> {
        let cell = self.bins.cell_of(p)?;
        let mut best: Option<Location> = None;
        let mut best_min = f64::NEG_INFINITY;
        for &t in &self.bins.cells[cell] {
            let t = t as usize;
            let w = self.barycentric(t, p);
            let m = w[0].min(w[1]).min(w[2]);
            if m >= 0.0 {
                return Some(Location { triangle: t, weights: w });
            }
            if m > best_min {
                best_min = m;
                best = Some(Location { triangle: t, weights: w });
            }
        }
        if best_min >= -slack {
            best
        } else {
            None
        }
    }

    /// All triangles whose barycentric weights at `p` exceed `margin`.
    pub fn containing_triangles(&self, p: [f64; 2], margin: f64) -> impl Iterator<Item = usize> + '_ {
        let cell = self.bins.cell_of(p);
        cell.into_iter().flat_map(move |c| {
            self.bins.cells[c].iter().map(|&t| t as usize).filter(move |&t| {
                let w = self.barycentric(t, p);
                w[0].min(w[1]).min(w[2]) > margin
            })
        })
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [i, j, k] = self.triangles[t];
        let (a, b, c) = (self.points[i], self.points[j], self.points[k]);
        let area = signed_area(a, b, c);
        let w0 = signed_area(p, b, c) / area;
        let w1 = signed_area(a, p, c) / area;
        [w0, w1, 1.0 - w0 - w1]
    }

    /// Piecewise-linear interpolation of nodal `values` at `p`.
    pub fn interpolate(&self, values: &[f64], p: [f64; 2], slack: f64) -> Option<f64> {
        let loc = self.locate(p, slack)?;
        Some(self.eval(values, &loc))
    }

    pub fn eval(&self, values: &[f64], loc: &Location) -> f64 {
        let t = self.triangles[loc.triangle];
        loc.weights[0] * values[t[0]] + loc.weights[1] * values[t[1]] + loc.weights[2] * values[t[2]]
    }
}

impl Bins {
    fn build(points: &[[f64; 2]], triangles: &[[usize; 3]]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in points {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        let side = ((triangles.len().max(1) as f64) / 2.0).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = (side, side);
        let dx = ((x1 - x0) / nx as f64).max(f64::MIN_POSITIVE);
        let dy = ((y1 - y0) / ny as f64).max(f64::MIN_POSITIVE);
        let mut bins = Bins { x0, y0, dx, dy, nx, ny, cells: vec![Vec::new(); nx * ny] };
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|i| points[i][0]);
            let ys = tri.map(|i| points[i][1]);
            let (ia, ib) = bins.span(xs.iter().cloned().fold(f64::MAX, f64::min), xs.iter().cloned().fold(f64::MIN, f64::max), true);
            let (ja, jb) = bins.span(ys.iter().cloned().fold(f64::MAX, f64::min), ys.iter().cloned().fold(f64::MIN, f64::max), false);
            for j in ja..=jb {
                for i in ia..=ib {
                    bins.cells[j * nx + i].push(t as u32);
                }
            }
        }
        bins
    }

    fn span(&self, lo: f64, hi: f64, along_x: bool) -> (usize, usize) {
        let (o, d, n) = if along_x { (self.x0, self.dx, self.nx) } else { (self.y0, self.dy, self.ny) };
        let a = (((lo - o) / d).floor().max(0.0) as usize).min(n - 1);
        let b = (((hi - o) / d).floor().max(0.0) as usize).min(n - 1);
        (a, b)
    }

    fn cell_of(&self, p: [f64; 2]) -> Option<usize> {
        let fx = (p[0] - self.x0) / self.dx;
        let fy = (p[1] - self.y0) / self.dy;
        let tol = 1e-9;
        if !(fx >= -tol && fy >= -tol && fx <= self.nx as f64 + tol && fy <= self.ny as f64 + tol) {
            return None;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.floor().max(0.0) as usize).min(self.ny - 1);
        Some(j * self.nx + i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_affine_data() {
        let mut pts = Vec::new();
        for j in 0..6 {
            for i in 0..6 {
                pts.push([i as f64 * 0.2 + 0.01 * (j as f64).sin(), j as f64 * 0.2]);
            }
        }
        let mesh = TriMesh::delaunay(pts.clone(), 1e-14);
        let vals: Vec<f64> = pts.iter().map(|p| 3.0 * p[0] - 2.0 * p[1] + 0.5).collect();
        for &(x, y) in &[(0.33, 0.41), (0.5, 0.5), (0.9, 0.1)] {
            let v = mesh.interpolate(&vals, [x, y], 1e-12).unwrap();
            assert!((v - (3.0 * x - 2.0 * y + 0.5)).abs() < 1e-12);
        }
        assert!(mesh.interpolate(&vals, [5.0, 5.0], 1e-12).is_none());
        for t in &mesh.triangles {
            assert!(signed_area(pts[t[0]], pts[t[1]], pts[t[2]]) > 0.0);
        }
    }
}
