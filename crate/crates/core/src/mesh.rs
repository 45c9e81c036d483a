//! Triangular meshes for the fluid box and the solid reference shapes.
//!
//! All generators work from analytic parametrizations: structured squares for
//! the fluid container, concentric rings for the disk and the flower, and a
//! polar grid for the annulus.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::{Error, Point, Result};

/// Tolerance used to flag vertices lying on an analytic boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Twice the signed area of the triangle `(a, b, c)`; positive when
/// counterclockwise.
#[inline]
pub fn cross3(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross3(a, b, c)
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Barycentric coordinates of `p` with respect to the triangle `t`.
#[inline]
pub fn barycentric(t: &[Point; 3], p: Point) -> [f64; 3] {
    let det = cross3(t[0], t[1], t[2]);
    let l1 = cross3(t[0], p, t[2]) / det;
    let l2 = cross3(t[0], t[1], p) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Point with barycentric coordinates `b` in the triangle `t`.
#[inline]
pub fn from_barycentric(t: &[Point; 3], b: [f64; 3]) -> Point {
    [
        b[0] * t[0][0] + b[1] * t[1][0] + b[2] * t[2][0],
        b[0] * t[0][1] + b[1] * t[1][1] + b[2] * t[2][1],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
    /// For a refined mesh, the index of the coarse triangle each triangle
    /// was cut from.
    pub parent_triangle: Option<Vec<usize>>,
}

impl TriMesh {
    /// Builds a mesh and flags its topological boundary (vertices on edges
    /// that belong to a single triangle).
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = TriMesh {
            boundary_vertex: vec![false; vertices.len()],
            vertices,
            triangles,
            parent_triangle: None,
        };
        mesh.validate()?;
        for (a, b) in mesh.boundary_edges() {
            mesh.boundary_vertex[a] = true;
            mesh.boundary_vertex[b] = true;
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    #[inline]
    pub fn triangle(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Checks index bounds and positive orientation of every triangle.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::arg(format!("triangle {t} references a missing vertex")));
            }
            if self.area(t) <= 0.0 {
                return Err(Error::arg(format!("triangle {t} is not positively oriented")));
            }
        }
        if self.boundary_vertex.len() != nv {
            return Err(Error::arg("boundary flag count does not match vertex count"));
        }
        Ok(())
    }

    /// Edges as sorted vertex pairs, in first-seen order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = ordered(tri[k], tri[(k + 1) % 3]);
                if seen.insert(e, ()).is_none() {
                    out.push(e);
                }
            }
        }
        out
    }

    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        let mut order = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = ordered(tri[k], tri[(k + 1) % 3]);
                let c = count.entry(e).or_insert(0);
                if *c == 0 {
                    order.push(e);
                }
                *c += 1;
            }
        }
        order.into_iter().filter(|e| count[e] == 1).collect()
    }

    /// Plain-text dump: `nv nt`, then `x y flag` per vertex, then `i0 i1 i2`
    /// per triangle.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n_vertices(), self.n_triangles());
        for (v, &b) in self.vertices.iter().zip(&self.boundary_vertex) {
            let _ = writeln!(s, "{:.17e} {:.17e} {}", v[0], v[1], u8::from(b));
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }
}

#[inline]
fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// `N × N` squares over the box `[lo, hi]`, each split along its
/// lower-left to upper-right diagonal.
pub fn build_structured_square(n: usize, lo: Point, hi: Point) -> Result<TriMesh> {
    if n == 0 {
        return Err(Error::arg("structured square needs N >= 1"));
    }
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::arg("upper corner must strictly dominate lower corner"));
    }
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    let mut boundary = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
            vertices.push([x, y]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * np + i;
            let v10 = v00 + 1;
            let v01 = v00 + np;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mesh = TriMesh {
        vertices,
        triangles,
        boundary_vertex: boundary,
        parent_triangle: None,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Splits every triangle into four by joining its edge midpoints.
///
/// Midpoints are shared between neighbours. Child `4t + k` has parent `t`.
pub fn refine_midpoint(mesh: &TriMesh) -> Result<TriMesh> {
    mesh.validate()?;
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary_vertex.clone();
    let boundary_edges: std::collections::HashSet<_> = mesh.boundary_edges().into_iter().collect();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut parents = Vec::with_capacity(4 * mesh.n_triangles());

    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>, boundary: &mut Vec<bool>| {
        let e = ordered(a, b);
        *mid.entry(e).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            boundary.push(boundary_edges.contains(&e));
            vertices.len() - 1
        })
    };

    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        let ab = midpoint(a, b, &mut vertices, &mut boundary);
        let bc = midpoint(b, c, &mut vertices, &mut boundary);
        let ca = midpoint(c, a, &mut vertices, &mut boundary);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
        parents.extend_from_slice(&[t; 4]);
    }
    let out = TriMesh {
        vertices,
        triangles,
        boundary_vertex: boundary,
        parent_triangle: Some(parents),
    };
    out.validate()?;
    Ok(out)
}

/// Concentric-ring triangulation of the star-shaped region
/// `{ c + ρ r(θ) (cos θ, sin θ) : 0 ≤ ρ ≤ 1 }`.
///
/// Ring `k` carries `6k` vertices at angles `offset + 2πj/(6k)`; consecutive
/// rings are stitched by merging their angle sequences.
fn ring_mesh(center: Point, rings: usize, offset: f64, radius: impl Fn(f64) -> f64) -> TriMesh {
    // Interior rings blend from a circle of the mean radius to the boundary
    // curve, and the angular spacing blends from uniform to uniform in arc
    // length, which keeps elements near the center and at the tips of a
    // non-circular boundary comparable in size.
    let m = 4096;
    let point = |phi: f64| {
        let th = offset + 2.0 * PI * phi;
        let r = radius(th);
        [r * th.cos(), r * th.sin()]
    };
    let mut arc = vec![0.0; m + 1];
    let mut mean = 0.0;
    for j in 0..m {
        let (a, b) = (point(j as f64 / m as f64), point((j + 1) as f64 / m as f64));
        arc[j + 1] = arc[j] + dist(a, b);
        mean += radius(offset + 2.0 * PI * j as f64 / m as f64) / m as f64;
    }
    let total = arc[m];
    // parameter φ at which the normalized arc length equals t
    let inverse_arc = |t: f64| {
        let target = t * total;
        let j = arc.partition_point(|&a| a < target).clamp(1, m);
        let frac = (target - arc[j - 1]) / (arc[j] - arc[j - 1]);
        (j - 1) as f64 / m as f64 + frac / m as f64
    };
    let mut vertices = vec![center];
    let mut boundary = vec![false];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(vertices.len());
        let n = 6 * k;
        let rho = k as f64 / rings as f64;
        for j in 0..n {
            let t = j as f64 / n as f64;
            let th = offset + 2.0 * PI * ((1.0 - rho) * t + rho * inverse_arc(t));
            let r = if k == rings {
                radius(th)
            } else {
                rho * (mean + rho * (radius(th) - mean))
            };
            vertices.push([center[0] + r * th.cos(), center[1] + r * th.sin()]);
            boundary.push(k == rings);
        }
    }
    let mut triangles = Vec::with_capacity(6 * rings * rings);
    for j in 0..6 {
        let a = ring_start[1] + j;
        let b = ring_start[1] + (j + 1) % 6;
        triangles.push([0, a, b]);
    }
    for k in 2..=rings {
        let (n_in, n_out) = (6 * (k - 1), 6 * k);
        let (s_in, s_out) = (ring_start[k - 1], ring_start[k]);
        let (mut i, mut j) = (0usize, 0usize);
        while i < n_in || j < n_out {
            let next_in = (i + 1) as f64 / n_in as f64;
            let next_out = (j + 1) as f64 / n_out as f64;
            let vi = s_in + i % n_in;
            let vj = s_out + j % n_out;
            if j < n_out && (i >= n_in || next_out <= next_in) {
                triangles.push([vi, vj, s_out + (j + 1) % n_out]);
                j += 1;
            } else {
                triangles.push([vi, vj, s_in + (i + 1) % n_in]);
                i += 1;
            }
        }
    }
    TriMesh {
        vertices,
        triangles,
        boundary_vertex: boundary,
        parent_triangle: None,
    }
}

/// Number of rings of a disk-like mesh at `level`, starting from `base`.
pub fn rings_at_level(base: usize, level: u32) -> usize {
    base << level
}

pub const DISK_BASE_RINGS: usize = 2;
pub const FLOWER_BASE_RINGS: usize = 3;

/// Quasi-uniform triangulation of a disk; level `l` has `2·2^l` rings.
pub fn build_disk_mesh(center: Point, radius: f64, level: u32) -> Result<TriMesh> {
    build_disk_mesh_rings(center, radius, rings_at_level(DISK_BASE_RINGS, level))
}

pub fn build_disk_mesh_rings(center: Point, radius: f64, rings: usize) -> Result<TriMesh> {
    if radius.is_nan() || radius <= 0.0 || rings == 0 {
        return Err(Error::arg("disk needs radius > 0 and at least one ring"));
    }
    let mesh = ring_mesh(center, rings, 0.0, |_| radius);
    mesh.validate()?;
    Ok(mesh)
}

/// Flower boundary radius `r0 (1 + a (1 + cos(pθ)) / 2)`; its minimum is
/// `r0`, reached at `θ = π/p (mod 2π/p)`.
pub fn flower_radius(r0: f64, amplitude: f64, petals: u32, theta: f64) -> f64 {
    r0 * (1.0 + amplitude * (1.0 + (petals as f64 * theta).cos()) / 2.0)
}

/// Triangulation of the flower-shaped region; level `l` has `3·2^l` rings.
pub fn build_flower_mesh(center: Point, r0: f64, amplitude: f64, petals: u32, level: u32) -> Result<TriMesh> {
    build_flower_mesh_rings(center, r0, amplitude, petals, rings_at_level(FLOWER_BASE_RINGS, level))
}

pub fn build_flower_mesh_rings(center: Point, r0: f64, amplitude: f64, petals: u32, rings: usize) -> Result<TriMesh> {
    if r0.is_nan() || r0 <= 0.0 || !(0.0..1.0).contains(&amplitude) || petals < 3 || rings == 0 {
        return Err(Error::arg("flower needs r0 > 0, 0 <= amplitude < 1, petals >= 3"));
    }
    // Rotate the rings so that boundary vertices hit the inscribed circle.
    let offset = if amplitude > 0.0 { PI / petals as f64 } else { 0.0 };
    let mesh = ring_mesh(center, rings, offset, |th| flower_radius(r0, amplitude, petals, th));
    mesh.validate()?;
    Ok(mesh)
}

/// Angular and radial cell counts of the annulus at `level`.
pub fn annulus_counts(level: u32) -> (usize, usize) {
    (16 << level, 2 << level)
}

/// Polar grid triangulation of the annulus `r_in ≤ |x − c| ≤ r_out`.
pub fn build_annulus_mesh(center: Point, r_in: f64, r_out: f64, level: u32) -> Result<TriMesh> {
    let (n_ang, n_rad) = annulus_counts(level);
    build_annulus_mesh_counts(center, r_in, r_out, n_ang, n_rad)
}

/// `n_ang × n_rad` polar quads, each split into two triangles.
pub fn build_annulus_mesh_counts(center: Point, r_in: f64, r_out: f64, n_ang: usize, n_rad: usize) -> Result<TriMesh> {
    if !(r_in > 0.0 && r_in < r_out) {
        return Err(Error::arg("annulus needs 0 < r_in < r_out"));
    }
    if n_ang < 3 || n_rad == 0 {
        return Err(Error::arg("annulus needs n_ang >= 3 and n_rad >= 1"));
    }
    let mut vertices = Vec::with_capacity(n_ang * (n_rad + 1));
    let mut boundary = Vec::with_capacity(n_ang * (n_rad + 1));
    for i in 0..=n_rad {
        let r = if i == n_rad {
            r_out
        } else {
            r_in + (r_out - r_in) * i as f64 / n_rad as f64
        };
        for j in 0..n_ang {
            let th = 2.0 * PI * j as f64 / n_ang as f64;
            vertices.push([center[0] + r * th.cos(), center[1] + r * th.sin()]);
            boundary.push(i == 0 || i == n_rad);
        }
    }
    let id = |i: usize, j: usize| i * n_ang + j % n_ang;
    let mut triangles = Vec::with_capacity(2 * n_ang * n_rad);
    for i in 0..n_rad {
        for j in 0..n_ang {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mesh = TriMesh {
        vertices,
        triangles,
        boundary_vertex: boundary,
        parent_triangle: None,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Largest and smallest triangle diameter.
pub fn mesh_size(mesh: &TriMesh) -> (f64, f64) {
    let mut h_max = 0.0f64;
    let mut h_min = f64::INFINITY;
    for t in 0..mesh.n_triangles() {
        let d = mesh.diameter(t);
        h_max = h_max.max(d);
        h_min = h_min.min(d);
    }
    (h_max, h_min)
}

/// Analytic description of the fluid containers and solid reference shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryDescriptor {
    /// `[0, 1]²`
    UnitSquareBox,
    /// `[-2, 2]²`
    SquareContainer4x4,
    Disk {
        center: Point,
        radius: f64,
    },
    Flower {
        center: Point,
        r0: f64,
        amplitude: f64,
        petals: u32,
    },
    Annulus {
        center: Point,
        r_in: f64,
        r_out: f64,
    },
}

impl GeometryDescriptor {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GeometryDescriptor::UnitSquareBox | GeometryDescriptor::SquareContainer4x4 => Ok(()),
            GeometryDescriptor::Disk { radius, .. } if radius > 0.0 => Ok(()),
            GeometryDescriptor::Flower {
                r0, amplitude, petals, ..
            } if r0 > 0.0 && (0.0..1.0).contains(&amplitude) && petals >= 3 => Ok(()),
            GeometryDescriptor::Annulus { r_in, r_out, .. } if r_in > 0.0 && r_in < r_out => Ok(()),
            _ => Err(Error::arg(format!("invalid geometry parameters: {self:?}"))),
        }
    }

    /// Bounds of a box geometry.
    pub fn box_bounds(&self) -> Option<(Point, Point)> {
        match self {
            GeometryDescriptor::UnitSquareBox => Some(([0.0, 0.0], [1.0, 1.0])),
            GeometryDescriptor::SquareContainer4x4 => Some(([-2.0, -2.0], [2.0, 2.0])),
            _ => None,
        }
    }

    /// Exact area of the analytic region.
    pub fn area(&self) -> f64 {
        match *self {
            GeometryDescriptor::UnitSquareBox => 1.0,
            GeometryDescriptor::SquareContainer4x4 => 16.0,
            GeometryDescriptor::Disk { radius, .. } => PI * radius * radius,
            GeometryDescriptor::Flower { r0, amplitude, .. } => {
                // ∫ r²/2 dθ with r = r0 (1 + a/2 + (a/2) cos pθ)
                let m = 1.0 + amplitude / 2.0;
                let q = amplitude / 2.0;
                PI * r0 * r0 * (m * m + q * q / 2.0)
            }
            GeometryDescriptor::Annulus { r_in, r_out, .. } => PI * (r_out * r_out - r_in * r_in),
        }
    }

    /// Whether `p` lies on the analytic boundary within [`BOUNDARY_TOL`].
    pub fn on_boundary(&self, p: Point) -> bool {
        let tol = BOUNDARY_TOL;
        match *self {
            GeometryDescriptor::UnitSquareBox | GeometryDescriptor::SquareContainer4x4 => {
                let (lo, hi) = self.box_bounds().unwrap();
                (0..2).any(|k| (p[k] - lo[k]).abs() <= tol || (p[k] - hi[k]).abs() <= tol)
            }
            GeometryDescriptor::Disk { center, radius } => (dist(p, center) - radius).abs() <= tol,
            GeometryDescriptor::Flower {
                center,
                r0,
                amplitude,
                petals,
            } => {
                let th = (p[1] - center[1]).atan2(p[0] - center[0]);
                (dist(p, center) - flower_radius(r0, amplitude, petals, th)).abs() <= tol
            }
            GeometryDescriptor::Annulus { center, r_in, r_out } => {
                let r = dist(p, center);
                (r - r_in).abs() <= tol || (r - r_out).abs() <= tol
            }
        }
    }

    /// Mesh of the region at a refinement level. Box geometries use an
    /// `8·2^level` structured grid.
    pub fn build(&self, level: u32) -> Result<TriMesh> {
        self.validate()?;
        match *self {
            GeometryDescriptor::UnitSquareBox | GeometryDescriptor::SquareContainer4x4 => {
                let (lo, hi) = self.box_bounds().unwrap();
                build_structured_square(8 << level, lo, hi)
            }
            GeometryDescriptor::Disk { center, radius } => build_disk_mesh(center, radius, level),
            GeometryDescriptor::Flower {
                center,
                r0,
                amplitude,
                petals,
            } => build_flower_mesh(center, r0, amplitude, petals, level),
            GeometryDescriptor::Annulus { center, r_in, r_out } => build_annulus_mesh(center, r_in, r_out, level),
        }
    }
}
