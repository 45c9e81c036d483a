//! Point location and clipping of mapped solid elements against the fluid
//! mesh.
//!
//! Predicates use plain double precision with a tolerance of `1e-14` times
//! the local length scale. The intersection table is built independently
//! per solid element, so the result does not depend on the execution policy.

use std::fmt::Write as _;

use crate::mesh::{cross3, dist, signed_area, TriMesh};
use crate::parallel::Exec;
use crate::{Error, Point, Result};

/// Relative tolerance of the clipping predicates.
pub const CLIP_TOL: f64 = 1e-14;
/// Intersection polygons smaller than this fraction of the mapped element
/// area are dropped.
pub const DROP_TOL: f64 = 1e-14;
/// Allowed escape of a mapped solid element outside the fluid box.
pub const ESCAPE_TOL: f64 = 1e-10;

pub type Triangle = [Point; 3];

/// Counterclockwise convex polygon; empty or at least three vertices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        ConvexPolygon { vertices: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }
}

fn length_scale(pts: &[Point]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    dist(lo, hi)
}

/// Intersection of two positively oriented triangles by successive
/// half-plane clipping of `subject` against the edges of `clipper`.
pub fn clip_triangles(subject: &Triangle, clipper: &Triangle) -> Result<ConvexPolygon> {
    for (name, t) in [("subject", subject), ("clipper", clipper)] {
        let s = length_scale(t);
        if signed_area(t[0], t[1], t[2]) <= CLIP_TOL * s * s {
            return Err(Error::arg(format!("degenerate or negatively oriented {name} triangle")));
        }
    }
    let mut all = subject.to_vec();
    all.extend_from_slice(clipper);
    let eps = CLIP_TOL * length_scale(&all);

    let mut poly: Vec<Point> = subject.to_vec();
    let mut next = Vec::with_capacity(9);
    for k in 0..3 {
        let a = clipper[k];
        let b = clipper[(k + 1) % 3];
        let len = dist(a, b);
        let side = |p: Point| cross3(a, b, p) / len;
        next.clear();
        let n = poly.len();
        for i in 0..n {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            let (dp, dq) = (side(p), side(q));
            if dp >= -eps {
                next.push(p);
            }
            let crosses = (dp > eps && dq < -eps) || (dp < -eps && dq > eps);
            if crosses {
                let t = dp / (dp - dq);
                next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        std::mem::swap(&mut poly, &mut next);
        if poly.len() < 3 {
            return Ok(ConvexPolygon::empty());
        }
    }
    // remove duplicate consecutive vertices
    let mut out: Vec<Point> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|&l| dist(l, p) > eps) {
            out.push(p);
        }
    }
    while out.len() > 1 && dist(out[0], *out.last().unwrap()) <= eps {
        out.pop();
    }
    if out.len() < 3 {
        return Ok(ConvexPolygon::empty());
    }
    Ok(ConvexPolygon { vertices: out })
}

/// Fan triangulation from vertex 0.
pub fn fan_triangulate(poly: &ConvexPolygon) -> Vec<Triangle> {
    if poly.is_empty() {
        return Vec::new();
    }
    let v = &poly.vertices;
    (1..v.len() - 1).map(|i| [v[0], v[i], v[i + 1]]).collect()
}

/// Uniform bucket grid over the bounding box of the fluid mesh.
#[derive(Debug, Clone)]
pub struct BackgroundGrid {
    pub lo: Point,
    pub hi: Point,
    pub nx: usize,
    pub ny: usize,
    cell: [f64; 2],
    buckets: Vec<Vec<usize>>,
}

impl BackgroundGrid {
    /// Buckets sized close to the mean triangle diameter.
    pub fn new(mesh: &TriMesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let mean_h = (0..mesh.n_triangles()).map(|t| mesh.diameter(t)).sum::<f64>() / mesh.n_triangles().max(1) as f64;
        let nx = (((hi[0] - lo[0]) / mean_h).ceil() as usize).clamp(1, 4096);
        let ny = (((hi[1] - lo[1]) / mean_h).ceil() as usize).clamp(1, 4096);
        let cell = [(hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64];
        let mut grid = BackgroundGrid {
            lo,
            hi,
            nx,
            ny,
            cell,
            buckets: vec![Vec::new(); nx * ny],
        };
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangle(t);
            let (blo, bhi) = tri_bbox(&tri);
            let (i0, j0) = grid.bucket_of(blo);
            let (i1, j1) = grid.bucket_of(bhi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    grid.buckets[j * nx + i].push(t);
                }
            }
        }
        grid
    }

    fn bucket_of(&self, p: Point) -> (usize, usize) {
        let fi = ((p[0] - self.lo[0]) / self.cell[0]).floor();
        let fj = ((p[1] - self.lo[1]) / self.cell[1]).floor();
        (
            (fi.max(0.0) as usize).min(self.nx - 1),
            (fj.max(0.0) as usize).min(self.ny - 1),
        )
    }

    pub fn bucket(&self, i: usize, j: usize) -> &[usize] {
        &self.buckets[j * self.nx + i]
    }

    /// Sorted, deduplicated triangles whose buckets touch the box.
    pub fn candidates(&self, lo: Point, hi: Point) -> Vec<usize> {
        if hi[0] < self.lo[0] || hi[1] < self.lo[1] || lo[0] > self.hi[0] || lo[1] > self.hi[1] {
            return Vec::new();
        }
        let (i0, j0) = self.bucket_of(lo);
        let (i1, j1) = self.bucket_of(hi);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(self.bucket(i, j));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

pub fn tri_bbox(t: &Triangle) -> (Point, Point) {
    let lo = [t[0][0].min(t[1][0]).min(t[2][0]), t[0][1].min(t[1][1]).min(t[2][1])];
    let hi = [t[0][0].max(t[1][0]).max(t[2][0]), t[0][1].max(t[1][1]).max(t[2][1])];
    (lo, hi)
}

/// Smallest signed distance from `p` to the edge lines of `t`, positive
/// inside.
pub fn inside_distance(t: &Triangle, p: Point) -> f64 {
    (0..3)
        .map(|k| {
            let a = t[k];
            let b = t[(k + 1) % 3];
            cross3(a, b, p) / dist(a, b)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Absolute tolerance of [`locate_point`].
pub const LOCATE_TOL: f64 = 1e-12;

/// A fluid element containing `p`, or `None` when `p` lies outside the
/// mesh by more than [`LOCATE_TOL`]. Among candidates the most interior
/// one wins, ties broken by the lower index.
pub fn locate_point(grid: &BackgroundGrid, fluid: &TriMesh, p: Point) -> Option<usize> {
    let tol = [LOCATE_TOL, LOCATE_TOL];
    let cands = grid.candidates([p[0] - tol[0], p[1] - tol[1]], [p[0] + tol[0], p[1] + tol[1]]);
    let mut best: Option<(usize, f64)> = None;
    for t in cands {
        let d = inside_distance(&fluid.triangle(t), p);
        if d >= -LOCATE_TOL && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((t, d));
        }
    }
    best.map(|(t, _)| t)
}

/// One non-empty intersection of a mapped solid element with a fluid
/// element.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub fluid: usize,
    pub polygon: ConvexPolygon,
    pub area: f64,
    /// Fan triangles of `polygon`, in physical coordinates.
    pub sub_triangles: Vec<Triangle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionTable {
    /// Pieces of each solid element, ordered by fluid element index.
    pub entries: Vec<Vec<Piece>>,
    /// `|X̄(T_s)|` for each solid element.
    pub mapped_area: Vec<f64>,
}

/// Mapped solid element `s`: the affine image of its vertices.
pub fn mapped_triangle(solid: &TriMesh, mapped_vertices: &[Point], s: usize) -> Triangle {
    let [a, b, c] = solid.triangles[s];
    [mapped_vertices[a], mapped_vertices[b], mapped_vertices[c]]
}

/// Orders a triangle counterclockwise.
fn ccw(t: Triangle) -> Triangle {
    if signed_area(t[0], t[1], t[2]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

impl IntersectionTable {
    /// Clips every mapped solid element against the fluid elements found
    /// through `grid`.
    ///
    /// `mapped_vertices[v]` is the image of solid vertex `v` under the
    /// (piecewise affine) configuration map.
    pub fn build(solid: &TriMesh, mapped_vertices: &[Point], fluid: &TriMesh, grid: &BackgroundGrid) -> Result<Self> {
        Self::build_with(Exec::default(), solid, mapped_vertices, fluid, grid)
    }

    pub fn build_with(
        exec: Exec,
        solid: &TriMesh,
        mapped_vertices: &[Point],
        fluid: &TriMesh,
        grid: &BackgroundGrid,
    ) -> Result<Self> {
        if mapped_vertices.len() != solid.n_vertices() {
            return Err(Error::arg("one mapped position per solid vertex is required"));
        }
        let (flo, fhi) = fluid.bounding_box();
        let rows = exec.map(solid.n_triangles(), |s| -> Result<(Vec<Piece>, f64)> {
            let tri = ccw(mapped_triangle(solid, mapped_vertices, s));
            for p in &tri {
                let out = (flo[0] - p[0]).max(p[0] - fhi[0]).max(flo[1] - p[1]).max(p[1] - fhi[1]);
                if out > ESCAPE_TOL {
                    return Err(Error::Geometry(format!(
                        "mapped solid element {s} leaves the fluid domain by {out:e}"
                    )));
                }
            }
            let area = signed_area(tri[0], tri[1], tri[2]);
            let (lo, hi) = tri_bbox(&tri);
            let mut pieces = Vec::new();
            for f in grid.candidates(lo, hi) {
                let ft = fluid.triangle(f);
                let (flo, fhi) = tri_bbox(&ft);
                if fhi[0] < lo[0] || fhi[1] < lo[1] || flo[0] > hi[0] || flo[1] > hi[1] {
                    continue;
                }
                let poly = clip_triangles(&tri, &ft)?;
                let a = poly.area();
                if poly.is_empty() || a < DROP_TOL * area {
                    continue;
                }
                let sub_triangles = fan_triangulate(&poly);
                pieces.push(Piece {
                    fluid: f,
                    polygon: poly,
                    area: a,
                    sub_triangles,
                });
            }
            Ok((pieces, area))
        });
        let mut entries = Vec::with_capacity(rows.len());
        let mut mapped_area = Vec::with_capacity(rows.len());
        for r in rows {
            let (p, a) = r?;
            entries.push(p);
            mapped_area.push(a);
        }
        Ok(IntersectionTable { entries, mapped_area })
    }

    pub fn n_pieces(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    /// Sum of the piece areas of solid element `s`.
    pub fn covered_area(&self, s: usize) -> f64 {
        self.entries[s].iter().map(|p| p.area).sum()
    }

    /// Smallest intersection polygon area over the whole table.
    pub fn min_piece_area(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .map(|p| p.area)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|Σ piece areas − mapped area| / mapped area`.
    pub fn max_partition_defect(&self) -> f64 {
        (0..self.entries.len())
            .map(|s| (self.covered_area(s) - self.mapped_area[s]).abs() / self.mapped_area[s])
            .fold(0.0, f64::max)
    }

    pub fn piece_areas(&self, s: usize) -> Vec<f64> {
        self.entries[s].iter().map(|p| p.area).collect()
    }

    /// One line per polygon: `solid fluid area x0 y0 x1 y1 …`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, pieces) in self.entries.iter().enumerate() {
            for p in pieces {
                let _ = write!(out, "{} {} {:.17e}", s, p.fluid, p.area);
                for v in &p.polygon.vertices {
                    let _ = write!(out, " {:.17e} {:.17e}", v[0], v[1]);
                }
                out.push('\n');
            }
        }
        out
    }
}
