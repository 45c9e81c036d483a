//! Blocks of the saddle-point matrix and manufactured right-hand sides.
//!
//! Unknowns are laid out as `[u | X | λ | p]` and the full matrix follows
//!
//! ```text
//! [ A_f   0    C_fᵀ  -B_fᵀ ]
//! [ 0     A_s -C_sᵀ   0    ]
//! [-C_f   C_s  0      0    ]
//! [ B_f   0    0      0    ]
//! ```
//!
//! Element loops run through [`Exec`]; per-element contributions are merged in
//! element order, so matrices are bitwise identical for every policy.

use crate::femspace::{build_dof_map, make_rule, p1_gradients, DofMap, FieldKind, FieldVector, QuadratureRule};
use crate::geometry::{locate_point, BackgroundGrid, IntersectionTable};
use crate::mesh::{barycentric, from_barycentric, refine_midpoint, signed_area, TriMesh};
use crate::parallel::Exec;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Mat2, Point, Result};

/// Quadrature degree of manufactured right-hand sides and error norms.
pub const RHS_DEGREE: u32 = 6;

/// Relative mismatch between a table and the current map that marks the
/// table as stale.
pub const STALE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingKind {
    /// L² pairing `(μ, Y)_B`.
    C0,
    /// Full H¹ inner product `(μ, Y)_B + (∇μ, ∇Y)_B`.
    C1,
}

impl CouplingKind {
    pub fn name(self) -> &'static str {
        match self {
            CouplingKind::C0 => "c0",
            CouplingKind::C1 => "c1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssemblyMode {
    /// Composite quadrature on the intersection of the mapped solid mesh
    /// with the fluid mesh.
    Exact,
    /// One quadrature rule per mapped solid element.
    Inexact,
}

impl AssemblyMode {
    pub fn name(self) -> &'static str {
        match self {
            AssemblyMode::Exact => "exact",
            AssemblyMode::Inexact => "inexact",
        }
    }
}

/// Coefficients of the stationary problem:
/// `a_f(u,v) = α(u,v) + ν(ε(u),ε(v))`, `a_s(X,Y) = β(X,Y) + γ(∇X,∇Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
}

impl Parameters {
    pub fn validate(&self) -> Result<()> {
        if self.nu > 0.0 && self.gamma > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0 {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid parameters {self:?}")))
        }
    }
}

/// Closed-form solution of a stationary problem. Every field returns its
/// value and its gradient (`grad[i][j] = ∂_j f_i`).
pub trait ExactSolution: Sync {
    fn velocity(&self, x: Point) -> ([f64; 2], Mat2);
    fn pressure(&self, x: Point) -> f64;
    fn deformation(&self, s: Point) -> ([f64; 2], Mat2);
    fn multiplier(&self, s: Point) -> ([f64; 2], Mat2);
}

/// Meshes, dof maps and the point-location grid of one discretization.
///
/// Velocity lives on `fluid_half` (the midpoint refinement of
/// `fluid_coarse`), pressure on `fluid_coarse`, deformation and multiplier
/// on `solid`.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub fluid_coarse: TriMesh,
    pub fluid_half: TriMesh,
    pub solid: TriMesh,
    pub u_map: DofMap,
    pub p_map: DofMap,
    pub x_map: DofMap,
    pub l_map: DofMap,
    pub grid: BackgroundGrid,
}

impl Discretization {
    pub fn new(fluid_coarse: TriMesh, solid: TriMesh) -> Result<Self> {
        let fluid_half = refine_midpoint(&fluid_coarse)?;
        let grid = BackgroundGrid::new(&fluid_half);
        Ok(Discretization {
            u_map: build_dof_map(&fluid_half, FieldKind::Velocity),
            p_map: build_dof_map(&fluid_coarse, FieldKind::Pressure),
            x_map: build_dof_map(&solid, FieldKind::Deformation),
            l_map: build_dof_map(&solid, FieldKind::Multiplier),
            fluid_coarse,
            fluid_half,
            solid,
            grid,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n_u: self.u_map.n_dofs(),
            n_x: self.x_map.n_dofs(),
            n_l: self.l_map.n_dofs(),
            n_p: self.p_map.n_dofs(),
        }
    }

    /// Intersection table of the solid mesh mapped by `xbar`.
    pub fn intersection_table(&self, xbar: &FieldVector) -> Result<IntersectionTable> {
        IntersectionTable::build(
            &self.solid,
            &mapped_vertices(xbar, &self.x_map),
            &self.fluid_half,
            &self.grid,
        )
    }
}

/// Nodal positions of a deformation field.
pub fn mapped_vertices(xbar: &FieldVector, x_map: &DofMap) -> Vec<Point> {
    (0..x_map.n_vertices).map(|v| xbar.nodal(x_map, v)).collect()
}

/// Sizes of the four unknown blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_u: usize,
    pub n_x: usize,
    pub n_l: usize,
    pub n_p: usize,
}

impl Layout {
    pub fn off_x(&self) -> usize {
        self.n_u
    }
    pub fn off_l(&self) -> usize {
        self.n_u + self.n_x
    }
    pub fn off_p(&self) -> usize {
        self.n_u + self.n_x + self.n_l
    }
    pub fn total(&self) -> usize {
        self.n_u + self.n_x + self.n_l + self.n_p
    }
}

fn assemble_elements<F>(exec: Exec, n_el: usize, nrows: usize, ncols: usize, f: F) -> CsrMatrix
where
    F: Fn(usize) -> Vec<(usize, usize, f64)> + Sync + Send,
{
    let local = exec.map(n_el, f);
    let mut b = TripletBuilder::new(nrows, ncols);
    b.extend(local.into_iter().flatten());
    b.into_csr()
}

fn p1_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

#[inline]
fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `α` · vector mass + `ν` · symmetric-gradient stiffness on the velocity
/// mesh.
pub fn assemble_af(fluid_half: &TriMesh, u_map: &DofMap, params: &Parameters) -> CsrMatrix {
    assemble_af_with(Exec::default(), fluid_half, u_map, params)
}

pub fn assemble_af_with(exec: Exec, mesh: &TriMesh, u_map: &DofMap, params: &Parameters) -> CsrMatrix {
    let n = u_map.n_dofs();
    assemble_elements(exec, mesh.n_triangles(), n, n, |t| {
        let tri = mesh.triangle(t);
        let area = signed_area(tri[0], tri[1], tri[2]);
        let g = p1_gradients(&tri);
        let m = p1_mass(area);
        let v = mesh.triangles[t];
        let mut out = Vec::with_capacity(36);
        for i in 0..3 {
            for j in 0..3 {
                let gg = dot2(g[i], g[j]);
                for a in 0..2 {
                    for b in 0..2 {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let val =
                            params.alpha * delta * m[i][j] + params.nu * area * 0.5 * (delta * gg + g[i][b] * g[j][a]);
                        out.push((u_map.index(v[i], a), u_map.index(v[j], b), val));
                    }
                }
            }
        }
        out
    })
}

/// `mass` · vector mass + `stiff` · componentwise gradient stiffness.
pub fn assemble_vector_mass_stiffness(mesh: &TriMesh, map: &DofMap, mass: f64, stiff: f64) -> CsrMatrix {
    let n = map.n_dofs();
    assemble_elements(Exec::default(), mesh.n_triangles(), n, n, |t| {
        let tri = mesh.triangle(t);
        let area = signed_area(tri[0], tri[1], tri[2]);
        let g = p1_gradients(&tri);
        let m = p1_mass(area);
        let v = mesh.triangles[t];
        let mut out = Vec::with_capacity(18);
        for i in 0..3 {
            for j in 0..3 {
                let val = mass * m[i][j] + stiff * area * dot2(g[i], g[j]);
                for a in 0..map.components {
                    out.push((map.index(v[i], a), map.index(v[j], a), val));
                }
            }
        }
        out
    })
}

/// Divergence block `(div φ_j, ψ_i)`, rows on pressure dofs.
pub fn assemble_bf(fluid_half: &TriMesh, fluid_coarse: &TriMesh, u_map: &DofMap, p_map: &DofMap) -> Result<CsrMatrix> {
    let parents = fluid_half
        .parent_triangle
        .as_ref()
        .ok_or_else(|| Error::arg("velocity mesh carries no parent links"))?;
    if parents.len() != fluid_half.n_triangles() || parents.iter().any(|&p| p >= fluid_coarse.n_triangles()) {
        return Err(Error::arg("parent links do not match the pressure mesh"));
    }
    Ok(assemble_elements(
        Exec::default(),
        fluid_half.n_triangles(),
        p_map.n_dofs(),
        u_map.n_dofs(),
        |t| {
            let tri = fluid_half.triangle(t);
            let area = signed_area(tri[0], tri[1], tri[2]);
            let g = p1_gradients(&tri);
            let centroid = from_barycentric(&tri, [1.0 / 3.0; 3]);
            let parent = parents[t];
            let psi = barycentric(&fluid_coarse.triangle(parent), centroid);
            let pv = fluid_coarse.triangles[parent];
            let uv = fluid_half.triangles[t];
            let mut out = Vec::with_capacity(18);
            for i in 0..3 {
                for j in 0..3 {
                    for a in 0..2 {
                        out.push((p_map.index(pv[i], 0), u_map.index(uv[j], a), area * psi[i] * g[j][a]));
                    }
                }
            }
            out
        },
    ))
}

/// `β` · vector mass + `γ` · componentwise stiffness on the solid mesh.
pub fn assemble_as(solid: &TriMesh, x_map: &DofMap, params: &Parameters) -> CsrMatrix {
    assemble_vector_mass_stiffness(solid, x_map, params.beta, params.gamma)
}

/// Solid coupling block `c(μ_i, Y_j)`; rows on multiplier dofs.
pub fn assemble_cs(solid: &TriMesh, l_map: &DofMap, x_map: &DofMap, kind: CouplingKind) -> Result<CsrMatrix> {
    if l_map.n_dofs() != x_map.n_dofs() {
        return Err(Error::arg("multiplier and deformation spaces must coincide"));
    }
    let stiff = match kind {
        CouplingKind::C0 => 0.0,
        CouplingKind::C1 => 1.0,
    };
    Ok(assemble_vector_mass_stiffness(solid, l_map, 1.0, stiff))
}

/// Per-element affine data of the configuration map.
struct MappedElement {
    /// Mapped vertex positions.
    tri: [Point; 3],
    /// `∇_s λ_k` on the reference solid element.
    grad_s: [Point; 3],
    /// Deformation gradient `F[i][j] = ∂X̄_i/∂s_j`.
    f: Mat2,
    /// `|det F|`.
    jac: f64,
    ref_area: f64,
}

fn mapped_element(solid: &TriMesh, mapped: &[Point], s: usize) -> MappedElement {
    let stri = solid.triangle(s);
    let grad_s = p1_gradients(&stri);
    let v = solid.triangles[s];
    let tri = [mapped[v[0]], mapped[v[1]], mapped[v[2]]];
    let mut f = [[0.0; 2]; 2];
    for k in 0..3 {
        for i in 0..2 {
            for j in 0..2 {
                f[i][j] += tri[k][i] * grad_s[k][j];
            }
        }
    }
    let ref_area = signed_area(stri[0], stri[1], stri[2]);
    let jac = (signed_area(tri[0], tri[1], tri[2]) / ref_area).abs();
    MappedElement {
        tri,
        grad_s,
        f,
        jac,
        ref_area,
    }
}

/// `Fᵀ g`: the reference gradient of `v ∘ X̄` for a physical gradient `g`.
#[inline]
fn pull_back_gradient(f: &Mat2, g: Point) -> Point {
    [f[0][0] * g[0] + f[1][0] * g[1], f[0][1] * g[0] + f[1][1] * g[1]]
}

fn check_table(table: &IntersectionTable, solid: &TriMesh, mapped: &[Point]) -> Result<()> {
    if table.entries.len() != solid.n_triangles() {
        return Err(Error::Consistency(
            "intersection table does not match the solid mesh".into(),
        ));
    }
    for s in 0..solid.n_triangles() {
        let t = crate::geometry::mapped_triangle(solid, mapped, s);
        let area = signed_area(t[0], t[1], t[2]).abs();
        if (area - table.mapped_area[s]).abs() > STALE_TOL * area {
            return Err(Error::Consistency(format!(
                "intersection table is stale at solid element {s}: {} vs {}",
                table.mapped_area[s], area
            )));
        }
    }
    Ok(())
}

/// Inputs of the fluid coupling block.
pub struct CouplingInputs<'a> {
    pub solid: &'a TriMesh,
    /// Configuration map, P1 on the solid mesh.
    pub xbar: &'a FieldVector,
    pub x_map: &'a DofMap,
    pub fluid_half: &'a TriMesh,
    pub grid: &'a BackgroundGrid,
    pub table: Option<&'a IntersectionTable>,
    pub l_map: &'a DofMap,
    pub u_map: &'a DofMap,
}

impl<'a> CouplingInputs<'a> {
    pub fn new(disc: &'a Discretization, xbar: &'a FieldVector, table: Option<&'a IntersectionTable>) -> Self {
        CouplingInputs {
            solid: &disc.solid,
            xbar,
            x_map: &disc.x_map,
            fluid_half: &disc.fluid_half,
            grid: &disc.grid,
            table,
            l_map: &disc.l_map,
            u_map: &disc.u_map,
        }
    }
}

/// Fluid coupling block `c(μ_i, φ_j ∘ X̄)`; rows on multiplier dofs,
/// columns on velocity dofs.
pub fn assemble_cf(inp: &CouplingInputs<'_>, kind: CouplingKind, mode: AssemblyMode) -> Result<CsrMatrix> {
    assemble_cf_with(Exec::default(), inp, kind, mode)
}

pub fn assemble_cf_with(
    exec: Exec,
    inp: &CouplingInputs<'_>,
    kind: CouplingKind,
    mode: AssemblyMode,
) -> Result<CsrMatrix> {
    let mapped = mapped_vertices(inp.xbar, inp.x_map);
    let (nrows, ncols) = (inp.l_map.n_dofs(), inp.u_map.n_dofs());
    let solid = inp.solid;
    let fluid = inp.fluid_half;
    let local: Vec<Result<Vec<(usize, usize, f64)>>> = match mode {
        AssemblyMode::Exact => {
            let table = inp
                .table
                .ok_or_else(|| Error::Consistency("exact coupling needs an intersection table".into()))?;
            check_table(table, solid, &mapped)?;
            let rule = make_rule(2)?;
            exec.map(solid.n_triangles(), |s| {
                let me = mapped_element(solid, &mapped, s);
                let sv = solid.triangles[s];
                let mut out = Vec::new();
                for piece in &table.entries[s] {
                    let ftri = fluid.triangle(piece.fluid);
                    let fg = p1_gradients(&ftri);
                    let fv = fluid.triangles[piece.fluid];
                    let mut local = [[0.0; 3]; 3];
                    for st in &piece.sub_triangles {
                        let a = signed_area(st[0], st[1], st[2]);
                        for (b, w) in rule.scaled(a) {
                            let x = from_barycentric(st, b);
                            let mu = barycentric(&me.tri, x);
                            let phi = barycentric(&ftri, x);
                            let wr = w / me.jac;
                            for i in 0..3 {
                                for j in 0..3 {
                                    local[i][j] += wr * mu[i] * phi[j];
                                }
                            }
                        }
                    }
                    if kind == CouplingKind::C1 {
                        let ref_area = piece.area / me.jac;
                        for i in 0..3 {
                            for j in 0..3 {
                                let gj = pull_back_gradient(&me.f, fg[j]);
                                local[i][j] += ref_area * dot2(me.grad_s[i], gj);
                            }
                        }
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            for c in 0..2 {
                                out.push((inp.l_map.index(sv[i], c), inp.u_map.index(fv[j], c), local[i][j]));
                            }
                        }
                    }
                }
                Ok(out)
            })
        }
        AssemblyMode::Inexact => {
            let rule0 = make_rule(2)?;
            let rule1 = make_rule(1)?;
            exec.map(solid.n_triangles(), |s| {
                let me = mapped_element(solid, &mapped, s);
                let sv = solid.triangles[s];
                let mut out = Vec::new();
                let locate = |b: [f64; 3]| -> Result<(usize, [f64; 3])> {
                    let x = from_barycentric(&me.tri, b);
                    let f = locate_point(inp.grid, fluid, x).ok_or_else(|| {
                        Error::Geometry(format!(
                            "quadrature point {x:?} of solid element {s} lies outside the fluid domain"
                        ))
                    })?;
                    Ok((f, barycentric(&fluid.triangle(f), x)))
                };
                for (b, w) in rule0.scaled(me.ref_area) {
                    let (f, phi) = locate(b)?;
                    let fv = fluid.triangles[f];
                    for i in 0..3 {
                        for j in 0..3 {
                            for c in 0..2 {
                                out.push((inp.l_map.index(sv[i], c), inp.u_map.index(fv[j], c), w * b[i] * phi[j]));
                            }
                        }
                    }
                }
                if kind == CouplingKind::C1 {
                    for (b, w) in rule1.scaled(me.ref_area) {
                        let (f, _) = locate(b)?;
                        let fg = p1_gradients(&fluid.triangle(f));
                        let fv = fluid.triangles[f];
                        for i in 0..3 {
                            for j in 0..3 {
                                let gj = pull_back_gradient(&me.f, fg[j]);
                                let val = w * dot2(me.grad_s[i], gj);
                                for c in 0..2 {
                                    out.push((inp.l_map.index(sv[i], c), inp.u_map.index(fv[j], c), val));
                                }
                            }
                        }
                    }
                }
                Ok(out)
            })
        }
    };
    let mut b = TripletBuilder::new(nrows, ncols);
    for l in local {
        b.extend(l?);
    }
    Ok(b.into_csr())
}

/// `∫ ψ_i` for each pressure dof.
pub fn pressure_mean_weights(fluid_coarse: &TriMesh, p_map: &DofMap) -> Vec<f64> {
    let mut m = vec![0.0; p_map.n_dofs()];
    for t in 0..fluid_coarse.n_triangles() {
        let a = fluid_coarse.area(t);
        for &v in &fluid_coarse.triangles[t] {
            m[p_map.index(v, 0)] += a / 3.0;
        }
    }
    m
}

/// How the constant pressure mode is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PressureFix {
    /// Extra scalar multiplier enforcing `∫ p_h = 0`.
    #[default]
    Augment,
    /// Pressure dof 0 fixed to zero; the mean is removed afterwards.
    Pin,
}

impl PressureFix {
    pub fn name(self) -> &'static str {
        match self {
            PressureFix::Augment => "augment",
            PressureFix::Pin => "pin",
        }
    }
}

/// The blocks of one stationary system, on the full (unconstrained) dof
/// numbering, with its right-hand side.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub af: CsrMatrix,
    pub as_: CsrMatrix,
    pub bf: CsrMatrix,
    pub cs: CsrMatrix,
    pub cf: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
}

impl BlockSystem {
    /// Assembles every block for the given map and table.
    pub fn assemble(
        disc: &Discretization,
        params: &Parameters,
        xbar: &FieldVector,
        table: Option<&IntersectionTable>,
        kind: CouplingKind,
        mode: AssemblyMode,
    ) -> Result<Self> {
        params.validate()?;
        let layout = disc.layout();
        Ok(BlockSystem {
            af: assemble_af(&disc.fluid_half, &disc.u_map, params),
            as_: assemble_as(&disc.solid, &disc.x_map, params),
            bf: assemble_bf(&disc.fluid_half, &disc.fluid_coarse, &disc.u_map, &disc.p_map)?,
            cs: assemble_cs(&disc.solid, &disc.l_map, &disc.x_map, kind)?,
            cf: assemble_cf(&CouplingInputs::new(disc, xbar, table), kind, mode)?,
            rhs: vec![0.0; layout.total()],
            layout,
        })
    }

    /// Full matrix with the block sign pattern.
    pub fn full_matrix(&self) -> CsrMatrix {
        let l = self.layout;
        let n = l.total();
        let mut b = TripletBuilder::new(n, n);
        b.add_block(&self.af, 0, 0, 1.0);
        b.add_block(&self.cf.transpose(), 0, l.off_l(), 1.0);
        b.add_block(&self.bf.transpose(), 0, l.off_p(), -1.0);
        b.add_block(&self.as_, l.off_x(), l.off_x(), 1.0);
        b.add_block(&self.cs.transpose(), l.off_x(), l.off_l(), -1.0);
        b.add_block(&self.cf, l.off_l(), 0, -1.0);
        b.add_block(&self.cs, l.off_l(), l.off_x(), 1.0);
        b.add_block(&self.bf, l.off_p(), 0, 1.0);
        b.into_csr()
    }

    /// Removes constrained velocity dofs (moving their known values to the
    /// right-hand side) and the pressure kernel.
    ///
    /// `dirichlet` holds the boundary values of the velocity dofs; entries
    /// of free dofs are ignored.
    pub fn reduce(
        &self,
        u_map: &DofMap,
        dirichlet: Option<&[f64]>,
        pressure_weights: &[f64],
        fix: PressureFix,
    ) -> ReducedSystem {
        let l = self.layout;
        let n = l.total();
        let mut fixed = vec![0.0; n];
        let mut keep = vec![true; n];
        for d in 0..l.n_u {
            if u_map.constrained[d] {
                keep[d] = false;
                if let Some(g) = dirichlet {
                    fixed[d] = g[d];
                }
            }
        }
        if fix == PressureFix::Pin {
            keep[l.off_p()] = false;
        }
        let free: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        let full = self.full_matrix();
        let kx = full.matvec(&fixed);
        let mut rhs: Vec<f64> = free.iter().map(|&i| self.rhs[i] - kx[i]).collect();
        let mut matrix = full.submatrix(&free, &free);
        let augmented = fix == PressureFix::Augment;
        if augmented {
            let m = matrix.nrows;
            let p0 = free.iter().position(|&i| i == l.off_p()).expect("pressure block kept");
            let mut b = TripletBuilder::new(m + 1, m + 1);
            b.extend(matrix.triplets());
            for (k, &w) in pressure_weights.iter().enumerate() {
                b.push(p0 + k, m, w);
                b.push(m, p0 + k, w);
            }
            matrix = b.into_csr();
            rhs.push(0.0);
        }
        ReducedSystem {
            matrix,
            rhs,
            free,
            fixed,
            layout: l,
            fix,
            pressure_weights: pressure_weights.to_vec(),
        }
    }
}

/// A square nonsingular system on the free unknowns.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Full index of each reduced unknown (the augmentation scalar, if
    /// any, comes last and is not listed).
    pub free: Vec<usize>,
    /// Full-length vector holding the prescribed values.
    pub fixed: Vec<f64>,
    pub layout: Layout,
    pub fix: PressureFix,
    pub pressure_weights: Vec<f64>,
}

impl ReducedSystem {
    /// Scatters a reduced solution back to the full numbering; in pin mode
    /// the pressure mean is removed.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.fixed.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        if self.fix == PressureFix::Pin {
            let off = self.layout.off_p();
            let area: f64 = self.pressure_weights.iter().sum();
            let mean = self
                .pressure_weights
                .iter()
                .zip(&full[off..])
                .map(|(w, p)| w * p)
                .sum::<f64>()
                / area;
            full[off..].iter_mut().for_each(|p| *p -= mean);
        }
        full
    }
}

/// Manufactured right-hand side, on the full dof numbering.
///
/// The coupling terms are always integrated on the intersection table, so
/// the data is the same for exact and inexact assembly of the matrix.
pub fn assemble_rhs<S: ExactSolution + ?Sized>(
    case: &S,
    disc: &Discretization,
    params: &Parameters,
    xbar: &FieldVector,
    table: &IntersectionTable,
    kind: CouplingKind,
) -> Result<Vec<f64>> {
    let exec = Exec::default();
    let rule = make_rule(RHS_DEGREE)?;
    let l = disc.layout();
    let mapped = mapped_vertices(xbar, &disc.x_map);
    check_table(table, &disc.solid, &mapped)?;
    let mut rhs = vec![0.0; l.total()];
    let h1 = kind == CouplingKind::C1;

    // fluid: a_f(u, v) − (div v, p)
    let fluid = &disc.fluid_half;
    let parts = exec.map(fluid.n_triangles(), |t| {
        fluid_load(case, fluid, &disc.u_map, params, &rule, t)
    });
    for part in parts {
        for (i, v) in part {
            rhs[i] += v;
        }
    }
    // fluid: c(λ, v ∘ X̄) on the intersection pieces
    let parts = exec.map(disc.solid.n_triangles(), |s| {
        let me = mapped_element(&disc.solid, &mapped, s);
        let stri = disc.solid.triangle(s);
        let mut out = Vec::new();
        for piece in &table.entries[s] {
            let ftri = fluid.triangle(piece.fluid);
            let fg = p1_gradients(&ftri);
            let fv = fluid.triangles[piece.fluid];
            let mut local = [[0.0; 2]; 3];
            for st in &piece.sub_triangles {
                let a = signed_area(st[0], st[1], st[2]);
                for (b, w) in rule.scaled(a) {
                    let x = from_barycentric(st, b);
                    let sref = from_barycentric(&stri, barycentric(&me.tri, x));
                    let (lam, glam) = case.multiplier(sref);
                    let phi = barycentric(&ftri, x);
                    let wr = w / me.jac;
                    for j in 0..3 {
                        for c in 0..2 {
                            let mut val = lam[c] * phi[j];
                            if h1 {
                                val += dot2(glam[c], pull_back_gradient(&me.f, fg[j]));
                            }
                            local[j][c] += wr * val;
                        }
                    }
                }
            }
            for j in 0..3 {
                for c in 0..2 {
                    out.push((disc.u_map.index(fv[j], c), local[j][c]));
                }
            }
        }
        out
    });
    for part in parts {
        for (i, v) in part {
            rhs[i] += v;
        }
    }
    // solid and constraint blocks
    let parts = exec.map(disc.solid.n_triangles(), |s| {
        let me = mapped_element(&disc.solid, &mapped, s);
        let stri = disc.solid.triangle(s);
        let sv = disc.solid.triangles[s];
        let mut g_loc = [[0.0; 2]; 3];
        let mut d_loc = [[0.0; 2]; 3];
        for (b, w) in rule.scaled(me.ref_area) {
            let sp = from_barycentric(&stri, b);
            let (xv, gx) = case.deformation(sp);
            let (lam, glam) = case.multiplier(sp);
            let (uv, gu) = case.velocity(from_barycentric(&me.tri, b));
            // ∇(u ∘ X̄) = ∇u F
            let mut guf = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    guf[i][j] = gu[i][0] * me.f[0][j] + gu[i][1] * me.f[1][j];
                }
            }
            for k in 0..3 {
                for c in 0..2 {
                    let gk = me.grad_s[k];
                    let mut g = params.beta * xv[c] * b[k] + params.gamma * dot2(gx[c], gk) - lam[c] * b[k];
                    let mut d = (xv[c] - uv[c]) * b[k];
                    if h1 {
                        g -= dot2(glam[c], gk);
                        d += dot2([gx[c][0] - guf[c][0], gx[c][1] - guf[c][1]], gk);
                    }
                    g_loc[k][c] += w * g;
                    d_loc[k][c] += w * d;
                }
            }
        }
        let mut out = Vec::with_capacity(12);
        for k in 0..3 {
            for c in 0..2 {
                out.push((l.off_x() + disc.x_map.index(sv[k], c), g_loc[k][c]));
                out.push((l.off_l() + disc.l_map.index(sv[k], c), d_loc[k][c]));
            }
        }
        out
    });
    for part in parts {
        for (i, v) in part {
            rhs[i] += v;
        }
    }
    Ok(rhs)
}

fn fluid_load<S: ExactSolution + ?Sized>(
    case: &S,
    mesh: &TriMesh,
    u_map: &DofMap,
    params: &Parameters,
    rule: &QuadratureRule,
    t: usize,
) -> Vec<(usize, f64)> {
    let tri = mesh.triangle(t);
    let area = signed_area(tri[0], tri[1], tri[2]);
    let g = p1_gradients(&tri);
    let v = mesh.triangles[t];
    let mut local = [[0.0; 2]; 3];
    for (b, w) in rule.scaled(area) {
        let x = from_barycentric(&tri, b);
        let (u, gu) = case.velocity(x);
        let p = case.pressure(x);
        let eps = [
            [gu[0][0], 0.5 * (gu[0][1] + gu[1][0])],
            [0.5 * (gu[0][1] + gu[1][0]), gu[1][1]],
        ];
        for k in 0..3 {
            for a in 0..2 {
                local[k][a] += w * (params.alpha * u[a] * b[k] + params.nu * dot2(eps[a], g[k]) - p * g[k][a]);
            }
        }
    }
    let mut out = Vec::with_capacity(6);
    for k in 0..3 {
        for a in 0..2 {
            out.push((u_map.index(v[k], a), local[k][a]));
        }
    }
    out
}

/// Dirichlet values: the nodal interpolant of the exact velocity on
/// constrained dofs, zero elsewhere.
pub fn dirichlet_values<S: ExactSolution + ?Sized>(case: &S, disc: &Discretization) -> Vec<f64> {
    let mut g = vec![0.0; disc.u_map.n_dofs()];
    for (v, &x) in disc.fluid_half.vertices.iter().enumerate() {
        if disc.fluid_half.boundary_vertex[v] {
            let (u, _) = case.velocity(x);
            for c in 0..2 {
                g[disc.u_map.index(v, c)] = u[c];
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::cases::shifted_square;
    use crate::femspace::interpolate;
    use crate::mesh::build_structured_square;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_disc(n: usize) -> Discretization {
        let coarse = build_structured_square(n, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let solid = build_structured_square(n, [0.25, 0.25], [0.75, 0.75]).unwrap();
        Discretization::new(coarse, solid).unwrap()
    }

    fn params(alpha: f64, beta: f64, gamma: f64, nu: f64) -> Parameters {
        Parameters { alpha, beta, gamma, nu }
    }

    /// `∫ |v_h|²` by the degree-2 rule, element by element.
    fn l2_sq(v: &FieldVector, map: &DofMap, mesh: &TriMesh) -> f64 {
        let rule = make_rule(2).unwrap();
        (0..mesh.n_triangles())
            .map(|t| {
                rule.integrate(mesh.area(t), |b| {
                    let f = crate::femspace::eval_field(v, map, mesh, t, b).value;
                    f[0] * f[0] + f[1] * f[1]
                })
            })
            .sum()
    }

    #[test]
    fn fluid_block_energies() {
        let d = unit_disc(4);
        let (mesh, map) = (&d.fluid_half, &d.u_map);
        let c = interpolate(|_| [0.7, -1.3], map, mesh);
        let a = assemble_af(mesh, map, &params(0.0, 0.0, 1.0, 1.0));
        assert!(a.bilinear(&c.coeffs, &c.coeffs).abs() < 1e-13);
        let u = interpolate(|x| [x[0] * x[1], x[0].sin()], map, mesh);
        let m = assemble_af(mesh, map, &params(1.0, 0.0, 1.0, 0.0));
        let oracle = l2_sq(&u, map, mesh);
        assert!((m.bilinear(&u.coeffs, &u.coeffs) - oracle).abs() < 1e-13 * oracle);
        let shear = interpolate(|x| [x[1], 0.0], map, mesh);
        let nu = 0.3;
        let s = assemble_af(mesh, map, &params(0.0, 0.0, 1.0, nu));
        assert!((s.bilinear(&shear.coeffs, &shear.coeffs) - nu * 0.5).abs() < 1e-13);
        assert!(s.asymmetry() < 1e-13 && m.asymmetry() < 1e-13);
    }

    #[test]
    fn divergence_block() {
        let d = unit_disc(4);
        let bf = assemble_bf(&d.fluid_half, &d.fluid_coarse, &d.u_map, &d.p_map).unwrap();
        let rot = interpolate(|x| [x[1], -x[0]], &d.u_map, &d.fluid_half);
        assert!(bf.matvec(&rot.coeffs).iter().all(|v| v.abs() < 1e-14));
        let stretch = interpolate(|x| [x[0], 0.0], &d.u_map, &d.fluid_half);
        let total: f64 = bf.matvec(&stretch.coeffs).iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let ones = vec![1.0; d.p_map.n_dofs()];
        let bt = bf.matvec_transpose(&ones);
        for (k, v) in bt.iter().enumerate() {
            if !d.u_map.constrained[k] {
                assert!(v.abs() < 1e-13);
            }
        }
        let mut coarse_only = d.fluid_half.clone();
        coarse_only.parent_triangle = None;
        assert!(matches!(
            assemble_bf(&coarse_only, &d.fluid_coarse, &d.u_map, &d.p_map),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn solid_blocks() {
        let d = unit_disc(4);
        let (mesh, map) = (&d.solid, &d.x_map);
        let area = mesh.total_area();
        let c = interpolate(|_| [2.0, 3.0], map, mesh);
        let st = assemble_as(mesh, map, &params(0.0, 0.0, 1.0, 1.0));
        assert!(st.bilinear(&c.coeffs, &c.coeffs).abs() < 1e-13);
        let id = interpolate(|s| s, map, mesh);
        assert!((st.bilinear(&id.coeffs, &id.coeffs) - 2.0 * area).abs() < 1e-13);
        let x = interpolate(|s| [s[0] * s[1], s[1].exp()], map, mesh);
        let m = assemble_as(mesh, map, &params(0.0, 1.0, 1e-30, 1.0));
        let oracle = l2_sq(&x, map, mesh);
        assert!((m.bilinear(&x.coeffs, &x.coeffs) - oracle).abs() < 1e-12 * oracle);

        let c0 = assemble_cs(mesh, &d.l_map, map, CouplingKind::C0).unwrap();
        let c1 = assemble_cs(mesh, &d.l_map, map, CouplingKind::C1).unwrap();
        let mu = interpolate(|_| [1.0, 0.0], &d.l_map, mesh);
        let y = interpolate(|s| [s[0] * s[0], 1.0], map, mesh);
        let rule = make_rule(2).unwrap();
        let int_y: f64 = (0..mesh.n_triangles())
            .map(|t| {
                rule.integrate(mesh.area(t), |b| {
                    crate::femspace::eval_field(&y, map, mesh, t, b).value[0]
                })
            })
            .sum();
        assert!((c0.bilinear(&mu.coeffs, &y.coeffs) - int_y).abs() < 1e-13);
        assert!((c0.bilinear(&mu.coeffs, &mu.coeffs) - c1.bilinear(&mu.coeffs, &mu.coeffs)).abs() < 1e-13);
        let s1 = interpolate(|s| [s[0], 0.0], &d.l_map, mesh);
        // ∫ s₁² over [1/4, 3/4]² plus |B|.
        let int_s1 = (0.75f64.powi(3) - 0.25f64.powi(3)) / 3.0 * 0.5;
        assert!((c1.bilinear(&s1.coeffs, &s1.coeffs) - int_s1 - area).abs() < 1e-13);
        for m in [&st, &m, &c0, &c1] {
            assert!(m.asymmetry() < 1e-13);
        }
        let other = build_dof_map(&d.fluid_half, FieldKind::Multiplier);
        assert!(assemble_cs(mesh, &other, map, CouplingKind::C0).is_err());
    }

    /// Solid mesh equal to the velocity mesh, identity map.
    fn identical_meshes() -> (Discretization, FieldVector) {
        let coarse = build_structured_square(3, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let solid = refine_midpoint(&coarse).unwrap();
        let d = Discretization::new(coarse, solid).unwrap();
        let xbar = interpolate(|s| s, &d.x_map, &d.solid);
        (d, xbar)
    }

    #[test]
    fn identity_map_reproduces_solid_coupling() {
        let (d, xbar) = identical_meshes();
        let table = d.intersection_table(&xbar).unwrap();
        for kind in [CouplingKind::C0, CouplingKind::C1] {
            let inp = CouplingInputs::new(&d, &xbar, Some(&table));
            let cf = assemble_cf(&inp, kind, AssemblyMode::Exact).unwrap();
            let cs = assemble_cs(&d.solid, &d.l_map, &d.x_map, kind).unwrap();
            assert!(cf.rel_frobenius_diff(&cs) < 1e-13, "{}", kind.name());
        }
    }

    fn shifted_setup(sigma: f64, level: u32) -> (Discretization, FieldVector) {
        let case = shifted_square(sigma);
        let d = case.discretization(level).unwrap();
        let xbar = case.xbar(&d);
        (d, xbar)
    }

    fn both_modes(d: &Discretization, xbar: &FieldVector, kind: CouplingKind) -> (CsrMatrix, CsrMatrix) {
        let table = d.intersection_table(xbar).unwrap();
        let exact = assemble_cf(&CouplingInputs::new(d, xbar, Some(&table)), kind, AssemblyMode::Exact).unwrap();
        let inexact = assemble_cf(&CouplingInputs::new(d, xbar, None), kind, AssemblyMode::Inexact).unwrap();
        (exact, inexact)
    }

    #[test]
    fn matching_meshes_exact_equals_inexact() {
        let (d, xbar) = shifted_setup(0.0, 2);
        for kind in [CouplingKind::C0, CouplingKind::C1] {
            let (e, i) = both_modes(&d, &xbar, kind);
            assert!(e.rel_frobenius_diff(&i) < 1e-12, "{}", kind.name());
        }
    }

    #[test]
    fn exact_coupling_ignores_sub_triangulation() {
        let (d, xbar) = shifted_setup(std::f64::consts::PI * 1e-3, 2);
        let table = d.intersection_table(&xbar).unwrap();
        let mut fine = table.clone();
        for pieces in &mut fine.entries {
            for piece in pieces {
                piece.sub_triangles = piece
                    .sub_triangles
                    .iter()
                    .flat_map(|t| {
                        let m = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                        let (m01, m12, m20) = (m(t[0], t[1]), m(t[1], t[2]), m(t[2], t[0]));
                        [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]]
                    })
                    .collect();
            }
        }
        for kind in [CouplingKind::C0, CouplingKind::C1] {
            let a = assemble_cf(&CouplingInputs::new(&d, &xbar, Some(&table)), kind, AssemblyMode::Exact).unwrap();
            let b = assemble_cf(&CouplingInputs::new(&d, &xbar, Some(&fine)), kind, AssemblyMode::Exact).unwrap();
            assert!(a.rel_frobenius_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn tiny_cut_cells_change_nothing() {
        let (d0, x0) = shifted_setup(0.0, 2);
        let (d1, x1) = shifted_setup(1e-10, 2);
        let t0 = d0.intersection_table(&x0).unwrap();
        let t1 = d1.intersection_table(&x1).unwrap();
        assert!(t1.min_piece_area() < 1e-10);
        let a = assemble_cf(
            &CouplingInputs::new(&d0, &x0, Some(&t0)),
            CouplingKind::C0,
            AssemblyMode::Exact,
        )
        .unwrap();
        let b = assemble_cf(
            &CouplingInputs::new(&d1, &x1, Some(&t1)),
            CouplingKind::C0,
            AssemblyMode::Exact,
        )
        .unwrap();
        assert!(b.rel_frobenius_diff(&a) < 1e-6);
    }

    /// Under proportional refinement the C0 quadrature error of the form
    /// on smooth fields decays while the C1 matrices keep an O(1) relative
    /// discrepancy.
    #[test]
    fn quadrature_discrepancy_under_refinement() {
        let case = crate::experiments::cases::disk();
        let mut smooth0 = Vec::new();
        let mut frob1 = Vec::new();
        for level in 1..=3 {
            let d = case.discretization(level).unwrap();
            let xbar = case.xbar(&d);
            let mu = interpolate(|s| [(3.0 * s[0]).sin(), (2.0 * s[1]).cos()], &d.l_map, &d.solid);
            let v = interpolate(
                |x| [(4.0 * x[1]).cos() * x[0], (3.0 * x[0]).sin()],
                &d.u_map,
                &d.fluid_half,
            );
            let (e, i) = both_modes(&d, &xbar, CouplingKind::C0);
            let exact = e.bilinear(&mu.coeffs, &v.coeffs);
            smooth0.push(((exact - i.bilinear(&mu.coeffs, &v.coeffs)) / exact).abs());
            let (e, i) = both_modes(&d, &xbar, CouplingKind::C1);
            frob1.push(i.rel_frobenius_diff(&e));
        }
        assert!(smooth0.windows(2).all(|w| w[1] < w[0]), "{smooth0:?}");
        assert!(frob1.iter().all(|&v| v > 0.5), "{frob1:?}");
    }

    /// Sutherland–Hodgman clip of a polygon by a counterclockwise triangle.
    fn clip(poly: Vec<Point>, tri: &[Point; 3]) -> Vec<Point> {
        let mut out = poly;
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let side = |p: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
            let input = std::mem::take(&mut out);
            for i in 0..input.len() {
                let (p, q) = (input[i], input[(i + 1) % input.len()]);
                let (sp, sq) = (side(p), side(q));
                if sp >= 0.0 {
                    out.push(p);
                }
                if (sp >= 0.0) != (sq >= 0.0) {
                    let t = sp / (sp - sq);
                    out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
        }
        out
    }

    /// Splits triangles at random interior points until `target` are reached.
    fn random_split(mut tris: Vec<[Point; 3]>, target: usize, rng: &mut ChaCha8Rng) -> Vec<[Point; 3]> {
        while tris.len() < target {
            let k = rng.gen_range(0..tris.len());
            let t = tris.swap_remove(k);
            let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
            if a + b > 1.0 {
                (a, b) = (1.0 - a, 1.0 - b);
            }
            let p = from_barycentric(&t, [1.0 - a - b, a, b]);
            tris.extend([[t[0], t[1], p], [t[1], t[2], p], [t[2], t[0], p]]);
        }
        tris
    }

    #[test]
    fn exact_coupling_matches_brute_force() {
        let fluid = build_structured_square(1, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let grid = BackgroundGrid::new(&fluid);
        let solid = TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let x_map = build_dof_map(&solid, FieldKind::Deformation);
        let l_map = build_dof_map(&solid, FieldKind::Multiplier);
        let u_map = build_dof_map(&fluid, FieldKind::Velocity);
        let image = [[0.2, 0.1], [0.9, 0.3], [0.4, 0.8]];
        let affine = |s: Point| from_barycentric(&image, [1.0 - s[0] - s[1], s[0], s[1]]);
        let xbar = interpolate(affine, &x_map, &solid);
        let table = IntersectionTable::build(&solid, &image, &fluid, &grid).unwrap();
        assert!(table.entries[0].len() == 2);
        let inp = CouplingInputs {
            solid: &solid,
            xbar: &xbar,
            x_map: &x_map,
            fluid_half: &fluid,
            grid: &grid,
            table: Some(&table),
            l_map: &l_map,
            u_map: &u_map,
        };
        let cf = assemble_cf(&inp, CouplingKind::C0, AssemblyMode::Exact).unwrap();

        // Pull each fluid triangle back to reference coordinates, clip there
        // and integrate over a random refinement of the pieces.
        let det = (image[1][0] - image[0][0]) * (image[2][1] - image[0][1])
            - (image[2][0] - image[0][0]) * (image[1][1] - image[0][1]);
        let inverse = |x: Point| {
            let (dx, dy) = (x[0] - image[0][0], x[1] - image[0][1]);
            [
                ((image[2][1] - image[0][1]) * dx - (image[2][0] - image[0][0]) * dy) / det,
                (-(image[1][1] - image[0][1]) * dx + (image[1][0] - image[0][0]) * dy) / det,
            ]
        };
        let rule = make_rule(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut oracle = vec![[[0.0; 3]; 3]; fluid.n_triangles()];
        for (f, block) in oracle.iter_mut().enumerate() {
            let ft = fluid.triangle(f);
            let mut back = ft.map(inverse);
            if signed_area(back[0], back[1], back[2]) < 0.0 {
                back.swap(1, 2);
            }
            let poly = clip(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &back);
            let fan: Vec<[Point; 3]> = (1..poly.len() - 1).map(|k| [poly[0], poly[k], poly[k + 1]]).collect();
            for t in random_split(fan, 5000, &mut rng) {
                for (b, w) in rule.scaled(signed_area(t[0], t[1], t[2])) {
                    let s = from_barycentric(&t, b);
                    let mu = [1.0 - s[0] - s[1], s[0], s[1]];
                    let phi = barycentric(&ft, affine(s));
                    for i in 0..3 {
                        for j in 0..3 {
                            block[i][j] += w * mu[i] * phi[j];
                        }
                    }
                }
            }
        }
        for (f, block) in oracle.iter().enumerate() {
            let fv = fluid.triangles[f];
            for i in 0..3 {
                for j in 0..3 {
                    let mut expected = block[i][j];
                    // Vertices shared by both fluid elements collect both parts.
                    for (g, other) in oracle.iter().enumerate() {
                        if g != f {
                            if let Some(jj) = fluid.triangles[g].iter().position(|&v| v == fv[j]) {
                                expected += other[i][jj];
                            }
                        }
                    }
                    for c in 0..2 {
                        let got = cf.get(l_map.index(i, c), u_map.index(fv[j], c));
                        assert!((got - expected).abs() < 1e-10, "{f} {i} {j}: {got} vs {expected}");
                    }
                }
            }
        }
    }

    #[test]
    fn block_sign_pattern() {
        let (d, xbar) = shifted_setup(0.01, 1);
        let table = d.intersection_table(&xbar).unwrap();
        let sys = BlockSystem::assemble(
            &d,
            &params(1.0, 1.0, 1.0, 1.0),
            &xbar,
            Some(&table),
            CouplingKind::C1,
            AssemblyMode::Exact,
        )
        .unwrap();
        let full = sys.full_matrix();
        let l = sys.layout;
        let range = |a: usize, n: usize| (a..a + n).collect::<Vec<_>>();
        let (u, x, lm, p) = (
            range(0, l.n_u),
            range(l.off_x(), l.n_x),
            range(l.off_l(), l.n_l),
            range(l.off_p(), l.n_p),
        );
        let blk = |r: &[usize], c: &[usize]| full.submatrix(r, c);
        let close = |a: CsrMatrix, b: &CsrMatrix| a.add_scaled(b, -1.0).frobenius() <= 1e-14 * b.frobenius().max(1.0);
        assert!(close(blk(&u, &u), &sys.af));
        assert!(close(blk(&u, &lm), &sys.cf.transpose()));
        assert!(close(blk(&u, &p), &sys.bf.transpose().scaled(-1.0)));
        assert!(close(blk(&x, &x), &sys.as_));
        assert!(close(blk(&x, &lm), &sys.cs.transpose().scaled(-1.0)));
        assert!(close(blk(&lm, &u), &sys.cf.scaled(-1.0)));
        assert!(close(blk(&lm, &x), &sys.cs));
        assert!(close(blk(&p, &u), &sys.bf));
        for (r, c) in [
            (&u, &x),
            (&x, &u),
            (&x, &p),
            (&lm, &lm),
            (&lm, &p),
            (&p, &x),
            (&p, &lm),
            (&p, &p),
        ] {
            assert_eq!(blk(r, c).frobenius(), 0.0);
        }
    }

    #[test]
    fn stale_table_is_rejected() {
        let (d, xbar) = shifted_setup(0.0, 1);
        let table = d.intersection_table(&xbar).unwrap();
        let moved = FieldVector {
            coeffs: xbar.coeffs.iter().map(|c| 0.99 * c).collect(),
        };
        let err = assemble_cf(
            &CouplingInputs::new(&d, &moved, Some(&table)),
            CouplingKind::C0,
            AssemblyMode::Exact,
        );
        assert!(matches!(err, Err(Error::Consistency(_))));
        let err = assemble_cf(
            &CouplingInputs::new(&d, &xbar, None),
            CouplingKind::C0,
            AssemblyMode::Exact,
        );
        assert!(matches!(err, Err(Error::Consistency(_))));
    }

    #[test]
    fn inexact_outside_domain_is_a_geometry_error() {
        let (d, xbar) = shifted_setup(1.5, 1);
        let err = assemble_cf(
            &CouplingInputs::new(&d, &xbar, None),
            CouplingKind::C0,
            AssemblyMode::Inexact,
        );
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn execution_policy_does_not_change_matrices() {
        let (d, xbar) = shifted_setup(std::f64::consts::PI * 1e-3, 2);
        let table = d.intersection_table(&xbar).unwrap();
        let p = params(1.0, 0.0, 1.0, 0.5);
        assert_eq!(
            assemble_af_with(Exec::Sequential, &d.fluid_half, &d.u_map, &p),
            assemble_af_with(Exec::Parallel, &d.fluid_half, &d.u_map, &p)
        );
        for mode in [AssemblyMode::Exact, AssemblyMode::Inexact] {
            let inp = CouplingInputs::new(&d, &xbar, Some(&table));
            assert_eq!(
                assemble_cf_with(Exec::Sequential, &inp, CouplingKind::C1, mode).unwrap(),
                assemble_cf_with(Exec::Parallel, &inp, CouplingKind::C1, mode).unwrap()
            );
        }
    }

    #[test]
    fn reduction_handles_boundary_and_pressure() {
        let (d, xbar) = shifted_setup(0.0, 1);
        let table = d.intersection_table(&xbar).unwrap();
        let sys = BlockSystem::assemble(
            &d,
            &shifted_square(0.0).params,
            &xbar,
            Some(&table),
            CouplingKind::C0,
            AssemblyMode::Exact,
        )
        .unwrap();
        let w = pressure_mean_weights(&d.fluid_coarse, &d.p_map);
        assert!((w.iter().sum::<f64>() - 16.0).abs() < 1e-12);
        let n_free_u = d.u_map.constrained.iter().filter(|c| !**c).count();
        let aug = sys.reduce(&d.u_map, None, &w, PressureFix::Augment);
        let pin = sys.reduce(&d.u_map, None, &w, PressureFix::Pin);
        let l = sys.layout;
        assert_eq!(aug.matrix.nrows, n_free_u + l.n_x + l.n_l + l.n_p + 1);
        assert_eq!(pin.matrix.nrows, n_free_u + l.n_x + l.n_l + l.n_p - 1);
        let expanded = pin.expand(&vec![1.0; pin.matrix.nrows]);
        let mean: f64 = w.iter().zip(&expanded[l.off_p()..]).map(|(a, b)| a * b).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn parameters_are_validated() {
        assert!(params(0.0, 0.0, 1.0, 1.0).validate().is_ok());
        assert!(params(0.0, 0.0, 0.0, 1.0).validate().is_err());
        assert!(params(0.0, 0.0, 1.0, 0.0).validate().is_err());
        assert!(params(-1.0, 0.0, 1.0, 1.0).validate().is_err());
    }
}
