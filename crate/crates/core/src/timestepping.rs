//! Semi-implicit time march for the stretched-annulus benchmark.
//!
//! Each step solves the stationary saddle-point system with
//! `α = ρ_f/Δt`, `β = δρ/Δt`, `γ = κΔt`, the coupling frozen at `X̄ = X^n`,
//! and the deformation unknown standing for `X^{n+1}/Δt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_af, assemble_as, assemble_bf, assemble_cf, assemble_cs, assemble_vector_mass_stiffness, mapped_vertices,
    pressure_mean_weights, AssemblyMode, BlockSystem, CouplingInputs, CouplingKind, Discretization, Parameters,
    PressureFix,
};
use crate::femspace::{interpolate, FieldVector};
use crate::geometry::IntersectionTable;
use crate::mesh::{build_annulus_mesh_counts, build_structured_square, TriMesh};
use crate::solver::solve;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub rho_f: f64,
    pub rho_s: f64,
    pub nu: f64,
    pub kappa: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            rho_f: 1.0,
            rho_s: 1.1,
            nu: 0.01,
            kappa: 0.2,
            dt: 0.1,
            t_final: 4.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho_f >= 0.0
            && self.rho_s >= self.rho_f
            && self.nu > 0.0
            && self.kappa >= 0.0
            && self.dt > 0.0
            && self.t_final >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid physical parameters {self:?}")))
        }
    }

    pub fn delta_rho(&self) -> f64 {
        self.rho_s - self.rho_f
    }

    /// Number of steps to reach `t_final`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    /// Coefficients of the stationary system solved at every step.
    pub fn stationary(&self) -> Parameters {
        Parameters {
            alpha: self.rho_f / self.dt,
            beta: self.delta_rho() / self.dt,
            gamma: self.kappa * self.dt,
            nu: self.nu,
        }
    }
}

/// Reference annulus `0.125 ≤ |s| ≤ 0.25`.
pub const ANNULUS_R_IN: f64 = 0.125;
pub const ANNULUS_R_OUT: f64 = 0.25;

/// Initial stretch `X⁰(s) = (s₁/1.4 + ½, 1.4 s₂ + ½)`.
pub fn initial_map(s: [f64; 2]) -> [f64; 2] {
    [s[0] / 1.4 + 0.5, 1.4 * s[1] + 0.5]
}

/// Polar counts of the reference annulus for a fluid mesh of `n` squares
/// per side, so that the solid mesh size is about `4/(3n)`.
pub fn annulus_counts_for(n: usize) -> (usize, usize) {
    let h_b = 4.0 / (3.0 * n as f64);
    let n_rad = ((ANNULUS_R_OUT - ANNULUS_R_IN) / h_b).round().max(1.0) as usize;
    let mid = 0.5 * (ANNULUS_R_IN + ANNULUS_R_OUT);
    let n_ang = (2.0 * std::f64::consts::PI * mid / h_b).round().max(3.0) as usize;
    (n_ang, n_rad)
}

/// Unit-square fluid mesh with `n` squares per side and the matching
/// reference annulus.
pub fn dynamic_meshes(n: usize) -> Result<(TriMesh, TriMesh)> {
    let fluid = build_structured_square(n, [0.0, 0.0], [1.0, 1.0])?;
    let (n_ang, n_rad) = annulus_counts_for(n);
    let solid = build_annulus_mesh_counts([0.0, 0.0], ANNULUS_R_IN, ANNULUS_R_OUT, n_ang, n_rad)?;
    Ok((fluid, solid))
}

#[derive(Debug, Clone)]
pub struct DynamicState {
    pub n: usize,
    pub t: f64,
    pub u: FieldVector,
    pub p: FieldVector,
    pub x: FieldVector,
    pub x_prev: FieldVector,
    pub lambda: FieldVector,
    /// Intersection table of the solid mesh mapped by `x`.
    pub table: IntersectionTable,
}

/// Discretization, parameters and the blocks that do not depend on the
/// deformation.
pub struct DynamicProblem {
    pub disc: Discretization,
    pub params: PhysicalParams,
    pub kind: CouplingKind,
    pub mode: AssemblyMode,
    pub fix: PressureFix,
    stationary: Parameters,
    af: CsrMatrix,
    bf: CsrMatrix,
    as_: CsrMatrix,
    cs: CsrMatrix,
    fluid_mass: CsrMatrix,
    solid_mass: CsrMatrix,
    solid_stiffness: CsrMatrix,
    pressure_weights: Vec<f64>,
}

impl DynamicProblem {
    pub fn new(
        fluid: TriMesh,
        solid: TriMesh,
        params: PhysicalParams,
        kind: CouplingKind,
        mode: AssemblyMode,
    ) -> Result<Self> {
        params.validate()?;
        let disc = Discretization::new(fluid, solid)?;
        let stationary = params.stationary();
        Ok(DynamicProblem {
            af: assemble_af(&disc.fluid_half, &disc.u_map, &stationary),
            bf: assemble_bf(&disc.fluid_half, &disc.fluid_coarse, &disc.u_map, &disc.p_map)?,
            as_: assemble_as(&disc.solid, &disc.x_map, &stationary),
            cs: assemble_cs(&disc.solid, &disc.l_map, &disc.x_map, kind)?,
            fluid_mass: assemble_vector_mass_stiffness(&disc.fluid_half, &disc.u_map, 1.0, 0.0),
            solid_mass: assemble_vector_mass_stiffness(&disc.solid, &disc.x_map, 1.0, 0.0),
            solid_stiffness: assemble_vector_mass_stiffness(&disc.solid, &disc.x_map, 0.0, 1.0),
            pressure_weights: pressure_mean_weights(&disc.fluid_coarse, &disc.p_map),
            disc,
            params,
            kind,
            mode,
            fix: PressureFix::Augment,
            stationary,
        })
    }

    /// The benchmark setup on an `n × n` pressure mesh.
    pub fn benchmark(n: usize, params: PhysicalParams, kind: CouplingKind, mode: AssemblyMode) -> Result<Self> {
        let (fluid, solid) = dynamic_meshes(n)?;
        Self::new(fluid, solid, params, kind, mode)
    }

    fn table_for(&self, x: &FieldVector) -> Result<IntersectionTable> {
        IntersectionTable::build(
            &self.disc.solid,
            &mapped_vertices(x, &self.disc.x_map),
            &self.disc.fluid_half,
            &self.disc.grid,
        )
    }

    /// State at rest with the solid deformed by `x0`; the previous position
    /// equals the initial one (zero initial solid velocity).
    pub fn init_state_with(&self, x0: impl Fn([f64; 2]) -> [f64; 2]) -> Result<DynamicState> {
        let x = interpolate(x0, &self.disc.x_map, &self.disc.solid);
        let table = self.table_for(&x)?;
        Ok(DynamicState {
            n: 0,
            t: 0.0,
            u: FieldVector::zeros(&self.disc.u_map),
            p: FieldVector::zeros(&self.disc.p_map),
            x_prev: x.clone(),
            x,
            lambda: FieldVector::zeros(&self.disc.l_map),
            table,
        })
    }

    pub fn init_state(&self) -> Result<DynamicState> {
        self.init_state_with(initial_map)
    }

    /// Blocks and right-hand side of the step from `state`.
    pub fn step_system(&self, state: &DynamicState) -> Result<BlockSystem> {
        let table = (self.mode == AssemblyMode::Exact).then_some(&state.table);
        let cf = assemble_cf(&CouplingInputs::new(&self.disc, &state.x, table), self.kind, self.mode)?;
        let layout = self.disc.layout();
        let dt = self.params.dt;
        let mut rhs = vec![0.0; layout.total()];
        let f = self.fluid_mass.matvec(&state.u.coeffs);
        for (r, v) in rhs[..layout.off_x()].iter_mut().zip(f) {
            *r = self.params.rho_f / dt * v;
        }
        let two_x: Vec<f64> = state
            .x
            .coeffs
            .iter()
            .zip(&state.x_prev.coeffs)
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        let g = self.solid_mass.matvec(&two_x);
        let scale = self.params.delta_rho() / (dt * dt);
        for (r, v) in rhs[layout.off_x()..layout.off_l()].iter_mut().zip(g) {
            *r = scale * v;
        }
        let d = self.cs.matvec(&state.x.coeffs);
        for (r, v) in rhs[layout.off_l()..layout.off_p()].iter_mut().zip(d) {
            *r = v / dt;
        }
        Ok(BlockSystem {
            af: self.af.clone(),
            as_: self.as_.clone(),
            bf: self.bf.clone(),
            cs: self.cs.clone(),
            cf,
            rhs,
            layout,
        })
    }

    pub fn advance(&self, state: &DynamicState) -> Result<DynamicState> {
        let sys = self.step_system(state)?;
        let reduced = sys.reduce(&self.disc.u_map, None, &self.pressure_weights, self.fix);
        let sol = solve(&reduced)?;
        let dt = self.params.dt;
        let x = FieldVector {
            coeffs: sol.x.coeffs.iter().map(|w| dt * w).collect(),
        };
        let table = self.table_for(&x).map_err(|e| match e {
            Error::Geometry(msg) => Error::Geometry(format!("step {}: {msg}", state.n + 1)),
            other => other,
        })?;
        Ok(DynamicState {
            n: state.n + 1,
            t: (state.n + 1) as f64 * dt,
            u: sol.u,
            p: sol.p,
            x_prev: state.x.clone(),
            x,
            lambda: sol.lambda,
            table,
        })
    }

    /// `ρ_f/2 ‖u‖² + δρ/2 ‖(X − X_prev)/Δt‖² + κ/2 |X|²₁`.
    pub fn energy(&self, state: &DynamicState) -> f64 {
        let p = &self.params;
        let v: Vec<f64> = state
            .x
            .coeffs
            .iter()
            .zip(&state.x_prev.coeffs)
            .map(|(a, b)| (a - b) / p.dt)
            .collect();
        0.5 * p.rho_f * self.fluid_mass.bilinear(&state.u.coeffs, &state.u.coeffs)
            + 0.5 * p.delta_rho() * self.solid_mass.bilinear(&v, &v)
            + 0.5 * p.kappa * self.solid_stiffness.bilinear(&state.x.coeffs, &state.x.coeffs)
    }

    pub fn stationary_parameters(&self) -> Parameters {
        self.stationary
    }
}

/// Areas of the intersection polygons of one solid element.
pub fn track_cut_cells(state: &DynamicState, solid_element: usize) -> Result<Vec<f64>> {
    if solid_element >= state.table.entries.len() {
        return Err(Error::arg(format!("solid element {solid_element} out of range")));
    }
    Ok(state.table.piece_areas(solid_element))
}

/// Seeded choice of the tracked solid element.
pub fn pick_element(n_elements: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).gen_range(0..n_elements)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    fn small(params: PhysicalParams) -> DynamicProblem {
        DynamicProblem::benchmark(8, params, CouplingKind::C0, AssemblyMode::Exact).unwrap()
    }

    #[test]
    fn annulus_counts_follow_fluid_resolution() {
        assert_eq!(annulus_counts_for(32), (28, 3));
    }

    #[test]
    fn initial_state() {
        let prob = small(PhysicalParams::default());
        let s = prob.init_state().unwrap();
        // mapped area is preserved by the unit-determinant stretch
        let mapped: f64 = s.table.mapped_area.iter().sum();
        assert!((mapped - prob.disc.solid.total_area()).abs() < 1e-12);
        let e0 = prob.energy(&s);
        let k = prob.params.kappa / 2.0 * prob.solid_stiffness.bilinear(&s.x.coeffs, &s.x.coeffs);
        assert_eq!(e0, k);
        // identity deformation gives κ/2 · 2|B|
        let id = prob.init_state_with(|s| [s[0] + 0.5, s[1] + 0.5]).unwrap();
        let e = prob.energy(&id);
        assert!((e - prob.params.kappa * prob.disc.solid.total_area()).abs() < 1e-12);
    }

    #[test]
    fn rest_without_elasticity() {
        let params = PhysicalParams {
            kappa: 0.0,
            ..PhysicalParams::default()
        };
        let prob = small(params);
        let s0 = prob.init_state().unwrap();
        let s1 = prob.advance(&s0).unwrap();
        let s2 = prob.advance(&s1).unwrap();
        for (a, b) in s2.x.coeffs.iter().zip(&s0.x.coeffs) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(s2.u.coeffs.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn energy_decays_and_is_deterministic() {
        let prob = small(PhysicalParams {
            t_final: 0.5,
            ..PhysicalParams::default()
        });
        let run = || {
            let mut s = prob.init_state().unwrap();
            let mut e = vec![prob.energy(&s)];
            for _ in 0..prob.params.n_steps() {
                s = prob.advance(&s).unwrap();
                e.push(prob.energy(&s));
            }
            e
        };
        let a = run();
        assert_eq!(a, run());
        for w in a.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "{w:?}");
        }
        assert!(a[1] < a[0]);
    }

    #[test]
    fn constraint_holds_after_step() {
        let prob = small(PhysicalParams::default());
        let s0 = prob.init_state().unwrap();
        let s1 = prob.advance(&s0).unwrap();
        let cf = assemble_cf(
            &CouplingInputs::new(&prob.disc, &s0.x, Some(&s0.table)),
            CouplingKind::C0,
            AssemblyMode::Exact,
        )
        .unwrap();
        let dx: Vec<f64> = s1.x.coeffs.iter().zip(&s0.x.coeffs).map(|(a, b)| a - b).collect();
        let lhs = prob.cs.matvec(&dx);
        let rhs = cf.matvec(&s1.u.coeffs);
        let scale = lhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - prob.params.dt * b).abs() <= 1e-10 * scale.max(1e-300));
        }
    }

    /// One step assembled directly in the unknowns `(u, X^{n+1}, λ, p)`.
    #[test]
    fn rescaled_step_matches_direct_step() {
        let params = PhysicalParams {
            dt: 0.05,
            ..PhysicalParams::default()
        };
        let prob = small(params);
        let s0 = prob.init_state().unwrap();
        // give the state some history so every right-hand side is active
        let s1 = prob.advance(&s0).unwrap();
        let s2 = prob.advance(&s1).unwrap();

        let disc = &prob.disc;
        let l = disc.layout();
        let dt = params.dt;
        let cf = assemble_cf(
            &CouplingInputs::new(disc, &s1.x, Some(&s1.table)),
            CouplingKind::C0,
            AssemblyMode::Exact,
        )
        .unwrap();
        let dr = params.delta_rho();
        let solid = prob
            .solid_mass
            .scaled(dr / (dt * dt))
            .add_scaled(&prob.solid_stiffness, params.kappa);
        let mut b = TripletBuilder::new(l.total(), l.total());
        b.add_block(&prob.af, 0, 0, 1.0);
        b.add_block(&cf.transpose(), 0, l.off_l(), 1.0);
        b.add_block(&prob.bf.transpose(), 0, l.off_p(), -1.0);
        b.add_block(&solid, l.off_x(), l.off_x(), 1.0);
        b.add_block(&prob.cs.transpose(), l.off_x(), l.off_l(), -1.0);
        b.add_block(&cf, l.off_l(), 0, -1.0);
        b.add_block(&prob.cs, l.off_l(), l.off_x(), 1.0 / dt);
        b.add_block(&prob.bf, l.off_p(), 0, 1.0);
        let full = b.into_csr();
        let mut rhs = vec![0.0; l.total()];
        for (i, v) in prob.fluid_mass.matvec(&s1.u.coeffs).into_iter().enumerate() {
            rhs[i] = params.rho_f / dt * v;
        }
        let two_x: Vec<f64> =
            s1.x.coeffs
                .iter()
                .zip(&s1.x_prev.coeffs)
                .map(|(a, b)| 2.0 * a - b)
                .collect();
        for (i, v) in prob.solid_mass.matvec(&two_x).into_iter().enumerate() {
            rhs[l.off_x() + i] = dr / (dt * dt) * v;
        }
        for (i, v) in prob.cs.matvec(&s1.x.coeffs).into_iter().enumerate() {
            rhs[l.off_l() + i] = v / dt;
        }
        let keep: Vec<usize> = (0..l.total())
            .filter(|&i| i >= l.n_u || !disc.u_map.constrained[i])
            .collect();
        let m = full.submatrix(&keep, &keep);
        let mut tb = TripletBuilder::new(m.nrows + 1, m.ncols + 1);
        tb.extend(m.triplets());
        let p0 = keep.iter().position(|&i| i == l.off_p()).unwrap();
        for (k, &w) in prob.pressure_weights.iter().enumerate() {
            tb.push(p0 + k, m.nrows, w);
            tb.push(m.nrows, p0 + k, w);
        }
        let mut r: Vec<f64> = keep.iter().map(|&i| rhs[i]).collect();
        r.push(0.0);
        let (sol, _) = crate::solver::solve_linear(&tb.into_csr(), &r).unwrap();
        let mut x_direct = vec![0.0; l.n_x];
        for (k, &i) in keep.iter().enumerate() {
            if (l.off_x()..l.off_l()).contains(&i) {
                x_direct[i - l.off_x()] = sol[k];
            }
        }
        let scale = x_direct.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in x_direct.iter().zip(&s2.x.coeffs) {
            assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn cut_cells_partition_element() {
        let prob = small(PhysicalParams::default());
        let s = prob.init_state().unwrap();
        let e = pick_element(prob.disc.solid.n_triangles(), 42);
        assert_eq!(e, pick_element(prob.disc.solid.n_triangles(), 42));
        let areas = track_cut_cells(&s, e).unwrap();
        let total: f64 = areas.iter().sum();
        assert!((total - s.table.mapped_area[e]).abs() <= 1e-12 * s.table.mapped_area[e]);
        assert!(track_cut_cells(&s, usize::MAX).is_err());
    }
}
