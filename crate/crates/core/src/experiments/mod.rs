//! Manufactured cases and the study drivers behind the command line.

pub mod cases;
pub mod studies;

pub use cases::{case_by_id, registry, CaseId, ManufacturedCase};
pub use studies::*;

use crate::assembly::{
    assemble_rhs, dirichlet_values, pressure_mean_weights, AssemblyMode, BlockSystem, CouplingKind, Discretization,
    PressureFix, ReducedSystem,
};
use crate::mesh::mesh_size;
use crate::solver::{error_norms, estimate_cond2, solve, ConditionEstimate, FieldErrors, LinearSolution};
use crate::Result;

/// One assembled and reduced stationary problem.
pub struct CaseSystem {
    pub disc: Discretization,
    pub blocks: BlockSystem,
    pub reduced: ReducedSystem,
    /// Smallest intersection polygon of the table.
    pub min_piece_area: f64,
}

pub fn build_case_system(
    case: &ManufacturedCase,
    level: u32,
    kind: CouplingKind,
    mode: AssemblyMode,
    fix: PressureFix,
) -> Result<CaseSystem> {
    let disc = case.discretization(level)?;
    let xbar = case.xbar(&disc);
    let table = disc.intersection_table(&xbar)?;
    let exact_table = (mode == AssemblyMode::Exact).then_some(&table);
    let mut blocks = BlockSystem::assemble(&disc, &case.params, &xbar, exact_table, kind, mode)?;
    blocks.rhs = assemble_rhs(case, &disc, &case.params, &xbar, &table, kind)?;
    let dirichlet = dirichlet_values(case, &disc);
    let weights = pressure_mean_weights(&disc.fluid_coarse, &disc.p_map);
    let reduced = blocks.reduce(&disc.u_map, Some(&dirichlet), &weights, fix);
    Ok(CaseSystem {
        min_piece_area: table.min_piece_area(),
        disc,
        blocks,
        reduced,
    })
}

/// Result of solving one case at one level.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub level: u32,
    /// Largest element diameter of the pressure mesh.
    pub h: f64,
    pub errors: FieldErrors,
    pub cond: Option<ConditionEstimate>,
    pub solution: LinearSolution,
    pub min_piece_area: f64,
}

impl CaseRun {
    /// `(u in H¹, p in L², X in H¹, λ in the coupling norm)`.
    pub fn error_row(&self, kind: CouplingKind) -> [f64; 4] {
        let e = &self.errors;
        [e.u_h1, e.p_l2, e.x_h1, e.lambda(kind)]
    }
}

pub fn run_case(
    case: &ManufacturedCase,
    level: u32,
    kind: CouplingKind,
    mode: AssemblyMode,
    fix: PressureFix,
    with_cond: bool,
) -> Result<CaseRun> {
    let sys = build_case_system(case, level, kind, mode, fix)?;
    let solution = solve(&sys.reduced)?;
    let errors = error_norms(&solution, case, &sys.disc, kind)?;
    let cond = if with_cond {
        Some(estimate_cond2(&sys.reduced.matrix)?)
    } else {
        None
    };
    Ok(CaseRun {
        level,
        h: mesh_size(&sys.disc.fluid_coarse).0,
        errors,
        cond,
        solution,
        min_piece_area: sys.min_piece_area,
    })
}
