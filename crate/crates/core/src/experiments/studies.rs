//! Study drivers and their CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::cases::{case_by_id, CaseId};
use super::run_case;
use crate::assembly::{AssemblyMode, CouplingKind, PressureFix};
use crate::femspace::FieldVector;
use crate::solver::fit_rate;
use crate::timestepping::{pick_element, track_cut_cells, DynamicProblem, PhysicalParams};
use crate::{Error, Result};

/// Full-precision scientific notation (17 significant digits).
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Level whose pressure mesh has `nx` squares per side.
pub fn level_for_nx(nx: usize) -> Result<u32> {
    if nx < 8 || !nx.is_multiple_of(8) || !(nx / 8).is_power_of_two() {
        return Err(Error::arg(format!("--nx must be 8·2^k, got {nx}")));
    }
    Ok((nx / 8).trailing_zeros() + 1)
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub case: CaseId,
    pub kinds: Vec<CouplingKind>,
    pub modes: Vec<AssemblyMode>,
    pub levels: Vec<u32>,
    pub sigmas: Vec<f64>,
    /// Pressure-mesh squares per side of the shift study, and fluid mesh of
    /// the dynamic study.
    pub nx: usize,
    pub dt: f64,
    pub t_final: f64,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub with_cond: bool,
    pub pressure_fix: PressureFix,
    /// Times at which the dynamic study dumps field vectors.
    pub snapshots: Vec<f64>,
}

/// Shifts `0, ±10⁻³, ±10⁻⁷, ±10⁻¹⁰, ±10⁻¹⁵`.
pub fn default_sigmas() -> Vec<f64> {
    let mut s = vec![0.0];
    for e in [3, 7, 10, 15] {
        let v = 10f64.powi(-e);
        s.push(v);
        s.push(-v);
    }
    s
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            case: CaseId::Disk,
            kinds: vec![CouplingKind::C0, CouplingKind::C1],
            modes: vec![AssemblyMode::Exact, AssemblyMode::Inexact],
            levels: vec![1, 2, 3, 4],
            sigmas: default_sigmas(),
            nx: 32,
            dt: 0.1,
            t_final: 4.0,
            out: None,
            seed: 2024,
            with_cond: false,
            pressure_fix: PressureFix::Augment,
            snapshots: vec![],
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(Error::arg("levels must be nonempty and start at 1"));
        }
        if self.kinds.is_empty() || self.modes.is_empty() {
            return Err(Error::arg("at least one coupling kind and assembly mode required"));
        }
        Ok(())
    }

    fn write(&self, name: &str, contents: &str) -> Result<Option<PathBuf>> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(name);
                fs::write(&path, contents)?;
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShiftRow {
    pub sigma: f64,
    pub kind: CouplingKind,
    pub mode: AssemblyMode,
    /// `u` in H¹, `p` in L², `X` in H¹, `λ` in the coupling norm.
    pub errors: [f64; 4],
    pub cond: Option<f64>,
    pub min_piece_area: f64,
}

pub fn run_shift_study(cfg: &StudyConfig) -> Result<Vec<ShiftRow>> {
    if cfg.sigmas.is_empty() {
        return Err(Error::arg("shift study needs at least one sigma"));
    }
    let level = level_for_nx(cfg.nx)?;
    let mut rows = Vec::new();
    for &sigma in &cfg.sigmas {
        let case = case_by_id(CaseId::ShiftedSquare, sigma);
        for &kind in &cfg.kinds {
            for &mode in &cfg.modes {
                let run = run_case(&case, level, kind, mode, cfg.pressure_fix, cfg.with_cond)?;
                rows.push(ShiftRow {
                    sigma,
                    kind,
                    mode,
                    errors: run.error_row(kind),
                    cond: run.cond.map(|c| c.cond2),
                    min_piece_area: run.min_piece_area,
                });
            }
        }
    }
    cfg.write("shift.csv", &shift_csv(&rows))?;
    Ok(rows)
}

pub fn shift_csv(rows: &[ShiftRow]) -> String {
    let mut s = String::from("sigma,kind,mode,err_u,err_p,err_X,err_lambda,cond\n");
    for r in rows {
        let e = r.errors.map(fmt_num);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt_num(r.sigma),
            r.kind.name(),
            r.mode.name(),
            e[0],
            e[1],
            e[2],
            e[3],
            fmt_opt(r.cond)
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: u32,
    pub h: f64,
    pub errors: [f64; 4],
    pub cond: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub kind: CouplingKind,
    pub mode: AssemblyMode,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceResult {
    /// Fitted slopes of the four error columns.
    pub fn slopes(&self) -> Result<[f64; 4]> {
        let hs: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
        let mut out = [0.0; 4];
        for (k, o) in out.iter_mut().enumerate() {
            let v: Vec<f64> = self.rows.iter().map(|r| r.errors[k]).collect();
            *o = fit_rate(&v, &hs)?;
        }
        Ok(out)
    }

    pub fn cond_slope(&self) -> Result<Option<f64>> {
        let c: Option<Vec<f64>> = self.rows.iter().map(|r| r.cond).collect();
        match c {
            Some(c) => {
                let hs: Vec<f64> = self.rows.iter().map(|r| r.h).collect();
                fit_rate(&c, &hs).map(Some)
            }
            None => Ok(None),
        }
    }
}

/// Runs every `(kind, mode)` pair of the config over its levels, at shift
/// `sigma` for the shifted square.
pub fn run_convergence_study_at(cfg: &StudyConfig, sigma: f64) -> Result<Vec<ConvergenceResult>> {
    cfg.validate()?;
    let case = case_by_id(cfg.case, sigma);
    let mut out = Vec::new();
    for &kind in &cfg.kinds {
        for &mode in &cfg.modes {
            let mut rows = Vec::new();
            for &level in &cfg.levels {
                let run = run_case(&case, level, kind, mode, cfg.pressure_fix, cfg.with_cond)?;
                rows.push(ConvergenceRow {
                    level,
                    h: run.h,
                    errors: run.error_row(kind),
                    cond: run.cond.map(|c| c.cond2),
                });
            }
            let res = ConvergenceResult { kind, mode, rows };
            let name = format!("converge_{}_{}_{}.csv", case.name(), kind.name(), mode.name());
            cfg.write(&name, &convergence_csv(&res))?;
            out.push(res);
        }
    }
    Ok(out)
}

pub fn run_convergence_study(cfg: &StudyConfig) -> Result<Vec<ConvergenceResult>> {
    let sigma = cfg.sigmas.first().copied().unwrap_or(0.0);
    run_convergence_study_at(cfg, sigma)
}

pub fn convergence_csv(res: &ConvergenceResult) -> String {
    let mut s = String::from("level,h,err_u,err_p,err_X,err_lambda,cond\n");
    for r in &res.rows {
        let e = r.errors.map(fmt_num);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.level,
            fmt_num(r.h),
            e[0],
            e[1],
            e[2],
            e[3],
            fmt_opt(r.cond)
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct CondSeries {
    pub kind: CouplingKind,
    pub mode: AssemblyMode,
    pub levels: Vec<u32>,
    pub hs: Vec<f64>,
    pub conds: Vec<f64>,
    pub slope: f64,
}

pub fn run_cond_study(cfg: &StudyConfig) -> Result<Vec<CondSeries>> {
    cfg.validate()?;
    let case = case_by_id(cfg.case, cfg.sigmas.first().copied().unwrap_or(0.0));
    let mut out = Vec::new();
    for &kind in &cfg.kinds {
        for &mode in &cfg.modes {
            let mut hs = Vec::new();
            let mut conds = Vec::new();
            for &level in &cfg.levels {
                let sys = super::build_case_system(&case, level, kind, mode, cfg.pressure_fix)?;
                let est = crate::solver::estimate_cond2(&sys.reduced.matrix)?;
                hs.push(crate::mesh::mesh_size(&sys.disc.fluid_coarse).0);
                conds.push(est.cond2);
            }
            let slope = fit_rate(&conds, &hs)?;
            out.push(CondSeries {
                kind,
                mode,
                levels: cfg.levels.clone(),
                hs,
                conds,
                slope,
            });
        }
    }
    cfg.write(&format!("cond_{}.csv", case.name()), &cond_csv(&out))?;
    Ok(out)
}

/// One row per level and series, then one `slope` row per series.
pub fn cond_csv(series: &[CondSeries]) -> String {
    let mut s = String::from("level,h,kind,mode,cond\n");
    for c in series {
        for ((l, h), v) in c.levels.iter().zip(&c.hs).zip(&c.conds) {
            let _ = writeln!(
                s,
                "{l},{},{},{},{}",
                fmt_num(*h),
                c.kind.name(),
                c.mode.name(),
                fmt_num(*v)
            );
        }
    }
    for c in series {
        let _ = writeln!(s, "slope,,{},{},{}", c.kind.name(), c.mode.name(), fmt_num(c.slope));
    }
    s
}

#[derive(Debug, Clone)]
pub struct EnergyRow {
    pub n: usize,
    pub t: f64,
    pub energy: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct TimeStudy {
    pub energy: Vec<EnergyRow>,
    /// `(n, t, area)` for each polygon of the tracked element.
    pub cut_cells: Vec<(usize, f64, f64)>,
    pub element: usize,
    pub seed: u64,
    /// Solid area of the mapped mesh at every step.
    pub mapped_area: Vec<f64>,
}

impl TimeStudy {
    /// `E(n+1) ≤ E(n)(1 + tol)` for every step.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.energy.windows(2).all(|w| w[1].energy <= w[0].energy * (1.0 + tol))
    }

    pub fn min_cut_area(&self) -> f64 {
        self.cut_cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min)
    }
}

pub fn run_time_study(cfg: &StudyConfig, kind: CouplingKind, mode: AssemblyMode) -> Result<TimeStudy> {
    let params = PhysicalParams {
        dt: cfg.dt,
        t_final: cfg.t_final,
        ..PhysicalParams::default()
    };
    let mut prob = DynamicProblem::benchmark(cfg.nx, params, kind, mode)?;
    prob.fix = cfg.pressure_fix;
    let element = pick_element(prob.disc.solid.n_triangles(), cfg.seed);
    let mut state = prob.init_state()?;
    let e0 = prob.energy(&state);
    let mut energy = vec![EnergyRow {
        n: 0,
        t: 0.0,
        energy: e0,
        ratio: 1.0,
    }];
    let mut cut_cells: Vec<(usize, f64, f64)> = track_cut_cells(&state, element)?
        .into_iter()
        .map(|a| (0, 0.0, a))
        .collect();
    let mut mapped_area = vec![state.table.mapped_area.iter().sum()];
    let mut pending: Vec<f64> = cfg.snapshots.clone();
    for _ in 0..params.n_steps() {
        state = prob.advance(&state)?;
        let e = prob.energy(&state);
        energy.push(EnergyRow {
            n: state.n,
            t: state.t,
            energy: e,
            ratio: e / e0,
        });
        cut_cells.extend(
            track_cut_cells(&state, element)?
                .into_iter()
                .map(|a| (state.n, state.t, a)),
        );
        mapped_area.push(state.table.mapped_area.iter().sum());
        let due: Vec<f64> = pending
            .iter()
            .copied()
            .filter(|&ts| state.t >= ts - 1e-9 * params.dt)
            .collect();
        pending.retain(|ts| !due.contains(ts));
        for ts in due {
            if let Some(dir) = &cfg.out {
                write_snapshot(dir, ts, &[("u", &state.u), ("p", &state.p), ("X", &state.x)])?;
            }
        }
    }
    let study = TimeStudy {
        energy,
        cut_cells,
        element,
        seed: cfg.seed,
        mapped_area,
    };
    cfg.write("energy.csv", &energy_csv(&study))?;
    cfg.write("cutcells.csv", &cutcells_csv(&study))?;
    Ok(study)
}

pub fn energy_csv(study: &TimeStudy) -> String {
    let mut s = String::from("n,t,E,E_ratio\n");
    for r in &study.energy {
        let _ = writeln!(s, "{},{},{},{}", r.n, fmt_num(r.t), fmt_num(r.energy), fmt_num(r.ratio));
    }
    s
}

pub fn cutcells_csv(study: &TimeStudy) -> String {
    let mut s = format!("# seed={} element={}\nn,t,area\n", study.seed, study.element);
    for (n, t, a) in &study.cut_cells {
        let _ = writeln!(s, "{n},{},{}", fmt_num(*t), fmt_num(*a));
    }
    s
}

/// Plain-text vector: length, then one coefficient per line.
pub fn vector_text(v: &FieldVector) -> String {
    let mut s = format!("{}\n", v.len());
    for c in &v.coeffs {
        let _ = writeln!(s, "{}", fmt_num(*c));
    }
    s
}

fn write_snapshot(dir: &Path, t: f64, fields: &[(&str, &FieldVector)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, v) in fields {
        fs::write(dir.join(format!("snapshot_t{t}_{name}.txt")), vector_text(v))?;
    }
    Ok(())
}

/// One line per registered case.
pub fn case_list() -> String {
    let mut s = String::new();
    for c in super::registry() {
        let p = c.params;
        let _ = writeln!(
            s,
            "{}: fluid {:?}, solid {:?}, alpha={} beta={} gamma={} nu={}; {}",
            c.name(),
            c.fluid,
            c.solid,
            p.alpha,
            p.beta,
            p.gamma,
            p.nu,
            c.notes
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_from_nx() {
        assert_eq!(level_for_nx(8).unwrap(), 1);
        assert_eq!(level_for_nx(32).unwrap(), 3);
        assert!(level_for_nx(24).is_err());
        assert!(level_for_nx(4).is_err());
    }

    #[test]
    fn number_format_round_trips() {
        for v in [std::f64::consts::PI, 1e-15, -3.0e200, 0.1] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn default_shifts() {
        let s = default_sigmas();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], 0.0);
        assert!(s.contains(&-1e-15));
    }

    #[test]
    fn csv_headers() {
        let c = ConvergenceResult {
            kind: CouplingKind::C0,
            mode: AssemblyMode::Exact,
            rows: vec![ConvergenceRow {
                level: 1,
                h: 0.5,
                errors: [1.0; 4],
                cond: None,
            }],
        };
        let text = convergence_csv(&c);
        assert!(text.starts_with("level,h,err_u,err_p,err_X,err_lambda,cond\n1,"));
        assert!(text.trim_end().ends_with(','));
    }
}
