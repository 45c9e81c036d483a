use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dlmfd::assembly::{AssemblyMode, CouplingKind, PressureFix};
use dlmfd::experiments::{
    case_list, default_sigmas, run_cond_study, run_convergence_study, run_shift_study, run_time_study, CaseId,
    StudyConfig,
};
use dlmfd::{Error, Result};

#[derive(Parser)]
#[command(name = "dlmfd", about = "Distributed Lagrange multiplier fictitious domain solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Errors of the shifted-square case for a list of shifts.
    Shift(Common),
    /// Error table over refinement levels.
    Converge(Common),
    /// Spectral condition numbers over refinement levels.
    Cond(Common),
    /// Time-dependent annulus benchmark.
    Dynamic(Common),
    /// List the manufactured cases.
    CaseList,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    ShiftedSquare,
    Disk,
    Flower,
    Annulus,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    C0,
    C1,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Inexact,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixArg {
    Augment,
    Pin,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "disk")]
    case: CaseArg,
    #[arg(long, value_enum, default_value = "both")]
    kind: KindArg,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Comma-separated refinement levels, starting at 1.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    levels: Vec<u32>,
    /// Shift of the shifted-square case; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Vec<f64>,
    /// Squares per side of the shift-study pressure mesh, or of the dynamic fluid mesh.
    #[arg(long, default_value_t = 32)]
    nx: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 4.0)]
    tfinal: f64,
    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    with_cond: bool,
    #[arg(long, value_enum, default_value = "augment")]
    pressure_fix: FixArg,
    /// Times at which the dynamic run writes field vectors; repeatable.
    #[arg(long)]
    snapshot: Vec<f64>,
}

impl Common {
    fn config(&self) -> StudyConfig {
        let kinds = match self.kind {
            KindArg::C0 => vec![CouplingKind::C0],
            KindArg::C1 => vec![CouplingKind::C1],
            KindArg::Both => vec![CouplingKind::C0, CouplingKind::C1],
        };
        let modes = match self.mode {
            ModeArg::Exact => vec![AssemblyMode::Exact],
            ModeArg::Inexact => vec![AssemblyMode::Inexact],
            ModeArg::Both => vec![AssemblyMode::Exact, AssemblyMode::Inexact],
        };
        StudyConfig {
            case: match self.case {
                CaseArg::ShiftedSquare => CaseId::ShiftedSquare,
                CaseArg::Disk => CaseId::Disk,
                CaseArg::Flower => CaseId::Flower,
                CaseArg::Annulus => CaseId::Annulus,
            },
            kinds,
            modes,
            levels: self.levels.clone(),
            sigmas: self.sigma.clone(),
            nx: self.nx,
            dt: self.dt,
            t_final: self.tfinal,
            out: self.out.clone(),
            seed: self.seed,
            with_cond: self.with_cond,
            pressure_fix: match self.pressure_fix {
                FixArg::Augment => PressureFix::Augment,
                FixArg::Pin => PressureFix::Pin,
            },
            snapshots: self.snapshot.clone(),
        }
    }
}

fn e(v: f64) -> String {
    format!("{v:.3e}")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CaseList => print!("{}", case_list()),
        Command::Shift(c) => {
            let mut cfg = c.config();
            if cfg.sigmas.is_empty() {
                cfg.sigmas = default_sigmas();
            }
            for r in run_shift_study(&cfg)? {
                let cond = r.cond.map(e).unwrap_or_default();
                println!(
                    "sigma {:>9.1e} {} {:<7} u {} p {} X {} lambda {} {cond}",
                    r.sigma,
                    r.kind.name(),
                    r.mode.name(),
                    e(r.errors[0]),
                    e(r.errors[1]),
                    e(r.errors[2]),
                    e(r.errors[3])
                );
            }
        }
        Command::Converge(c) => {
            for res in run_convergence_study(&c.config())? {
                println!("{} {}", res.kind.name(), res.mode.name());
                for r in &res.rows {
                    let cond = r.cond.map(e).unwrap_or_default();
                    println!(
                        "  level {} h {} u {} p {} X {} lambda {} {cond}",
                        r.level,
                        e(r.h),
                        e(r.errors[0]),
                        e(r.errors[1]),
                        e(r.errors[2]),
                        e(r.errors[3])
                    );
                }
                if res.rows.len() > 1 {
                    let s = res.slopes()?;
                    println!("  slopes u {:.2} p {:.2} X {:.2} lambda {:.2}", s[0], s[1], s[2], s[3]);
                }
            }
        }
        Command::Cond(c) => {
            let cfg = c.config();
            if cfg.levels.len() < 2 {
                return Err(Error::Argument("cond study needs at least two levels".into()));
            }
            for s in run_cond_study(&cfg)? {
                let conds: Vec<String> = s.conds.iter().map(|&v| e(v)).collect();
                println!(
                    "{} {:<7} cond [{}] slope {:.2}",
                    s.kind.name(),
                    s.mode.name(),
                    conds.join(", "),
                    s.slope
                );
            }
        }
        Command::Dynamic(c) => {
            let cfg = c.config();
            let study = run_time_study(&cfg, cfg.kinds[0], cfg.modes[0])?;
            let last = study.energy.last().expect("initial energy row");
            println!(
                "steps {} E(0) {} E(T) {} ratio {:.4} monotone {} min cut area {} element {}",
                last.n,
                e(study.energy[0].energy),
                e(last.energy),
                last.ratio,
                study.is_monotone(1e-12),
                e(study.min_cut_area()),
                study.element
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("dlmfd: {err}");
            ExitCode::FAILURE
        }
    }
}
