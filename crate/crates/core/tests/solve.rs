use dlmfd::assembly::{AssemblyMode, CouplingKind, PressureFix};
use dlmfd::experiments::{case_by_id, run_case, CaseId};
use dlmfd::solver::fit_rate;

#[test]
fn flower_errors_decay() {
    let case = case_by_id(CaseId::Flower, 0.0);
    let runs: Vec<_> = (1..=3)
        .map(|l| {
            run_case(
                &case,
                l,
                CouplingKind::C1,
                AssemblyMode::Exact,
                PressureFix::Augment,
                false,
            )
            .unwrap()
        })
        .collect();
    let hs: Vec<f64> = runs.iter().map(|r| r.h).collect();
    for k in 0..4 {
        let e: Vec<f64> = runs.iter().map(|r| r.error_row(CouplingKind::C1)[k]).collect();
        assert!(fit_rate(&e, &hs).unwrap() > 0.9, "column {k}: {e:?}");
    }
    assert!(runs.iter().all(|r| r.solution.residual <= 1e-10));
}

#[test]
fn pressure_fix_does_not_change_the_solution() {
    let case = case_by_id(CaseId::Disk, 0.0);
    let a = run_case(
        &case,
        2,
        CouplingKind::C0,
        AssemblyMode::Exact,
        PressureFix::Augment,
        false,
    )
    .unwrap();
    let b = run_case(&case, 2, CouplingKind::C0, AssemblyMode::Exact, PressureFix::Pin, false).unwrap();
    for (x, y) in [
        (&a.solution.u, &b.solution.u),
        (&a.solution.x, &b.solution.x),
        (&a.solution.lambda, &b.solution.lambda),
        (&a.solution.p, &b.solution.p),
    ] {
        let scale = x.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = x
            .coeffs
            .iter()
            .zip(&y.coeffs)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(diff <= 1e-10 * scale, "{diff} vs {scale}");
    }
}

#[test]
fn weak_divergence_vanishes() {
    let case = case_by_id(CaseId::Disk, 0.0);
    let sys =
        dlmfd::experiments::build_case_system(&case, 3, CouplingKind::C0, AssemblyMode::Exact, PressureFix::Augment)
            .unwrap();
    let sol = dlmfd::solver::solve(&sys.reduced).unwrap();
    let div = sys.blocks.bf.matvec(&sol.u.coeffs);
    let scale = sys.blocks.bf.frobenius() * sol.u.coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(div.iter().all(|v| v.abs() <= 1e-10 * scale));
}

#[test]
fn c0_conditioning_outgrows_c1_by_h_squared() {
    let case = case_by_id(CaseId::Disk, 0.0);
    let mut ratios = Vec::new();
    let mut hs = Vec::new();
    for level in 1..=3 {
        let cond = |kind| {
            let run = run_case(&case, level, kind, AssemblyMode::Exact, PressureFix::Augment, true).unwrap();
            (run.cond.unwrap().cond2, run.h)
        };
        let (c0, h) = cond(CouplingKind::C0);
        let (c1, _) = cond(CouplingKind::C1);
        ratios.push(c0 / c1);
        hs.push(h);
    }
    let slope = fit_rate(&ratios, &hs).unwrap();
    assert!((-2.5..=-1.5).contains(&slope), "{slope} {ratios:?}");
    assert!(ratios[2] >= 1e2, "{ratios:?}");
}
