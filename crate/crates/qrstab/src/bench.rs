//! Benchmark table harness: runs the explicit-only, implicit-only, and
//! switching configurations on the stiff test problems and reports one row
//! per (method, tolerance) cell. Cells are independent and may run in
//! parallel; row order is fixed regardless of completion order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use crate::error::Result;
use crate::imex::{calibrate_h0, imex_integrate, Calibration, H0Source, ImexConfig, ThresholdMode};
use crate::problems;
use crate::stepper::{integrate, JacMode, StepperConfig};
use crate::tableaux::builtin;

/// How a bench cell drives the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    ExplicitOnly,
    ImplicitOnly,
    Switching,
}

/// One (method, tolerance) cell of a benchmark table.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub label: String,
    pub kind: MethodKind,
    pub problem: String,
    pub params: Vec<(String, f64)>,
    pub explicit: String,
    pub implicit: String,
    pub tol: f64,
    pub t_end: f64,
    pub d1: f64,
    pub d2: f64,
    pub cal_start: f64,
    pub cal_end: f64,
    pub alpha: f64,
    pub w: usize,
    pub jac_mode: JacMode,
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub tol: f64,
    pub h0: f64,
    pub h_mean: f64,
    pub nexp: Option<u64>,
    pub nimp: Option<u64>,
    pub feval: u64,
    pub jaceval: Option<u64>,
    pub lsol: Option<u64>,
}

/// Cells for the peatland-carbon table: explicit HEU-2-2-1, implicit
/// SDIRK-2-2-1, and their pairing, on [0, 80] with finite-difference
/// Jacobians, d₁ = −2, d₂ = 2, α = 0.1, and the nonstiff calibration
/// window [2, 20] (or [2, 5] when ν = 0.3).
pub fn compost_cells(nu: f64, tols: &[f64], quick: bool) -> Vec<BenchCell> {
    let t_end = if quick { 8.0 } else { 80.0 };
    let (cal_start, cal_end): (f64, f64) =
        if (nu - 0.3).abs() < 1e-12 { (2.0, 5.0) } else { (2.0, 20.0) };
    let cal_end = cal_end.min(t_end);
    let mut cells = Vec::new();
    for &tol in tols {
        for (label, kind) in [
            ("Mcpb1", MethodKind::ExplicitOnly),
            ("Mcpb2", MethodKind::ImplicitOnly),
            ("Mcpb3", MethodKind::Switching),
        ] {
            cells.push(BenchCell {
                label: label.into(),
                kind,
                problem: "compost".into(),
                params: vec![("nu".into(), nu)],
                explicit: "HEU-2-2-1".into(),
                implicit: "SDIRK-2-2-1".into(),
                tol,
                t_end,
                d1: -2.0,
                d2: 2.0,
                cal_start,
                cal_end,
                alpha: 0.1,
                w: 1,
                jac_mode: JacMode::FiniteDifference,
            });
        }
    }
    cells
}

/// Cells for the reaction-diffusion table: explicit BS-4-2-3 plus three
/// pairings (ESDIRK-4-2-3, SDIRK-4-2-3, SDIRK-3-2-3) on [0, 200] with
/// analytic Jacobians, d₁ = −3.5, d₂ = 10, α = 0.5, window [2, 20].
pub fn fhn_cells(tols: &[f64], quick: bool) -> Vec<BenchCell> {
    let t_end = if quick { 20.0 } else { 200.0 };
    let cal_end = 20.0f64.min(t_end);
    let mut cells = Vec::new();
    for &tol in tols {
        for (label, kind, implicit) in [
            ("Mfhn1", MethodKind::ExplicitOnly, "ESDIRK-4-2-3"),
            ("Mfhn2", MethodKind::Switching, "ESDIRK-4-2-3"),
            ("Mfhn3", MethodKind::Switching, "SDIRK-4-2-3"),
            ("Mfhn4", MethodKind::Switching, "SDIRK-3-2-3"),
        ] {
            cells.push(BenchCell {
                label: label.into(),
                kind,
                problem: "fhn".into(),
                params: vec![("J".into(), 14.0)],
                explicit: "BS-4-2-3".into(),
                implicit: implicit.into(),
                tol,
                t_end,
                d1: -3.5,
                d2: 10.0,
                cal_start: 2.0,
                cal_end,
                alpha: 0.5,
                w: 1,
                jac_mode: JacMode::Analytic,
            });
        }
    }
    cells
}

/// Run one cell to a table row.
pub fn run_cell(cell: &BenchCell) -> Result<BenchRow> {
    let sys = problems::by_id(&cell.problem, &cell.params)?;
    let x0 = sys.default_state.clone();
    let t0 = 0.0;
    let stepper = StepperConfig {
        atol: cell.tol,
        rtol: cell.tol,
        h0: 0.05,
        h_max: 0.5,
        jac_mode: cell.jac_mode,
        ..Default::default()
    };
    let cfg = ImexConfig {
        explicit_tab: builtin(&cell.explicit)?,
        implicit_tab: builtin(&cell.implicit)?,
        d1: cell.d1,
        d2: cell.d2,
        h0_source: H0Source::Calibrate(Calibration {
            interval_start: cell.cal_start,
            interval_end: cell.cal_end,
            alpha: cell.alpha,
        }),
        w: cell.w,
        threshold_mode: ThresholdMode::Divide,
        stepper,
    };
    let h0 = calibrate_h0(&sys, &cfg, t0, &x0)?;

    let row = match cell.kind {
        MethodKind::ExplicitOnly => {
            let (_, stats) = integrate(&sys, &cfg.explicit_tab, &cfg.stepper, t0, &x0, cell.t_end)?;
            BenchRow {
                method: cell.label.clone(),
                tol: cell.tol,
                h0,
                h_mean: stats.h_mean,
                nexp: Some(stats.nexp),
                nimp: None,
                feval: stats.feval,
                jaceval: None,
                lsol: None,
            }
        }
        MethodKind::ImplicitOnly => {
            let (_, stats) = integrate(&sys, &cfg.implicit_tab, &cfg.stepper, t0, &x0, cell.t_end)?;
            BenchRow {
                method: cell.label.clone(),
                tol: cell.tol,
                h0,
                h_mean: stats.h_mean,
                nexp: None,
                nimp: Some(stats.nimp),
                feval: stats.feval,
                jaceval: Some(stats.jaceval),
                lsol: Some(stats.lsol),
            }
        }
        MethodKind::Switching => {
            let mut run_cfg = cfg.clone();
            run_cfg.h0_source = H0Source::Fixed(h0);
            let (_, stats, _, _) = imex_integrate(&sys, &run_cfg, t0, &x0, cell.t_end)?;
            BenchRow {
                method: cell.label.clone(),
                tol: cell.tol,
                h0,
                h_mean: stats.h_mean,
                nexp: Some(stats.nexp),
                nimp: Some(stats.nimp),
                feval: stats.feval,
                jaceval: Some(stats.jaceval),
                lsol: Some(stats.lsol),
            }
        }
    };
    Ok(row)
}

/// Run all cells, at most `threads` at a time, preserving cell order in the
/// output.
pub fn run_cells(cells: &[BenchCell], threads: usize) -> Vec<Result<BenchRow>> {
    let n = cells.len();
    let workers = threads.max(1).min(n.max(1));
    if workers <= 1 {
        return cells.iter().map(run_cell).collect();
    }
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<Result<BenchRow>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                if tx.send((i, run_cell(&cells[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            results[i] = Some(r);
        }
    });
    results.into_iter().map(|o| o.expect("every cell ran")).collect()
}
