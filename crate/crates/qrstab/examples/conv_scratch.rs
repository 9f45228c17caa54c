// scratch: convergence data for SDIRK-2-2-1 on smooth decay
fn main() {
    use qrstab::problems::{make_scalar_test, ScalarKind};
    use qrstab::stepper::{integrate, StepperConfig};
    use qrstab::tableaux::builtin;
    let sys = make_scalar_test(ScalarKind::SmoothDecay).unwrap();
    let exact = (-2.0f64 + 1.0 - 2.0f64.cos()).exp();
    for name in ["HEU-2-2-1", "SDIRK-2-2-1", "DP-7-5-4", "BS-4-2-3", "SDIRK-3-2-3", "SDIRK-4-2-3", "ESDIRK-4-2-3"] {
        let tab = builtin(name).unwrap();
        let mut errs = Vec::new();
        for &h in &[0.2, 0.1, 0.05, 0.025] {
            let cfg = StepperConfig { fixed_step: Some(h), h0: h, h_max: h.max(0.5), ..Default::default() };
            let (traj, _) = integrate(&sys, &tab, &cfg, 0.0, &[1.0], 2.0).unwrap();
            errs.push((traj.final_state()[0] - exact).abs());
        }
        let r1 = (errs[0]/errs[1]).log2();
        let r2 = (errs[1]/errs[2]).log2();
        let r3 = (errs[2]/errs[3]).log2();
        println!("{name:14} errs={errs:?} ratios=({r1:.3},{r2:.3},{r3:.3}) mean={:.3}", (r1+r2+r3)/3.0);
    }
}
