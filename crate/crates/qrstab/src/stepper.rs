//! One-step integration engine: explicit and DIRK steps with embedded error
//! estimation, Newton stage solves, step-size control, and bookkeeping
//! counters.
//!
//! The controller rejects a trial step by shrinking it 25% (`reduce_factor`
//! 0.75) until the weighted error estimate passes, then grows the next step
//! by at most 2x with a 0.9 safety factor and exponent 1/(p̂+1).

use crate::error::{Error, Result};
use crate::linalg::{lu_factor, norm_inf, LuFactors};
use crate::problems::OdeSystem;
use crate::tableaux::{ButcherTableau, SchemeClass};

/// Which Jacobian the Newton solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacMode {
    Analytic,
    FiniteDifference,
}

/// Tolerances, step bounds, and Newton settings for a run.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step size.
    pub h0: f64,
    /// Largest step the controller may propose.
    pub h_max: f64,
    /// Rejected steps shrink by this factor (default 0.75).
    pub reduce_factor: f64,
    /// Newton residual tolerance, scaled by 1 + ‖x‖∞ (default 1e-12).
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub jac_mode: JacMode,
    /// When set, every step uses exactly this size (clamped at t_end) and
    /// the error estimate is ignored.
    pub fixed_step: Option<f64>,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            atol: 1e-6,
            rtol: 1e-6,
            h0: 0.05,
            h_max: 0.5,
            reduce_factor: 0.75,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            jac_mode: JacMode::Analytic,
            fixed_step: None,
        }
    }
}

impl StepperConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { atol: tol, rtol: tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(Error::InvalidConfig("atol and rtol must be positive".into()));
        }
        if !(self.reduce_factor > 0.0 && self.reduce_factor < 1.0) {
            return Err(Error::InvalidConfig("reduce_factor must lie in (0,1)".into()));
        }
        if !(self.h0 > 0.0 && self.h_max > 0.0 && self.h0 <= self.h_max) {
            return Err(Error::InvalidConfig("need 0 < h0 <= h_max".into()));
        }
        if let Some(fs) = self.fixed_step {
            if fs <= 0.0 {
                return Err(Error::InvalidConfig("fixed_step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Run counters. `feval` counts right-hand-side evaluations made by the
/// stepper; finite-difference Jacobian formation is charged to `jaceval`
/// (one unit per Jacobian), not `feval`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub nexp: u64,
    pub nimp: u64,
    pub feval: u64,
    pub jaceval: u64,
    pub lsol: u64,
    pub nsteps_accepted: u64,
    pub nsteps_rejected: u64,
    pub h_mean: f64,
}

/// Scheme tag recorded per accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodTag {
    Explicit,
    Implicit,
}

impl MethodTag {
    pub fn letter(self) -> char {
        match self {
            MethodTag::Explicit => 'E',
            MethodTag::Implicit => 'I',
        }
    }
}

/// Accepted time grid, states, and per-step metadata of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// t_0 .. t_N, strictly increasing.
    pub times: Vec<f64>,
    /// One state per time.
    pub states: Vec<Vec<f64>>,
    /// step_sizes[n] = times[n+1] - times[n].
    pub step_sizes: Vec<f64>,
    /// Scheme used on each step.
    pub method_used: Vec<MethodTag>,
}

impl Trajectory {
    fn new(t0: f64, x0: &[f64]) -> Self {
        Self {
            times: vec![t0],
            states: vec![x0.to_vec()],
            step_sizes: Vec::new(),
            method_used: Vec::new(),
        }
    }

    pub fn len_steps(&self) -> usize {
        self.step_sizes.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial time")
    }
}

/// One explicit Runge-Kutta step. Returns (x_next, x_embedded) and adds
/// one `feval` per stage.
pub fn rk_step_explicit(
    sys: &OdeSystem,
    tab: &ButcherTableau,
    t: f64,
    x: &[f64],
    h: f64,
    stats: &mut Stats,
) -> Result<(Vec<f64>, Vec<f64>)> {
    debug_assert_eq!(tab.scheme_class, SchemeClass::Explicit);
    debug_assert!(h > 0.0);
    let d = sys.dim;
    let nu = tab.stages;
    let mut k = vec![vec![0.0; d]; nu];
    let mut stage = vec![0.0; d];
    for i in 0..nu {
        stage.copy_from_slice(x);
        for (j, kj) in k.iter().enumerate().take(i) {
            let w = h * tab.a[i][j];
            if w != 0.0 {
                for (s, kv) in stage.iter_mut().zip(kj) {
                    *s += w * kv;
                }
            }
        }
        sys.rhs(t + tab.c[i] * h, &stage, &mut k[i]);
        stats.feval += 1;
        if !k[i].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
    }
    let mut x_next = x.to_vec();
    let mut x_emb = x.to_vec();
    for (i, ki) in k.iter().enumerate() {
        let (wb, we) = (h * tab.b[i], h * tab.b_hat[i]);
        for j in 0..d {
            x_next[j] += wb * ki[j];
            x_emb[j] += we * ki[j];
        }
    }
    if !x_next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    Ok((x_next, x_emb))
}

/// One diagonally implicit Runge-Kutta step.
///
/// Stage i solves g_i = x + h Σ_{j≤i} a_ij f(t + c_j h, g_j) by plain Newton
/// from the initial guess g_i = x. The Jacobian is formed once per attempted
/// step at (t, x) and reused across stages and iterations; the Newton matrix
/// is refactored only when the stage diagonal changes.
pub fn rk_step_dirk(
    sys: &OdeSystem,
    tab: &ButcherTableau,
    t: f64,
    x: &[f64],
    h: f64,
    cfg: &StepperConfig,
    stats: &mut Stats,
) -> Result<(Vec<f64>, Vec<f64>)> {
    debug_assert_eq!(tab.scheme_class, SchemeClass::Dirk);
    let d = sys.dim;
    let nu = tab.stages;

    let jac = match cfg.jac_mode {
        JacMode::Analytic => sys.jac(t, x),
        JacMode::FiniteDifference => sys.jac_fd(t, x),
    };
    stats.jaceval += 1;

    let tol = cfg.newton_tol * (1.0 + norm_inf(x));
    let mut fs: Vec<Vec<f64>> = Vec::with_capacity(nu);
    let mut cached: Option<(f64, LuFactors)> = None;

    for i in 0..nu {
        let ti = t + tab.c[i] * h;
        let mut r = x.to_vec();
        for (j, fj) in fs.iter().enumerate() {
            let w = h * tab.a[i][j];
            if w != 0.0 {
                for (ri, fv) in r.iter_mut().zip(fj) {
                    *ri += w * fv;
                }
            }
        }
        let gamma = tab.a[i][i];
        if gamma == 0.0 {
            // Explicit first stage of an ESDIRK scheme.
            let mut f = vec![0.0; d];
            sys.rhs(ti, &r, &mut f);
            stats.feval += 1;
            if !f.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            fs.push(f);
            continue;
        }

        let hg = h * gamma;
        let mut g = x.to_vec();
        let mut f = vec![0.0; d];
        let mut converged = false;
        for iter in 0..=cfg.newton_max_iter {
            sys.rhs(ti, &g, &mut f);
            stats.feval += 1;
            let mut res = vec![0.0; d];
            let mut res_norm = 0.0f64;
            for j in 0..d {
                res[j] = g[j] - hg * f[j] - r[j];
                res_norm = res_norm.max(res[j].abs());
            }
            if !res_norm.is_finite() {
                return Err(Error::NonFinite { t });
            }
            if res_norm <= tol {
                converged = true;
                break;
            }
            if iter == cfg.newton_max_iter {
                break;
            }
            let lu = match &cached {
                Some((g0, lu)) if *g0 == hg => lu,
                _ => {
                    let mut m = jac.scale(-hg);
                    for j in 0..d {
                        m[(j, j)] += 1.0;
                    }
                    cached = Some((hg, lu_factor(&m)?));
                    &cached.as_ref().expect("just cached").1
                }
            };
            for v in &mut res {
                *v = -*v;
            }
            let delta = lu.solve(&res, &mut stats.lsol);
            for (gv, dv) in g.iter_mut().zip(&delta) {
                *gv += dv;
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged { t, h, iters: cfg.newton_max_iter });
        }
        fs.push(f);
    }

    let mut x_next = x.to_vec();
    let mut x_emb = x.to_vec();
    for (i, fi) in fs.iter().enumerate() {
        let (wb, we) = (h * tab.b[i], h * tab.b_hat[i]);
        for j in 0..d {
            x_next[j] += wb * fi[j];
            x_emb[j] += we * fi[j];
        }
    }
    if !x_next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    Ok((x_next, x_emb))
}

/// One step with the scheme dispatched on the tableau class.
pub fn rk_step(
    sys: &OdeSystem,
    tab: &ButcherTableau,
    t: f64,
    x: &[f64],
    h: f64,
    cfg: &StepperConfig,
    stats: &mut Stats,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match tab.scheme_class {
        SchemeClass::Explicit => rk_step_explicit(sys, tab, t, x, h, stats),
        SchemeClass::Dirk => rk_step_dirk(sys, tab, t, x, h, cfg, stats),
    }
}

/// Weighted max-norm of the embedded error estimate; the step is accepted
/// iff the result is ≤ 1.
pub fn error_norm(x_next: &[f64], x_emb: &[f64], x_prev: &[f64], atol: f64, rtol: f64) -> f64 {
    debug_assert!(x_next.len() == x_emb.len() && x_next.len() == x_prev.len());
    let mut e = 0.0f64;
    for i in 0..x_next.len() {
        let scale = atol + rtol * x_prev[i].abs().max(x_next[i].abs());
        e = e.max((x_next[i] - x_emb[i]).abs() / scale);
    }
    e
}

/// Step-growth rule applied after an accepted step of size `h_acc`.
pub fn propose_next_h(err: f64, h_acc: f64, p_hat: usize, h_max: f64) -> f64 {
    let grow = if err == 0.0 {
        2.0
    } else {
        (0.9 * (1.0 / err).powf(1.0 / (p_hat as f64 + 1.0))).min(2.0)
    };
    (h_acc * grow).min(h_max)
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x_new: Vec<f64>,
    pub h_used: f64,
    pub error: f64,
    pub tag: MethodTag,
}

/// Attempt a step of size `h_try`, shrinking by `reduce_factor` on each
/// rejection until the error norm passes, and propose the next step size.
///
/// Newton divergence and non-finite stages count as rejections under
/// adaptive control; with `fixed_step` set, control is bypassed and such
/// failures propagate as errors.
pub fn advance(
    sys: &OdeSystem,
    tab: &ButcherTableau,
    cfg: &StepperConfig,
    t: f64,
    x: &[f64],
    h_try: f64,
    stats: &mut Stats,
) -> Result<(StepOutcome, f64)> {
    let tag = match tab.scheme_class {
        SchemeClass::Explicit => MethodTag::Explicit,
        SchemeClass::Dirk => MethodTag::Implicit,
    };
    let mut h = h_try;
    loop {
        if h < 1e-12 * (1.0 + t.abs()) {
            return Err(Error::StepTooSmall { t, h });
        }
        let attempt = rk_step(sys, tab, t, x, h, cfg, stats);
        let (x_next, x_emb) = match attempt {
            Ok(pair) => pair,
            Err(
                e @ (Error::NonFinite { .. }
                | Error::NewtonDiverged { .. }
                | Error::SingularMatrix { .. }),
            ) => {
                if cfg.fixed_step.is_some() {
                    return Err(e);
                }
                stats.nsteps_rejected += 1;
                h *= cfg.reduce_factor;
                continue;
            }
            Err(e) => return Err(e),
        };

        if cfg.fixed_step.is_some() {
            stats.nsteps_accepted += 1;
            match tag {
                MethodTag::Explicit => stats.nexp += 1,
                MethodTag::Implicit => stats.nimp += 1,
            }
            let fixed = cfg.fixed_step.expect("checked above");
            return Ok((StepOutcome { x_new: x_next, h_used: h, error: 0.0, tag }, fixed));
        }

        let err = error_norm(&x_next, &x_emb, x, cfg.atol, cfg.rtol);
        if err.is_finite() && err <= 1.0 {
            stats.nsteps_accepted += 1;
            match tag {
                MethodTag::Explicit => stats.nexp += 1,
                MethodTag::Implicit => stats.nimp += 1,
            }
            let h_next = propose_next_h(err, h, tab.embedded_order, cfg.h_max);
            return Ok((StepOutcome { x_new: x_next, h_used: h, error: err, tag }, h_next));
        }
        stats.nsteps_rejected += 1;
        h *= cfg.reduce_factor;
    }
}

/// Integrate from (t0, x0) to t_end with a single method.
///
/// The last step is clamped so the final time is hit exactly. Identical
/// inputs produce bit-identical output.
pub fn integrate(
    sys: &OdeSystem,
    tab: &ButcherTableau,
    cfg: &StepperConfig,
    t0: f64,
    x0: &[f64],
    t_end: f64,
) -> Result<(Trajectory, Stats)> {
    let mut observer = |_: &Trajectory, _: &Stats| {};
    integrate_observed(sys, tab, cfg, t0, x0, t_end, &mut observer)
}

/// [`integrate`] with a per-accepted-step observer (used by the spectral
/// tracing layer; the observer sees the trajectory after each appended step).
pub fn integrate_observed(
    sys: &OdeSystem,
    tab: &ButcherTableau,
    cfg: &StepperConfig,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    observer: &mut dyn FnMut(&Trajectory, &Stats),
) -> Result<(Trajectory, Stats)> {
    cfg.validate()?;
    if !(t_end > t0) {
        return Err(Error::InvalidConfig(format!("t_end {t_end} must exceed t0 {t0}")));
    }
    if x0.len() != sys.dim {
        return Err(Error::InvalidConfig(format!(
            "state length {} != system dimension {}",
            x0.len(),
            sys.dim
        )));
    }

    let mut stats = Stats::default();
    let mut traj = Trajectory::new(t0, x0);
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut h_next = cfg.fixed_step.unwrap_or(cfg.h0).min(cfg.h_max);

    let end_tol = 1e-12 * (1.0 + t_end.abs());
    while t_end - t > end_tol {
        let h_try = h_next.min(t_end - t);
        let (outcome, proposed) = advance(sys, tab, cfg, t, &x, h_try, &mut stats)?;
        let mut t_new = t + outcome.h_used;
        if (t_end - t_new).abs() <= end_tol {
            t_new = t_end;
        }
        traj.times.push(t_new);
        traj.step_sizes.push(t_new - t);
        traj.states.push(outcome.x_new.clone());
        traj.method_used.push(outcome.tag);
        x = outcome.x_new;
        t = t_new;
        h_next = proposed;
        observer(&traj, &stats);
    }
    stats.h_mean = (t - t0) / stats.nsteps_accepted.max(1) as f64;
    Ok((traj, stats))
}
