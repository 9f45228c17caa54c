//! The test ODE systems used by the solver harness, with analytic Jacobians
//! where available and a finite-difference fallback.
//!
//! State ordering for the reaction-diffusion system is the u-block followed
//! by the v-block, keeping the diffusion stencil contiguous.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

type RhsFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(f64, &[f64]) -> Matrix + Send + Sync;

/// How the Jacobian of a system is obtained.
pub enum JacSource {
    Analytic(Box<JacFn>),
    FiniteDifference,
}

/// A first-order ODE system ẋ = f(t, x) with named parameters.
pub struct OdeSystem {
    pub dim: usize,
    pub name: String,
    pub params: Vec<(String, f64)>,
    rhs: Box<RhsFn>,
    jac: JacSource,
    /// Initial condition used by the experiments.
    pub default_state: Vec<f64>,
    /// Time span used by the experiments.
    pub default_tspan: (f64, f64),
}

impl OdeSystem {
    /// Evaluate the right-hand side into `out`.
    #[inline]
    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        (self.rhs)(t, x, out)
    }

    /// Evaluate the right-hand side into a fresh vector.
    pub fn rhs_vec(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.rhs(t, x, &mut out);
        out
    }

    /// Jacobian ∂f/∂x at (t, x): analytic when available, else forward differences.
    pub fn jac(&self, t: f64, x: &[f64]) -> Matrix {
        match &self.jac {
            JacSource::Analytic(f) => f(t, x),
            JacSource::FiniteDifference => fd_jacobian(self, t, x),
        }
    }

    /// Forward-difference Jacobian regardless of the analytic tag.
    pub fn jac_fd(&self, t: f64, x: &[f64]) -> Matrix {
        fd_jacobian(self, t, x)
    }

    pub fn has_analytic_jac(&self) -> bool {
        matches!(self.jac, JacSource::Analytic(_))
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Forward-difference Jacobian with per-column step √eps·max(|x_i|, 1).
pub fn fd_jacobian(sys: &OdeSystem, t: f64, x: &[f64]) -> Matrix {
    let d = sys.dim;
    let f0 = sys.rhs_vec(t, x);
    let mut jac = Matrix::zeros(d, d);
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; d];
    for j in 0..d {
        let eta = sqrt_eps * x[j].abs().max(1.0);
        xp[j] = x[j] + eta;
        sys.rhs(t, &xp, &mut fp);
        xp[j] = x[j];
        for i in 0..d {
            jac[(i, j)] = (fp[i] - f0[i]) / eta;
        }
    }
    jac
}

/// Rotating-triangular 2D linear system ẋ = A(t)x with
/// A(t) = L(t)C(t)L(t)ᵀ, C = [[λ₁, β(t)], [0, λ₂]],
/// β(t) = β₀(1 + cos(a₁t)/(1 + β₁t²)), and rotation angle ω(t) = a₂t.
///
/// Requires λ₁ > 0 > λ₂ and λ₁ + λ₂ < 0.
pub fn make_2dlin(lam1: f64, lam2: f64, beta0: f64, beta1: f64, a1: f64, a2: f64) -> Result<OdeSystem> {
    if !(lam1 > 0.0 && lam2 < 0.0 && lam1 + lam2 < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "2dlin requires lam1 > 0 > lam2 with lam1 + lam2 < 0 (got {lam1}, {lam2})"
        )));
    }
    let a_of_t = move |t: f64| -> Matrix {
        let beta = beta0 * (1.0 + t.mul_add(a1, 0.0).cos() / (1.0 + beta1 * t * t));
        let (s, c) = (a2 * t).sin_cos();
        // L C Lᵀ written out for the 2x2 rotation.
        let c11 = lam1;
        let c12 = beta;
        let c22 = lam2;
        let l = [[c, -s], [s, c]];
        let lc = [
            [l[0][0] * c11, l[0][0] * c12 + l[0][1] * c22],
            [l[1][0] * c11, l[1][0] * c12 + l[1][1] * c22],
        ];
        Matrix::from_rows(&[
            &[lc[0][0] * l[0][0] + lc[0][1] * l[0][1], lc[0][0] * l[1][0] + lc[0][1] * l[1][1]],
            &[lc[1][0] * l[0][0] + lc[1][1] * l[0][1], lc[1][0] * l[1][0] + lc[1][1] * l[1][1]],
        ])
    };
    let a_rhs = a_of_t;
    Ok(OdeSystem {
        dim: 2,
        name: "2dlin".into(),
        params: vec![
            ("lam1".into(), lam1),
            ("lam2".into(), lam2),
            ("beta0".into(), beta0),
            ("beta1".into(), beta1),
            ("a1".into(), a1),
            ("a2".into(), a2),
        ],
        rhs: Box::new(move |t, x, out| {
            let a = a_rhs(t);
            out[0] = a[(0, 0)] * x[0] + a[(0, 1)] * x[1];
            out[1] = a[(1, 0)] * x[0] + a[(1, 1)] * x[1];
        }),
        jac: JacSource::Analytic(Box::new(move |t, _x| a_of_t(t))),
        default_state: vec![1.0, -1.0],
        default_tspan: (0.0, 100.0),
    })
}

/// The 2dlin configuration used throughout the experiments:
/// λ₁ = 0.1, λ₂ = −0.2, β₀ = 1000, β₁ = 0.001, a₁ = a₂ = 2π.
pub fn make_2dlin_experiment() -> OdeSystem {
    make_2dlin(0.1, -0.2, 1000.0, 0.001, std::f64::consts::TAU, std::f64::consts::TAU).unwrap()
}

/// Scalar test-equation families ẋ = λ(t)x.
#[derive(Debug, Clone, Copy)]
pub enum ScalarKind {
    /// λ(t) = D·cos(2π(t − t₀)/h₀) − α with D > α > 0, h₀ > 0.
    CosineCounterexample { d: f64, alpha: f64, h0: f64, t0: f64 },
    /// λ(t) = −1 + sin t.
    SmoothDecay,
    /// λ(t) ≡ λ.
    Constant { lam: f64 },
}

pub fn make_scalar_test(kind: ScalarKind) -> Result<OdeSystem> {
    let (lambda, name, params): (Box<dyn Fn(f64) -> f64 + Send + Sync>, &str, Vec<(String, f64)>) =
        match kind {
            ScalarKind::CosineCounterexample { d, alpha, h0, t0 } => {
                if !(d > alpha && alpha > 0.0 && h0 > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "cosine counterexample requires D > alpha > 0 and h0 > 0 (got D={d}, alpha={alpha}, h0={h0})"
                    )));
                }
                (
                    Box::new(move |t: f64| d * (std::f64::consts::TAU * (t - t0) / h0).cos() - alpha),
                    "scalar-cosine",
                    vec![
                        ("D".into(), d),
                        ("alpha".into(), alpha),
                        ("h0".into(), h0),
                        ("t0".into(), t0),
                    ],
                )
            }
            ScalarKind::SmoothDecay => {
                (Box::new(|t: f64| -1.0 + t.sin()), "scalar-decay", vec![])
            }
            ScalarKind::Constant { lam } => (
                Box::new(move |_t: f64| lam),
                "scalar-const",
                vec![("lam".into(), lam)],
            ),
        };
    let lam_rhs: std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync> = lambda.into();
    let lam_jac = lam_rhs.clone();
    Ok(OdeSystem {
        dim: 1,
        name: name.into(),
        params,
        rhs: Box::new(move |t, x, out| out[0] = lam_rhs(t) * x[0]),
        jac: JacSource::Analytic(Box::new(move |t, _x| Matrix::from_rows(&[&[lam_jac(t)]]))),
        default_state: vec![1.0],
        default_tspan: (0.0, 10.0),
    })
}

/// Degree-6 truncation of exp(z), used in place of the exponential in the
/// compost-bomb right-hand side.
pub fn exp_poly6(z: f64) -> f64 {
    // Horner form of sum_{k=0}^{6} z^k / k!.
    let c6 = 1.0 / 720.0;
    let c5 = 1.0 / 120.0;
    let c4 = 1.0 / 24.0;
    let c3 = 1.0 / 6.0;
    let c2 = 0.5;
    ((((((c6 * z + c5) * z + c4) * z + c3) * z + c2) * z + 1.0) * z) + 1.0
}

/// Derivative of [`exp_poly6`], the degree-5 truncation of exp(z).
pub fn exp_poly5(z: f64) -> f64 {
    let c5 = 1.0 / 120.0;
    let c4 = 1.0 / 24.0;
    let c3 = 1.0 / 6.0;
    let c2 = 0.5;
    (((((c5 * z + c4) * z + c3) * z + c2) * z + 1.0) * z) + 1.0
}

/// Peatland carbon/temperature model with ramped atmospheric forcing:
///
/// Ṫ = C·r·P₆(αT) − (λ/A)(T − T_a),  Ċ = Π − C·r·P₆(αT),  Ṫ_a = ν
///
/// where P₆ is the degree-6 truncation of the exponential. The Jacobian
/// differentiates the truncated model, not the true exponential.
pub fn make_compost_bomb(nu: f64) -> Result<OdeSystem> {
    if nu <= 0.0 {
        return Err(Error::InvalidConfig(format!("compost bomb requires nu > 0 (got {nu})")));
    }
    let r = 0.01;
    let alpha = 2.5f64.ln() / 10.0;
    let lam = 5.049e6;
    let area = 3.9e7;
    let pi = 1.055;
    let cool = lam / area;
    Ok(OdeSystem {
        dim: 3,
        name: "compost".into(),
        params: vec![
            ("r".into(), r),
            ("alpha".into(), alpha),
            ("lambda".into(), lam),
            ("A".into(), area),
            ("Pi".into(), pi),
            ("nu".into(), nu),
        ],
        rhs: Box::new(move |_t, x, out| {
            let (temp, carbon, tatm) = (x[0], x[1], x[2]);
            let respiration = carbon * r * exp_poly6(alpha * temp);
            out[0] = respiration - cool * (temp - tatm);
            out[1] = pi - respiration;
            out[2] = nu;
        }),
        jac: JacSource::Analytic(Box::new(move |_t, x| {
            let (temp, carbon) = (x[0], x[1]);
            let p6 = exp_poly6(alpha * temp);
            let dp = alpha * exp_poly5(alpha * temp);
            Matrix::from_rows(&[
                &[carbon * r * dp - cool, r * p6, cool],
                &[-carbon * r * dp, -r * p6, 0.0],
                &[0.0, 0.0, 0.0],
            ])
        })),
        default_state: vec![8.15, 50.0, 0.0],
        default_tspan: (0.0, 80.0),
    })
}

/// Forced Van der Pol oscillator in first-order form:
/// ẋ₁ = μ(1 − x₁²)x₂ + x₁ − A·sin(ωt), ẋ₂ = x₁.
pub fn make_vdp(mu: f64, amp: f64, omega: f64) -> Result<OdeSystem> {
    if mu <= 0.0 {
        return Err(Error::InvalidConfig(format!("vdp requires mu > 0 (got {mu})")));
    }
    Ok(OdeSystem {
        dim: 2,
        name: "vdp".into(),
        params: vec![("mu".into(), mu), ("A".into(), amp), ("omega".into(), omega)],
        rhs: Box::new(move |t, x, out| {
            out[0] = mu * (1.0 - x[0] * x[0]) * x[1] + x[0] - amp * (omega * t).sin();
            out[1] = x[0];
        }),
        jac: JacSource::Analytic(Box::new(move |_t, x| {
            Matrix::from_rows(&[
                &[-2.0 * mu * x[0] * x[1] + 1.0, mu * (1.0 - x[0] * x[0])],
                &[1.0, 0.0],
            ])
        })),
        default_state: vec![0.0, 2.0],
        default_tspan: (0.0, 100.0),
    })
}

/// Finite-difference reaction-diffusion system of dimension 2J+2 with
/// Neumann-type one-sided boundary stencils.
///
/// State ordering is (u₀..u_J, v₀..v_J):
/// u̇_j = φ(u_j) − v_j + α·D(u_j), v̇_j = ε(u_j − δv_j), φ(r) = −2r³ + 6r,
/// with D the second-difference stencil on the grid x_j = j/J.
pub fn make_fhn(j_cells: usize, eps: f64, alpha: f64, delta: f64) -> Result<OdeSystem> {
    if j_cells < 2 {
        return Err(Error::InvalidConfig(format!("fhn requires J >= 2 (got {j_cells})")));
    }
    let n = j_cells + 1; // u_0..u_J
    let dim = 2 * n;
    let dx2 = (j_cells as f64) * (j_cells as f64); // 1/(Δx)² with Δx = 1/J
    let phi = |r: f64| -2.0 * r * r * r + 6.0 * r;
    let dphi = |r: f64| -6.0 * r * r + 6.0;
    Ok(OdeSystem {
        dim,
        name: "fhn".into(),
        params: vec![
            ("J".into(), j_cells as f64),
            ("eps".into(), eps),
            ("alpha".into(), alpha),
            ("delta".into(), delta),
        ],
        rhs: Box::new(move |_t, x, out| {
            let (u, v) = x.split_at(n);
            for j in 0..n {
                let diff = if j == 0 {
                    (u[1] - u[0]) * dx2
                } else if j == n - 1 {
                    (u[n - 2] - u[n - 1]) * dx2
                } else {
                    (u[j + 1] + u[j - 1] - 2.0 * u[j]) * dx2
                };
                out[j] = phi(u[j]) - v[j] + alpha * diff;
                out[n + j] = eps * (u[j] - delta * v[j]);
            }
        }),
        jac: JacSource::Analytic(Box::new(move |_t, x| {
            let u = &x[..n];
            let mut m = Matrix::zeros(dim, dim);
            for j in 0..n {
                let (own, lo, hi) = if j == 0 {
                    (-1.0, 0.0, 1.0)
                } else if j == n - 1 {
                    (-1.0, 1.0, 0.0)
                } else {
                    (-2.0, 1.0, 1.0)
                };
                m[(j, j)] = dphi(u[j]) + alpha * own * dx2;
                if j > 0 {
                    m[(j, j - 1)] = alpha * lo * dx2;
                }
                if j + 1 < n {
                    m[(j, j + 1)] = alpha * hi * dx2;
                }
                m[(j, n + j)] = -1.0;
                m[(n + j, j)] = eps;
                m[(n + j, n + j)] = -eps * delta;
            }
            m
        })),
        default_state: fhn_initial_condition(j_cells),
        default_tspan: (0.0, 200.0),
    })
}

/// Initial condition u_j = sin(πx_j/2), v_j = cos(πx_j/2) on x_j = j/J.
pub fn fhn_initial_condition(j_cells: usize) -> Vec<f64> {
    let n = j_cells + 1;
    let mut x0 = vec![0.0; 2 * n];
    for j in 0..n {
        let arg = 0.5 * std::f64::consts::PI * (j as f64) / (j_cells as f64);
        x0[j] = arg.sin();
        x0[n + j] = arg.cos();
    }
    x0
}

/// Build a problem from a string id and key=value parameter overrides.
///
/// Ids: `2dlin`, `scalar`, `compost`, `vdp`, `fhn`.
pub fn by_id(id: &str, overrides: &[(String, f64)]) -> Result<OdeSystem> {
    let get = |key: &str, default: f64| -> f64 {
        overrides
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .unwrap_or(default)
    };
    let known = |keys: &[&str]| -> Result<()> {
        for (k, _) in overrides {
            if !keys.contains(&k.as_str()) {
                return Err(Error::InvalidConfig(format!("unknown parameter `{k}` for problem `{id}`")));
            }
        }
        Ok(())
    };
    match id {
        "2dlin" => {
            known(&["lam1", "lam2", "beta0", "beta1", "a1", "a2"])?;
            make_2dlin(
                get("lam1", 0.1),
                get("lam2", -0.2),
                get("beta0", 1000.0),
                get("beta1", 0.001),
                get("a1", std::f64::consts::TAU),
                get("a2", std::f64::consts::TAU),
            )
        }
        "scalar" => {
            known(&["lam", "kind", "D", "alpha", "h0", "t0"])?;
            // kind: 0 = constant (default), 1 = cosine counterexample, 2 = smooth decay
            let kind = get("kind", 0.0);
            if kind == 1.0 {
                make_scalar_test(ScalarKind::CosineCounterexample {
                    d: get("D", 0.6),
                    alpha: get("alpha", 0.1),
                    h0: get("h0", 1.0),
                    t0: get("t0", 0.0),
                })
            } else if kind == 2.0 {
                make_scalar_test(ScalarKind::SmoothDecay)
            } else {
                make_scalar_test(ScalarKind::Constant { lam: get("lam", -1.0) })
            }
        }
        "compost" => {
            known(&["nu"])?;
            make_compost_bomb(get("nu", 0.09))
        }
        "vdp" => {
            known(&["mu", "A", "omega"])?;
            make_vdp(get("mu", 100.0), get("A", 1.0), get("omega", 1.0))
        }
        "fhn" => {
            known(&["J", "eps", "alpha", "delta"])?;
            make_fhn(get("J", 14.0) as usize, get("eps", 0.1), get("alpha", 0.3), get("delta", 0.01))
        }
        _ => Err(Error::UnknownMethod(format!("unknown problem id: {id}"))),
    }
}
