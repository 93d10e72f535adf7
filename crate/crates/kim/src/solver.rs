//! Elliptic engines: mean-zero Poisson inversion of `L0` and the per-step
//! semilinear Monge-Ampère solves.
//!
//! The generic step equation, relative to a previous metric with density
//! `U`, is
//!
//! ```text
//! log(U + L0 eta) - log U = g + a eta - beta (1-s^2) eta' + c
//! ```
//!
//! with `a >= 0` guaranteed and `a < 0` supported best-effort through a
//! continuation ladder. `a = 0` without drift is solved exactly in two
//! phases (pointwise exponential, then one Poisson solve); everything else
//! runs a damped Newton iteration. Increments are mean-normalized after
//! solving and the additive constant is reported separately, so the
//! original equations can be reconstructed bit for bit.

use crate::error::{KimError, Result};
use crate::grid::{BackgroundGeometry, BackgroundKind, Potential};
use crate::metric::{MetricState, TwistedFieldSpec, DENSITY_FLOOR};
use std::sync::Arc;

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub residual_tol: f64,
    pub max_newton: u32,
    pub min_damping: f64,
    pub positivity_guard: f64,
    pub linear_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            residual_tol: 1e-11,
            max_newton: 50,
            min_damping: (2.0f64).powi(-30),
            positivity_guard: DENSITY_FLOOR,
            linear_tol: 1e-13,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.residual_tol > 0.0
            && self.residual_tol < 1.0
            && self.max_newton > 0
            && self.min_damping > 0.0
            && self.positivity_guard > 0.0
            && self.linear_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(KimError::BadInput("solver config fields must be positive".into()))
        }
    }
}

/// Solution of one step equation.
pub struct StepSolution {
    /// Mean-zero increment.
    pub increment: Potential,
    /// Additive constant `c` completing the equation for the mean-zero
    /// increment.
    pub normalization_constant: f64,
    pub newton_iters: u32,
    pub final_residual: f64,
    /// sup-residual after each accepted Newton step (diagnostics).
    pub residual_history: Vec<f64>,
    /// Set when the step was solved on the `a < 0` continuation branch.
    pub nonstandard_branch: bool,
}

/// Mean-zero solve of `L0 u = g - mean(g)`. Rejects data whose mean defect
/// is beyond quadrature tolerance instead of silently repairing it.
pub fn poisson_solve(bg: &Arc<BackgroundGeometry>, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != bg.node_count() {
        return Err(KimError::BadInput("rhs length does not match the grid".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(KimError::BadInput("rhs contains non-finite values".into()));
    }
    let sup = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let defect = bg.integrate(g).abs();
    // Relative tolerance plus an absolute quadrature-noise allowance so the
    // zero function and machine-level data pass.
    if defect > 1e-9 * bg.volume() * sup + 1e-13 * bg.volume() {
        return Err(KimError::BadInput(format!(
            "rhs mean defect {defect:.3e} exceeds tolerance"
        )));
    }
    Ok(bg.solve_l0(g))
}

/// Solve one step equation `log U_new - log U_prev = g + a eta + c`.
pub fn solve_step(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    cfg: &SolverConfig,
) -> Result<StepSolution> {
    solve_step_impl(prev, a, g, 0.0, cfg, None)
}

/// Drifted variant `log U_new - log U_prev = g + a eta - beta (1-s^2) eta' + c`.
pub fn solve_step_twisted(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    x: &TwistedFieldSpec,
    cfg: &SolverConfig,
) -> Result<StepSolution> {
    if !x.is_trivial() {
        let bg = prev.background();
        if !bg.is_sphere() {
            return Err(KimError::BadInput("twisted solves require the sphere".into()));
        }
        if bg.symmetry() == crate::grid::Symmetry::EvenInS {
            return Err(KimError::BadInput(
                "the dilation drift breaks the EvenInS restriction".into(),
            ));
        }
    }
    solve_step_impl(prev, a, g, x.beta, cfg, None)
}

/// Variant with an initial guess for the increment (warm start).
pub fn solve_step_warm(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    cfg: &SolverConfig,
    guess: &Potential,
) -> Result<StepSolution> {
    solve_step_impl(prev, a, g, 0.0, cfg, Some(guess.values().to_vec()))
}

/// Full-control entry used by the dynamics layer: optional drift and warm
/// start in one place.
pub(crate) fn solve_step_full(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    beta: f64,
    cfg: &SolverConfig,
    guess: Option<Vec<f64>>,
) -> Result<StepSolution> {
    solve_step_impl(prev, a, g, beta, cfg, guess)
}

fn solve_step_impl(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    beta: f64,
    cfg: &SolverConfig,
    guess: Option<Vec<f64>>,
) -> Result<StepSolution> {
    cfg.validate()?;
    let bg = prev.background();
    if g.len() != bg.node_count() {
        return Err(KimError::BadInput("step data length does not match the grid".into()));
    }
    if g.iter().any(|v| !v.is_finite()) || !a.is_finite() {
        return Err(KimError::BadInput("step data must be finite".into()));
    }
    if a == 0.0 && beta == 0.0 {
        return exact_zero_coefficient_step(prev, g, cfg);
    }
    if a >= 0.0 {
        return newton_step(prev, a, g, beta, cfg, guess.unwrap_or_default(), false);
    }
    // a < 0: continuation ladder warm-started from the a = 0 solution.
    // Uniqueness may fail in this regime; the branch returned is the one
    // continuously connected to a = 0.
    let mut eta = match guess {
        Some(v) => v,
        None => {
            if beta == 0.0 {
                let sol0 = exact_zero_coefficient_step(prev, g, cfg)?;
                sol0.increment.values().to_vec()
            } else {
                let sol0 = newton_step(prev, 0.0, g, beta, cfg, Vec::new(), false)?;
                sol0.increment.values().to_vec()
            }
        }
    };
    let rungs = (a.abs() / 0.25).ceil().max(1.0) as usize;
    let mut last = None;
    for k in 1..=rungs {
        let ak = a * k as f64 / rungs as f64;
        let sol = newton_step(prev, ak, g, beta, cfg, eta, true)?;
        eta = sol.increment.values().to_vec();
        last = Some(sol);
    }
    Ok(last.expect("at least one rung"))
}

/// `a = 0`, no drift: exact two-phase solve. The new density is
/// `U e^{g+c}` with `c` enforcing the volume, then one Poisson solve
/// recovers the increment. Newton-free.
fn exact_zero_coefficient_step(
    prev: &MetricState,
    g: &[f64],
    cfg: &SolverConfig,
) -> Result<StepSolution> {
    let bg = prev.background();
    let mut weighted = 0.0;
    for ((gv, u), w) in g.iter().zip(prev.density().iter()).zip(bg.weights().iter()) {
        weighted += gv.exp() * u * w;
    }
    let c = -(weighted / bg.volume()).ln();
    let u_new: Vec<f64> = g
        .iter()
        .zip(prev.density().iter())
        .map(|(gv, u)| u * (gv + c).exp())
        .collect();
    let min_new = u_new.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(min_new >= cfg.positivity_guard) {
        return Err(KimError::PositivityViolation(format!(
            "exact step density minimum {min_new:.3e} under the guard"
        )));
    }
    let rhs: Vec<f64> = u_new
        .iter()
        .zip(prev.density().iter())
        .map(|(a, b)| a - b)
        .collect();
    let eta = bg.solve_l0(&rhs);
    let increment = Potential::new(bg.clone(), eta)?;
    let residual = step_residual(prev, 0.0, g, 0.0, increment.values(), c)?;
    let scale = data_scale(g);
    if residual > cfg.residual_tol * scale + reconstruction_allowance(bg, scale, min_new) {
        return Err(KimError::SolverFailure(format!(
            "exact step residual {residual:.3e} above tolerance"
        )));
    }
    Ok(StepSolution {
        increment,
        normalization_constant: c,
        newton_iters: 0,
        final_residual: residual,
        residual_history: vec![residual],
        nonstandard_branch: false,
    })
}

fn data_scale(g: &[f64]) -> f64 {
    g.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// Rounding floor of a residual recomputed through a fresh Poisson/L0
/// round trip: coefficient noise amplified by the top eigenvalue, steepened
/// by the logarithm where the density is small.
fn reconstruction_allowance(bg: &BackgroundGeometry, scale: f64, min_density: f64) -> f64 {
    32.0 * f64::EPSILON * bg.max_abs_eigenvalue() * (1.0 + scale) / min_density.min(1.0)
}

/// sup-norm residual of the step equation at `(eta, c)`.
fn step_residual(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    beta: f64,
    eta: &[f64],
    c: f64,
) -> Result<f64> {
    let bg = prev.background();
    let leta = bg.apply_l0(eta);
    let drift = if beta != 0.0 {
        bg.lie_drift(eta)?
    } else {
        vec![0.0; eta.len()]
    };
    let mut sup = 0.0f64;
    for i in 0..eta.len() {
        let u_new = prev.density()[i] + leta[i];
        if u_new <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let r = (u_new / prev.density()[i]).ln() - g[i] - a * eta[i] + beta * drift[i] - c;
        sup = sup.max(r.abs());
    }
    Ok(sup)
}

#[allow(clippy::too_many_arguments)]
fn residual_vector(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    beta: f64,
    drift_mat: Option<&[f64]>,
    eta: &[f64],
    c: f64,
    leta: &[f64],
) -> Option<Vec<f64>> {
    let n = eta.len();
    let drift = if beta != 0.0 {
        let dm = drift_mat.expect("drift matrix present when beta != 0");
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &dm[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (m, e) in row.iter().zip(eta.iter()) {
                acc += m * e;
            }
            out[i] = acc;
        }
        out
    } else {
        vec![0.0; n]
    };
    let mut res = vec![0.0; n];
    for i in 0..n {
        let u_new = prev.density()[i] + leta[i];
        if u_new <= 0.0 {
            return None;
        }
        res[i] = (u_new / prev.density()[i]).ln() - g[i] - a * eta[i] + beta * drift[i] - c;
    }
    Some(res)
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton on the step equation. The linear solve is a dense bordered
/// factorization (sphere; torus fallback for `a <= 0`) or a preconditioned
/// conjugate-gradient iteration in the volume-weighted inner product with
/// the flat shifted inverse as preconditioner (torus, `a > 0`).
fn newton_step(
    prev: &MetricState,
    a: f64,
    g: &[f64],
    beta: f64,
    cfg: &SolverConfig,
    guess: Vec<f64>,
    nonstandard: bool,
) -> Result<StepSolution> {
    let bg = prev.background();
    let n = bg.node_count();
    let use_cg = matches!(
        bg.kind(),
        BackgroundKind::Torus | BackgroundKind::SyntheticNegative
    ) && a > 0.0
        && beta == 0.0;
    let drift_mat = if beta != 0.0 {
        Some(bg.dense_drift_matrix()?)
    } else {
        None
    };
    let l0mat = if use_cg { Vec::new() } else { bg.dense_l0_matrix() };

    let mut eta = if guess.is_empty() { vec![0.0; n] } else { guess };
    let mut c = 0.0f64;
    let mut leta = bg.apply_l0(&eta);
    // A warm start that left the cone is shrunk back inside the guard.
    {
        let mut shrink = 0;
        while prev
            .density()
            .iter()
            .zip(leta.iter())
            .any(|(u, l)| u + l < cfg.positivity_guard)
        {
            for v in eta.iter_mut() {
                *v *= 0.5;
            }
            for v in leta.iter_mut() {
                *v *= 0.5;
            }
            shrink += 1;
            if shrink > 60 {
                return Err(KimError::PositivityViolation(
                    "warm start cannot be shrunk into the Kähler cone".into(),
                ));
            }
        }
    }

    let scale = data_scale(g);
    let mut res = residual_vector(prev, a, g, beta, drift_mat.as_deref(), &eta, c, &leta)
        .ok_or_else(|| KimError::PositivityViolation("initial density not positive".into()))?;
    let mut res_sup = sup_norm(&res);
    let mut history = vec![res_sup];
    let mut iters = 0u32;

    while res_sup > cfg.residual_tol * scale {
        if iters >= cfg.max_newton {
            return Err(KimError::SolverFailure(format!(
                "Newton did not converge in {} iterations (residual {res_sup:.3e})",
                cfg.max_newton
            )));
        }
        let u_new: Vec<f64> = prev
            .density()
            .iter()
            .zip(leta.iter())
            .map(|(u, l)| u + l)
            .collect();
        let (delta_eta, delta_c) = if use_cg {
            (cg_solve(bg, a, &u_new, &res, cfg)?, 0.0)
        } else {
            bordered_solve(bg, &l0mat, drift_mat.as_deref(), a, beta, &u_new, &res)?
        };
        // Backtracking on the sup-residual, with the positivity guard.
        let mut t = 1.0f64;
        let mut accepted = false;
        let mut positivity_blocked = false;
        while t >= cfg.min_damping {
            let cand: Vec<f64> = eta.iter().zip(delta_eta.iter()).map(|(e, d)| e + t * d).collect();
            let cand_c = c + t * delta_c;
            let cand_leta: Vec<f64> =
                leta.iter().zip(bg.apply_l0(&delta_eta).iter()).map(|(l, d)| l + t * d).collect();
            let min_u = prev
                .density()
                .iter()
                .zip(cand_leta.iter())
                .fold(f64::INFINITY, |m, (u, l)| m.min(u + l));
            if min_u < cfg.positivity_guard {
                positivity_blocked = true;
                t *= 0.5;
                continue;
            }
            if let Some(cand_res) =
                residual_vector(prev, a, g, beta, drift_mat.as_deref(), &cand, cand_c, &cand_leta)
            {
                let cand_sup = sup_norm(&cand_res);
                if cand_sup <= (1.0 - 0.25 * t) * res_sup || cand_sup <= cfg.residual_tol * scale {
                    eta = cand;
                    c = cand_c;
                    leta = cand_leta;
                    res = cand_res;
                    res_sup = cand_sup;
                    accepted = true;
                    positivity_blocked = false;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(if positivity_blocked {
                KimError::PositivityViolation(
                    "positivity guard crossed with no recoverable damping".into(),
                )
            } else {
                KimError::SolverFailure("damping floor reached without residual decrease".into())
            });
        }
        iters += 1;
        history.push(res_sup);
    }

    // Mean-normalize the increment; fold the mean into the constant.
    let m = bg.mean(&eta);
    let centered: Vec<f64> = eta.iter().map(|v| v - m).collect();
    let increment = Potential::new(bg.clone(), centered)?;
    let c_total = c + a * m;
    let final_residual = step_residual(prev, a, g, beta, increment.values(), c_total)?;
    Ok(StepSolution {
        increment,
        normalization_constant: c_total,
        newton_iters: iters,
        final_residual,
        residual_history: history,
        nonstandard_branch: nonstandard,
    })
}

/// Solve the bordered Newton system
/// `[J, -1; w^T, 0] [d_eta; d_c] = [-res; 0]`
/// with `J = diag(1/U_new) L0 - a I + beta D`, keeping the increment
/// mean-zero. Dense partial-pivot factorization.
fn bordered_solve(
    bg: &Arc<BackgroundGeometry>,
    l0mat: &[f64],
    drift_mat: Option<&[f64]>,
    a: f64,
    beta: f64,
    u_new: &[f64],
    res: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let n = u_new.len();
    let dim = n + 1;
    let mut mat = vec![0.0; dim * dim];
    for i in 0..n {
        let inv_u = 1.0 / u_new[i];
        for j in 0..n {
            let mut v = l0mat[i * n + j] * inv_u;
            if let Some(dm) = drift_mat {
                v += beta * dm[i * n + j];
            }
            if i == j {
                v -= a;
            }
            mat[i * dim + j] = v;
        }
        mat[i * dim + n] = -1.0;
    }
    let w = bg.weights();
    for j in 0..n {
        mat[n * dim + j] = w[j];
    }
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        rhs[i] = -res[i];
    }
    lu_solve_in_place(&mut mat, &mut rhs, dim)?;
    let delta_c = rhs[n];
    rhs.truncate(n);
    Ok((rhs, delta_c))
}

/// Dense LU with partial pivoting; solves in place.
fn lu_solve_in_place(mat: &mut [f64], rhs: &mut [f64], n: usize) -> Result<()> {
    for k in 0..n {
        let mut p = k;
        let mut best = mat[k * n + k].abs();
        for r in k + 1..n {
            let v = mat[r * n + k].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best < 1e-300 {
            return Err(KimError::SolverFailure("singular Newton linearization".into()));
        }
        if p != k {
            for j in 0..n {
                mat.swap(k * n + j, p * n + j);
            }
            rhs.swap(k, p);
        }
        let piv = mat[k * n + k];
        for r in k + 1..n {
            let factor = mat[r * n + k] / piv;
            if factor == 0.0 {
                continue;
            }
            mat[r * n + k] = 0.0;
            for j in k + 1..n {
                mat[r * n + j] -= factor * mat[k * n + j];
            }
            rhs[r] -= factor * rhs[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for j in k + 1..n {
            acc -= mat[k * n + j] * rhs[j];
        }
        rhs[k] = acc / mat[k * n + k];
    }
    Ok(())
}

/// Newton correction on the torus for `a > 0`: the symmetrized system
/// `(a diag(U_new) - L0) d = U_new .* res` is positive definite in the
/// quadrature inner product; preconditioned conjugate gradients with the
/// flat inverse `(a - L0)^{-1}`.
fn cg_solve(
    bg: &Arc<BackgroundGeometry>,
    a: f64,
    u_new: &[f64],
    res: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = res.len();
    let b: Vec<f64> = u_new.iter().zip(res.iter()).map(|(u, r)| u * r).collect();
    let dot = |x: &[f64], y: &[f64]| -> f64 {
        let mut acc = 0.0;
        for ((xi, yi), w) in x.iter().zip(y.iter()).zip(bg.weights().iter()) {
            acc += xi * yi * w;
        }
        acc
    };
    let apply = |v: &[f64]| -> Vec<f64> {
        let lv = bg.apply_l0(v);
        (0..n).map(|i| a * u_new[i] * v[i] - lv[i]).collect()
    };
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let b_sup = sup_norm(&b);
    let tol = cfg.linear_tol * (1.0 + b_sup);
    let mut z = bg.shifted_flat_solve(a, &r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..2000 {
        if sup_norm(&r) <= tol {
            break;
        }
        let ap = apply(&p);
        let denom = dot(&p, &ap);
        if denom <= 0.0 {
            return Err(KimError::SolverFailure(
                "conjugate gradients lost positive definiteness".into(),
            ));
        }
        let alpha = rz / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = bg.shifted_flat_solve(a, &r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if sup_norm(&r) > tol.max(1e-10 * (1.0 + b_sup)) {
        return Err(KimError::SolverFailure(
            "conjugate gradients stalled on the Newton correction".into(),
        ));
    }
    Ok(x)
}
