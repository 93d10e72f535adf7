//! Discrete dynamical systems on the space of metrics.
//!
//! The central object is the time `tau` iteration: step `k` solves
//!
//! ```text
//! log U_k - log U_{k-1} = f_{k-1} + (1/tau - mu) eta_k + c
//! ```
//!
//! (the backward Euler step of the potential flow `d phi/dt = -f`). The
//! twisted variant subtracts the twisting-field potential from the data and
//! adds the drift term. Also provided: the explicit Euler flow integrator,
//! the classical continuity paths reached by freezing `k = 1` and varying
//! the step, the forward (positivity-limited) Ricci orbit, and the
//! inverse-Ricci orbit.

use crate::energy::{functional_report, k_energy, twisted_k_energy};
use crate::error::{KimError, Result};
use crate::grid::{BackgroundGeometry, Potential};
use crate::metric::{ricci_forward, ricci_inverse_fano, MetricState, RicciIndex, TwistedFieldSpec};
use crate::solver::{solve_step_full, SolverConfig, StepSolution};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct IterationConfig {
    pub tau: f64,
    pub steps: usize,
    pub solver: SolverConfig,
    pub twist: Option<TwistedFieldSpec>,
    /// Must be set explicitly to run `tau > 1/mu` on a positive class,
    /// where the step equation follows the continuation branch.
    pub nonstandard_branch: bool,
    /// Termination threshold on the increment sup-norm.
    pub increment_tol: f64,
}

impl IterationConfig {
    pub fn new(tau: f64, steps: usize) -> IterationConfig {
        IterationConfig {
            tau,
            steps,
            solver: SolverConfig::default(),
            twist: None,
            nonstandard_branch: false,
            increment_tol: 1e-10,
        }
    }

    pub fn with_twist(mut self, x: TwistedFieldSpec) -> IterationConfig {
        self.twist = Some(x);
        self
    }
}

/// Names the per-step Monge-Ampère equation class solved for a given
/// zeroth-order coefficient (reporting only).
pub fn equation_class(a: f64) -> &'static str {
    if a > 0.0 {
        "negative-type"
    } else if a == 0.0 {
        "calabi-yau-type"
    } else {
        "positive-type"
    }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub k: usize,
    pub sup_eta: f64,
    pub inf_eta: f64,
    pub sup_psi: f64,
    pub inf_psi: f64,
    pub e0: f64,
    pub e1: Option<f64>,
    pub f_mu: f64,
    pub i: f64,
    pub j: f64,
    pub min_ricci_ratio: f64,
    pub newton_iters: u32,
    pub residual: f64,
    /// Twisted energy against the start metric (twisted runs only).
    pub e0_twisted: Option<f64>,
    /// Additive constant of the solved step equation; lets the
    /// unnormalized increments of the original equations be reconstructed.
    pub normalization_constant: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Converged,
    MaxSteps,
    SolverFailure,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::MaxSteps => "max-steps",
            Verdict::SolverFailure => "solver-failure",
        }
    }
}

#[derive(Clone)]
pub struct IterationTrace {
    pub tau: f64,
    pub records: Vec<StepRecord>,
    pub start: MetricState,
    pub final_state: MetricState,
    pub verdict: Verdict,
    pub failure: Option<String>,
    pub nonstandard_branch: bool,
    pub twisted: bool,
}

impl IterationTrace {
    /// Geometric rate estimate from the tail of the increment norms.
    pub fn rate_estimate(&self) -> Option<f64> {
        let sups: Vec<f64> = self.records.iter().map(|r| r.sup_eta.max(-r.inf_eta)).collect();
        let m = sups.len();
        if m < 4 {
            return None;
        }
        let a = sups[m - 3];
        let b = sups[m - 1];
        if a <= 0.0 || b <= 0.0 {
            return None;
        }
        Some((b / a).sqrt())
    }
}

fn validate_time_step(bg: &BackgroundGeometry, cfg: &IterationConfig) -> Result<()> {
    if !(cfg.tau > 0.0) || !cfg.tau.is_finite() {
        return Err(KimError::BadInput(format!("tau {} must be positive", cfg.tau)));
    }
    let mu = bg.mu();
    if mu > 0.0 && cfg.tau * mu > 1.0 + 1e-12 && !cfg.nonstandard_branch {
        return Err(KimError::BadInput(format!(
            "tau {} exceeds 1/mu = {}; set the nonstandard-branch flag to proceed",
            cfg.tau,
            1.0 / mu
        )));
    }
    Ok(())
}

/// Run the time `tau` iteration (twisted when the config carries a field).
pub fn ricci_iteration_run(start: &MetricState, cfg: &IterationConfig) -> Result<IterationTrace> {
    let bg = start.background().clone();
    validate_time_step(&bg, cfg)?;
    let twist = cfg.twist.unwrap_or(TwistedFieldSpec { beta: 0.0 });
    if !twist.is_trivial() && !bg.is_sphere() {
        return Err(KimError::BadInput("twisted iteration requires the sphere".into()));
    }
    let a = 1.0 / cfg.tau - bg.mu();
    let mut records = Vec::new();
    let mut state = start.clone();
    let mut verdict = Verdict::MaxSteps;
    let mut failure = None;

    for k in 1..=cfg.steps {
        let g: Vec<f64> = if twist.is_trivial() {
            state.ricci_data().ricci_potential.clone()
        } else {
            let psi = crate::metric::twisted_field_potential(&state, &twist)?;
            state
                .ricci_data()
                .ricci_potential
                .iter()
                .zip(psi.iter())
                .map(|(f, p)| f - p)
                .collect()
        };
        let sol = match solve_step_full(&state, a, &g, twist.beta, &cfg.solver, None) {
            Ok(s) => s,
            Err(e @ (KimError::SolverFailure(_) | KimError::PositivityViolation(_))) => {
                verdict = Verdict::SolverFailure;
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let next = state.apply_increment(&sol.increment)?;
        records.push(make_record(k, start, &next, &sol, cfg.twist.as_ref())?);
        let sup_inc = sol.increment.sup_abs();
        state = next;
        if sup_inc <= cfg.increment_tol {
            verdict = Verdict::Converged;
            break;
        }
    }

    Ok(IterationTrace {
        tau: cfg.tau,
        records,
        start: start.clone(),
        final_state: state,
        verdict,
        failure,
        nonstandard_branch: cfg.nonstandard_branch,
        twisted: !twist.is_trivial(),
    })
}

fn make_record(
    k: usize,
    start: &MetricState,
    next: &MetricState,
    sol: &StepSolution,
    twist: Option<&TwistedFieldSpec>,
) -> Result<StepRecord> {
    let report = functional_report(start, next, None)?;
    let e0_twisted = match twist {
        Some(x) if !x.is_trivial() => Some(twisted_k_energy(start, next, x)?),
        _ => None,
    };
    let psi = next.potential().plus_scaled(start.potential(), -1.0)?;
    Ok(StepRecord {
        k,
        sup_eta: sol.increment.sup(),
        inf_eta: sol.increment.inf(),
        sup_psi: psi.sup(),
        inf_psi: psi.inf(),
        e0: report.e0,
        e1: report.e1,
        f_mu: report.f_mu,
        i: report.i,
        j: report.j,
        min_ricci_ratio: next.min_ricci_ratio(),
        newton_iters: sol.newton_iters,
        residual: sol.final_residual,
        e0_twisted,
        normalization_constant: sol.normalization_constant,
    })
}

/// Twisted variant of the run; the config must carry the twisting field.
/// Each step solves the drifted equation and the trace records the
/// twisted energy alongside the plain functionals.
pub fn twisted_iteration_run(
    start: &MetricState,
    cfg: &IterationConfig,
) -> Result<IterationTrace> {
    if cfg.twist.is_none() {
        return Err(KimError::BadInput(
            "twisted iteration needs a twisting field in the config".into(),
        ));
    }
    ricci_iteration_run(start, cfg)
}

#[derive(Clone, Copy, Debug)]
pub struct FlowConfig {
    pub step: f64,
    pub horizon: f64,
    /// Record every `record_stride`-th step (the last step always).
    pub record_stride: usize,
    /// Skip the energy columns for long runs.
    pub record_energies: bool,
}

impl FlowConfig {
    pub fn new(step: f64, horizon: f64) -> FlowConfig {
        FlowConfig {
            step,
            horizon,
            record_stride: 1,
            record_energies: true,
        }
    }
}

/// Explicit Euler integration of the potential flow `d phi/dt = -f`,
/// mean-renormalized each step, positivity-checked each step.
pub fn flow_run(start: &MetricState, cfg: &FlowConfig) -> Result<IterationTrace> {
    if !(cfg.step > 0.0) || !(cfg.horizon > 0.0) {
        return Err(KimError::BadInput("flow step and horizon must be positive".into()));
    }
    let bg = start.background().clone();
    let steps = (cfg.horizon / cfg.step).round().max(1.0) as usize;
    let stride = cfg.record_stride.max(1);
    let mut state = start.clone();
    let mut records = Vec::new();
    for k in 1..=steps {
        let f = state.ricci_data().ricci_potential.clone();
        let inc_vals: Vec<f64> = f.iter().map(|v| -cfg.step * v).collect();
        let inc = Potential::new(bg.clone(), inc_vals)?;
        let next = state.apply_increment(&inc).map_err(|e| match e {
            KimError::PositivityViolation(msg) => KimError::PositivityViolation(format!(
                "flow left the Kähler cone at t = {:.6} ({msg}); reduce the step size",
                k as f64 * cfg.step
            )),
            other => other,
        })?;
        if k % stride == 0 || k == steps {
            let (report, e1) = if cfg.record_energies {
                let r = functional_report(start, &next, None)?;
                (Some(r), None::<f64>)
            } else {
                (None, None)
            };
            let psi = next.potential().plus_scaled(start.potential(), -1.0)?;
            records.push(StepRecord {
                k,
                sup_eta: inc.sup(),
                inf_eta: inc.inf(),
                sup_psi: psi.sup(),
                inf_psi: psi.inf(),
                e0: report.as_ref().map(|r| r.e0).unwrap_or(f64::NAN),
                e1: report.as_ref().and_then(|r| r.e1).or(e1),
                f_mu: report.as_ref().map(|r| r.f_mu).unwrap_or(f64::NAN),
                i: report.as_ref().map(|r| r.i).unwrap_or(f64::NAN),
                j: report.as_ref().map(|r| r.j).unwrap_or(f64::NAN),
                min_ricci_ratio: if cfg.record_energies {
                    next.min_ricci_ratio()
                } else {
                    f64::NAN
                },
                newton_iters: 0,
                residual: 0.0,
                e0_twisted: None,
                normalization_constant: 0.0,
            });
        }
        state = next;
    }
    let settled = state
        .ricci_data()
        .ricci_potential
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        <= 1e-10;
    Ok(IterationTrace {
        tau: cfg.step,
        records,
        start: start.clone(),
        final_state: state,
        verdict: if settled { Verdict::Converged } else { Verdict::MaxSteps },
        failure: None,
        nonstandard_branch: false,
        twisted: false,
    })
}

/// Richardson refinement study: integrate at `h`, `h/2`, `h/4` and
/// estimate the observed order from the endpoint differences.
pub fn flow_richardson(start: &MetricState, cfg: &FlowConfig) -> Result<(IterationTrace, f64)> {
    let run = |h: f64| -> Result<MetricState> {
        let mut c = *cfg;
        c.step = h;
        c.record_stride = usize::MAX;
        c.record_energies = false;
        Ok(flow_run(start, &c)?.final_state)
    };
    let coarse = flow_run(start, cfg)?;
    let end_half = run(cfg.step / 2.0)?;
    let end_quarter = run(cfg.step / 4.0)?;
    let d1 = coarse.final_state.potential().sup_distance(end_half.potential());
    let d2 = end_half.potential().sup_distance(end_quarter.potential());
    let order = if d1 > 0.0 && d2 > 0.0 {
        (d1 / d2).log2()
    } else {
        f64::NAN
    };
    Ok((coarse, order))
}

/// The classical continuity paths, each reached as a single step equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathFamily {
    /// Backward Euler path: `log U = f0 + (1/tau - mu) phi + c`, `tau > 0`.
    RicciBackward,
    /// `log U = f0 - s phi + c`, `s in [0,1)`; anticanonical sphere.
    Aubin,
    /// `log U = t f0 + c`, `t in [0,1]`; one exact solve.
    Calabi,
    /// `log U = t (f0 - mu phi) + c`, `t in [0,1)`.
    DemaillyKollar,
    /// `log U = f0 - psi^X - s phi + c`, `s in [0,1)`; needs a twist.
    TianZhu,
}

impl PathFamily {
    pub fn parse(s: &str) -> Option<PathFamily> {
        match s {
            "ricci-backward" => Some(PathFamily::RicciBackward),
            "aubin" => Some(PathFamily::Aubin),
            "calabi" => Some(PathFamily::Calabi),
            "demailly-kollar" => Some(PathFamily::DemaillyKollar),
            "tian-zhu" => Some(PathFamily::TianZhu),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PathFamily::RicciBackward => "ricci-backward",
            PathFamily::Aubin => "aubin",
            PathFamily::Calabi => "calabi",
            PathFamily::DemaillyKollar => "demailly-kollar",
            PathFamily::TianZhu => "tian-zhu",
        }
    }
}

/// Solve one continuity-path equation from the background metric.
pub fn continuity_path_solve(
    bg: &Arc<BackgroundGeometry>,
    family: PathFamily,
    parameter: f64,
    twist: Option<&TwistedFieldSpec>,
    warm_start: Option<&MetricState>,
    solver: &SolverConfig,
) -> Result<(MetricState, StepSolution)> {
    if !parameter.is_finite() {
        return Err(KimError::BadInput("path parameter must be finite".into()));
    }
    let f0 = bg.base_ricci_potential();
    let mu = bg.mu();
    let (a, g, beta): (f64, Vec<f64>, f64) = match family {
        PathFamily::RicciBackward => {
            if !(parameter > 0.0) {
                return Err(KimError::BadInput("the backward path needs tau > 0".into()));
            }
            (1.0 / parameter - mu, f0.to_vec(), 0.0)
        }
        PathFamily::Aubin => {
            if !bg.is_anticanonical_sphere() {
                return Err(KimError::BadInput(
                    "the Aubin path is defined on the anticanonical sphere".into(),
                ));
            }
            if !(0.0..1.0).contains(&parameter) {
                return Err(KimError::BadInput("the Aubin path needs s in [0,1)".into()));
            }
            (-parameter, f0.to_vec(), 0.0)
        }
        PathFamily::Calabi => {
            if !(0.0..=1.0).contains(&parameter) {
                return Err(KimError::BadInput("the Calabi path needs t in [0,1]".into()));
            }
            (0.0, f0.iter().map(|v| parameter * v).collect(), 0.0)
        }
        PathFamily::DemaillyKollar => {
            if !(0.0..1.0).contains(&parameter) {
                return Err(KimError::BadInput(
                    "the Demailly-Kollar path needs t in [0,1)".into(),
                ));
            }
            (
                -parameter * mu,
                f0.iter().map(|v| parameter * v).collect(),
                0.0,
            )
        }
        PathFamily::TianZhu => {
            let x = twist.ok_or_else(|| {
                KimError::BadInput("the Tian-Zhu path needs a twisting field".into())
            })?;
            if !bg.is_anticanonical_sphere() {
                return Err(KimError::BadInput(
                    "the Tian-Zhu path is defined on the anticanonical sphere".into(),
                ));
            }
            if !(0.0..1.0).contains(&parameter) {
                return Err(KimError::BadInput("the Tian-Zhu path needs s in [0,1)".into()));
            }
            let nodes = bg.sphere_nodes().expect("sphere nodes");
            let g = f0
                .iter()
                .zip(nodes.iter())
                .map(|(f, &s)| f - x.beta * bg.volume() * s)
                .collect();
            (-parameter, g, x.beta)
        }
    };
    let base = MetricState::base(bg.clone());
    let guess = warm_start.map(|m| m.potential().values().to_vec());
    let sol = solve_step_full(&base, a, &g, beta, solver, guess)?;
    let state = base.apply_increment(&sol.increment)?;
    Ok((state, sol))
}

/// Distance from a metric to the Möbius dilation orbit of the round
/// metric: a line search over the dilation parameter minimizing the sup
/// distance between potentials. On the sphere without the even
/// restriction the dynamics converge to this orbit rather than to the
/// round metric itself, so convergence verdicts quote this distance.
pub fn mobius_orbit_distance(m: &MetricState) -> Result<f64> {
    let bg = m.background();
    if !bg.is_anticanonical_sphere() {
        return Err(KimError::BadInput(
            "the Möbius orbit lives on the anticanonical sphere".into(),
        ));
    }
    if bg.symmetry() == crate::grid::Symmetry::EvenInS {
        // The even restriction quotients the dilations away; the orbit is
        // the round metric alone.
        return Ok(m.potential().sup_abs());
    }
    let dist = |log_lambda: f64| -> Result<f64> {
        let p = crate::grid::dilation_pullback_potential(bg, log_lambda.exp())?;
        Ok(m.potential().sup_distance(&p))
    };
    let mut best_x = 0.0;
    let mut best = dist(0.0)?;
    let mut x = -3.0;
    while x <= 3.0 {
        let d = dist(x)?;
        if d < best {
            best = d;
            best_x = x;
        }
        x += 0.25;
    }
    let (mut lo, mut hi) = (best_x - 0.25, best_x + 0.25);
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = dist(x1)?;
    let mut f2 = dist(x2)?;
    for _ in 0..60 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = dist(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = dist(x2)?;
        }
    }
    Ok(best.min(f1).min(f2))
}

/// Forward Ricci orbit with energies; stops at positivity loss or `cap`.
pub struct NadelRun {
    pub orbit: Vec<MetricState>,
    pub index: RicciIndex,
    /// Mabuchi energy of each orbit state against the start.
    pub e0_from_start: Vec<f64>,
}

pub fn nadel_forward_run(start: &MetricState, cap: u32) -> Result<NadelRun> {
    let mut orbit = vec![start.clone()];
    let mut e0 = vec![0.0];
    let index = loop {
        if orbit.len() as u32 >= cap {
            break RicciIndex::AtLeast(cap);
        }
        let fwd = ricci_forward(orbit.last().expect("nonempty"))?;
        if !fwd.kahler {
            break RicciIndex::Exactly(orbit.len() as u32);
        }
        let next = MetricState::new(fwd.potential)?;
        e0.push(k_energy(start, &next)?);
        orbit.push(next);
    };
    Ok(NadelRun {
        orbit,
        index,
        e0_from_start: e0,
    })
}

/// Orbit of the inverse Ricci operator: `length` successive inverses of
/// the (possibly non-Kähler) start representative.
pub fn inverse_ricci_orbit(start: &Potential, length: usize) -> Result<Vec<MetricState>> {
    let bg = start.background().clone();
    let mut orbit = Vec::with_capacity(length);
    let mut prev = start.clone();
    for _ in 0..length {
        let next = ricci_inverse_fano(&bg, &prev)?;
        prev = next.potential().clone();
        orbit.push(next);
    }
    Ok(orbit)
}
