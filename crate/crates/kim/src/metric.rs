//! Metric states and the Ricci operators.
//!
//! A [`MetricState`] is a potential whose density `U = 1 + L0 phi` is
//! strictly positive. All curvature data is carried as ratios against the
//! fixed background form: the Ricci ratio `r` satisfies `Ric = r * omega0`,
//! with `r = mu + L0 f0 - L0 log U`, and the scalar curvature is `r / U`.
//!
//! The Ricci potential `f` solves `i ddbar f = Ric - mu omega` and is pinned
//! by the normalization `(1/V) int e^f U dm0 = 1`; the same normalization is
//! used for every sign of `mu`.

use crate::error::{KimError, Result};
use crate::grid::{BackgroundGeometry, Potential};
use crate::solver::{solve_step_twisted, SolverConfig};
use std::fmt;
use std::sync::{Arc, OnceLock};

/// Positivity floor for Kähler densities. Inputs below it are rejected,
/// never clamped, so monotonicity tests see unbiased data.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Curvature data of a metric state, all relative to the background form.
#[derive(Clone, Debug)]
pub struct RicciData {
    /// `r` with `Ric omega_phi = r * omega0`.
    pub ricci_ratio_vs_base: Vec<f64>,
    /// Scalar curvature `r / U`.
    pub scalar_ratio: Vec<f64>,
    /// Normalized Ricci potential `f`.
    pub ricci_potential: Vec<f64>,
    pub min_ricci_ratio: f64,
}

/// A validated Kähler metric: potential plus cached density and Ricci data.
pub struct MetricState {
    potential: Potential,
    density: Vec<f64>,
    min_density: f64,
    ricci: OnceLock<RicciData>,
}

impl Clone for MetricState {
    fn clone(&self) -> Self {
        let ricci = OnceLock::new();
        if let Some(r) = self.ricci.get() {
            let _ = ricci.set(r.clone());
        }
        MetricState {
            potential: self.potential.clone(),
            density: self.density.clone(),
            min_density: self.min_density,
            ricci,
        }
    }
}

impl MetricState {
    /// Validate a potential as a Kähler metric (`make_metric`).
    pub fn new(potential: Potential) -> Result<MetricState> {
        let bg = potential.background();
        let mut density = bg.apply_l0(potential.values());
        for d in density.iter_mut() {
            *d += 1.0;
        }
        let min_density = density.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if !(min_density > DENSITY_FLOOR) {
            return Err(KimError::PositivityViolation(format!(
                "density minimum {min_density:.3e} at or below floor {DENSITY_FLOOR:.0e}"
            )));
        }
        let vol_defect = (bg.integrate(&density) - bg.volume()).abs();
        if vol_defect > 1e-10 * bg.volume() {
            return Err(KimError::BadInput(format!(
                "density integrates to a volume defect {vol_defect:.3e}"
            )));
        }
        Ok(MetricState {
            potential,
            density,
            min_density,
            ricci: OnceLock::new(),
        })
    }

    /// The background metric itself (zero potential).
    pub fn base(background: Arc<BackgroundGeometry>) -> MetricState {
        let n = background.node_count();
        MetricState {
            potential: Potential::zero(background),
            density: vec![1.0; n],
            min_density: 1.0,
            ricci: OnceLock::new(),
        }
    }

    pub fn background(&self) -> &Arc<BackgroundGeometry> {
        self.potential.background()
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn min_density(&self) -> f64 {
        self.min_density
    }

    pub fn sup_density_deviation(&self) -> f64 {
        self.density.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()))
    }

    /// State with potential `phi + inc`.
    pub fn apply_increment(&self, inc: &Potential) -> Result<MetricState> {
        MetricState::new(self.potential.plus_scaled(inc, 1.0)?)
    }

    /// Curvature data; computed once and cached.
    pub fn ricci_data(&self) -> &RicciData {
        self.ricci.get_or_init(|| compute_ricci_data(self))
    }

    pub fn min_ricci_ratio(&self) -> f64 {
        self.ricci_data().min_ricci_ratio
    }
}

fn compute_ricci_data(m: &MetricState) -> RicciData {
    let bg = m.background();
    let mu = bg.mu();
    let f0 = bg.base_ricci_potential();
    let log_u: Vec<f64> = m.density.iter().map(|u| u.ln()).collect();
    let h: Vec<f64> = f0.iter().zip(log_u.iter()).map(|(a, b)| a - b).collect();
    let lh = bg.apply_l0(&h);
    let ricci_ratio: Vec<f64> = lh.iter().map(|v| mu + v).collect();
    let scalar: Vec<f64> = ricci_ratio
        .iter()
        .zip(m.density.iter())
        .map(|(r, u)| r / u)
        .collect();
    // f = f0 - log U - mu phi + c with (1/V) int e^f U = 1.
    let mut f: Vec<f64> = h
        .iter()
        .zip(m.potential.values().iter())
        .map(|(hv, p)| hv - mu * p)
        .collect();
    let mut weighted = 0.0;
    for ((fv, u), w) in f.iter().zip(m.density.iter()).zip(bg.weights().iter()) {
        weighted += fv.exp() * u * w;
    }
    let c = -(weighted / bg.volume()).ln();
    for fv in f.iter_mut() {
        *fv += c;
    }
    let min_r = ricci_ratio.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    RicciData {
        ricci_ratio_vs_base: ricci_ratio,
        scalar_ratio: scalar,
        ricci_potential: f,
        min_ricci_ratio: min_r,
    }
}

/// Hodge projection of a closed form (given as its ratio against the
/// background form) onto the harmonic forms of the metric `m`. On a surface
/// the harmonic representative is the constant multiple of the metric's own
/// form, so the result is that constant: `(1/V) int ratio dm0`.
pub fn harmonic_project(m: &MetricState, form_ratio_vs_base: &[f64]) -> f64 {
    m.background().mean(form_ratio_vs_base)
}

/// Result of applying the forward Ricci operator.
pub struct ForwardRicci {
    /// Mean-zero potential representing the Ricci form in the class.
    pub potential: Potential,
    /// Whether the Ricci form is itself Kähler (`min r > 0`).
    pub kahler: bool,
}

fn require_anticanonical(bg: &BackgroundGeometry, what: &str) -> Result<()> {
    if !bg.is_anticanonical_sphere() {
        return Err(KimError::BadInput(format!(
            "{what} requires the anticanonical sphere (V = 2)"
        )));
    }
    Ok(())
}

/// Forward Ricci operator on the anticanonical sphere: the potential of
/// `Ric omega_phi` in the class, plus the Kähler flag.
pub fn ricci_forward(m: &MetricState) -> Result<ForwardRicci> {
    let bg = m.background();
    require_anticanonical(bg, "the forward Ricci operator")?;
    let data = m.ricci_data();
    let g: Vec<f64> = data
        .ricci_ratio_vs_base
        .iter()
        .map(|r| r - bg.mu())
        .collect();
    let psi = crate::solver::poisson_solve(bg, &g)?;
    Ok(ForwardRicci {
        potential: Potential::new(bg.clone(), psi)?,
        kahler: data.min_ricci_ratio > 0.0,
    })
}

/// Forward Ricci with rescaling into the class on a sphere of volume other
/// than 2. Not the geometric Ricci operator; exposed for exploration only.
pub fn ricci_forward_renormalized(m: &MetricState) -> Result<ForwardRicci> {
    let bg = m.background();
    if !bg.is_sphere() {
        return Err(KimError::BadInput("forward Ricci requires the sphere".into()));
    }
    let data = m.ricci_data();
    let scale = bg.volume() / (bg.mu() * bg.volume());
    let g: Vec<f64> = data
        .ricci_ratio_vs_base
        .iter()
        .map(|r| scale * r - 1.0)
        .collect();
    let psi = crate::solver::poisson_solve(bg, &g)?;
    Ok(ForwardRicci {
        potential: Potential::new(bg.clone(), psi)?,
        kahler: data.min_ricci_ratio > 0.0,
    })
}

/// Inverse Ricci operator on the anticanonical sphere: the unique Kähler
/// metric whose Ricci form is the (not necessarily Kähler) form with
/// potential `psi`. One pointwise exponential plus one Poisson solve.
pub fn ricci_inverse_fano(bg: &Arc<BackgroundGeometry>, psi: &Potential) -> Result<MetricState> {
    require_anticanonical(bg, "the inverse Ricci operator")?;
    if !bg.same_geometry(psi.background()) {
        return Err(KimError::BadInput("potential lives on a different background".into()));
    }
    let f0 = bg.base_ricci_potential();
    let mut u: Vec<f64> = f0
        .iter()
        .zip(psi.values().iter())
        .map(|(f, p)| (f - p).exp())
        .collect();
    let total = bg.integrate(&u);
    let scale = bg.volume() / total;
    for v in u.iter_mut() {
        *v *= scale;
    }
    let g: Vec<f64> = u.iter().map(|v| v - 1.0).collect();
    let phi = crate::solver::poisson_solve(bg, &g)?;
    MetricState::new(Potential::new(bg.clone(), phi)?)
}

/// Generalized inverse Ricci operator: the metric in the class whose Ricci
/// form equals the harmonic projection `mu * omega_in`. Defined on every
/// background; on the torus it is the constant map to the flat metric.
pub fn ricci_inverse_general(m: &MetricState) -> Result<MetricState> {
    let bg = m.background();
    let g: Vec<f64> = m.density.iter().map(|u| u - 1.0).collect();
    let w = crate::solver::poisson_solve(bg, &g)?;
    let f0 = bg.base_ricci_potential();
    let mu = bg.mu();
    let mut u_out: Vec<f64> = f0
        .iter()
        .zip(w.iter())
        .map(|(f, p)| (f - mu * p).exp())
        .collect();
    let total = bg.integrate(&u_out);
    let scale = bg.volume() / total;
    for v in u_out.iter_mut() {
        *v *= scale;
    }
    let rhs: Vec<f64> = u_out.iter().map(|v| v - 1.0).collect();
    let phi = crate::solver::poisson_solve(bg, &rhs)?;
    MetricState::new(Potential::new(bg.clone(), phi)?)
}

/// The canonical dilation field `X = beta (1 - s^2) d/ds` on the sphere.
#[derive(Clone, Copy, Debug)]
pub struct TwistedFieldSpec {
    pub beta: f64,
}

impl TwistedFieldSpec {
    pub fn new(beta: f64) -> Result<TwistedFieldSpec> {
        if !beta.is_finite() {
            return Err(KimError::BadInput("beta must be finite".into()));
        }
        Ok(TwistedFieldSpec { beta })
    }

    pub fn is_trivial(&self) -> bool {
        self.beta == 0.0
    }
}

/// Potential of the twisting field at the metric `m`:
/// `beta V s + beta (1-s^2) phi'(s) + c`, normalized by
/// `(1/V) int e^psi U dm0 = 1`.
pub fn twisted_field_potential(m: &MetricState, x: &TwistedFieldSpec) -> Result<Vec<f64>> {
    let bg = m.background();
    if !bg.is_sphere() {
        return Err(KimError::BadInput("twisted operations require the sphere".into()));
    }
    let nodes = bg.sphere_nodes().expect("sphere nodes");
    let drift = bg.lie_drift(m.potential.values())?;
    let mut psi: Vec<f64> = nodes
        .iter()
        .zip(drift.iter())
        .map(|(&s, d)| x.beta * (bg.volume() * s + d))
        .collect();
    let mut weighted = 0.0;
    for ((p, u), w) in psi.iter().zip(m.density.iter()).zip(bg.weights().iter()) {
        weighted += p.exp() * u * w;
    }
    let c = -(weighted / bg.volume()).ln();
    for p in psi.iter_mut() {
        *p += c;
    }
    Ok(psi)
}

/// Ratio of the twisted Ricci form `Ric - i ddbar psi^X` against the
/// background form.
pub fn twisted_ricci(m: &MetricState, x: &TwistedFieldSpec) -> Result<Vec<f64>> {
    let psi = twisted_field_potential(m, x)?;
    let lpsi = m.background().apply_l0(&psi);
    Ok(m.ricci_data()
        .ricci_ratio_vs_base
        .iter()
        .zip(lpsi.iter())
        .map(|(r, l)| r - l)
        .collect())
}

/// Twisted inverse Ricci operator: the metric whose twisted Ricci form
/// equals the target metric's form. Newton solve with the drift term.
pub fn twisted_ricci_inverse(
    target: &MetricState,
    x: &TwistedFieldSpec,
    cfg: &SolverConfig,
) -> Result<MetricState> {
    let bg = target.background();
    require_anticanonical(bg, "the twisted inverse Ricci operator")?;
    let nodes = bg.sphere_nodes().expect("sphere nodes");
    let f0 = bg.base_ricci_potential();
    let g: Vec<f64> = f0
        .iter()
        .zip(target.potential.values().iter())
        .zip(nodes.iter())
        .map(|((f, t), &s)| f - t - x.beta * bg.volume() * s)
        .collect();
    let base = MetricState::base(bg.clone());
    let sol = solve_step_twisted(&base, 0.0, &g, x, cfg)?;
    base.apply_increment(&sol.increment)
}

/// Ricci index: depth of the nested positivity structure reached by
/// repeated application of the forward Ricci operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RicciIndex {
    Exactly(u32),
    AtLeast(u32),
}

impl fmt::Display for RicciIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RicciIndex::Exactly(k) => write!(f, "{k}"),
            RicciIndex::AtLeast(k) => write!(f, ">={k}"),
        }
    }
}

/// Compute the Ricci index of `m`, capped at `cap`.
pub fn ricci_index(m: &MetricState, cap: u32) -> Result<RicciIndex> {
    require_anticanonical(m.background(), "the Ricci index")?;
    let mut current = m.clone();
    let mut index: u32 = 1;
    loop {
        if index >= cap {
            return Ok(RicciIndex::AtLeast(cap));
        }
        let fwd = ricci_forward(&current)?;
        if !fwd.kahler {
            return Ok(RicciIndex::Exactly(index));
        }
        current = MetricState::new(fwd.potential)?;
        index += 1;
    }
}
