//! Energy functionals on pairs of metrics, in their one-dimensional closed
//! forms, and the Moser-Trudinger-Onofri auditors.
//!
//! With `chi` the potential difference and `D` the Dirichlet pairing, the
//! closed forms used here are
//!
//! ```text
//! I  = D(chi,chi)/V                 J  = D(chi,chi)/(2V)
//! E0 = (1/V) int log(U_b/U_a) U_b - mu (I-J) + (1/V) int f_a (U_a - U_b)
//! E1 = [mu E0 + D(f_b,f_b)/(2V) - D(f_a,f_a)/(2V)] / mu^2      (mu != 0)
//! F  = -(1/2V) int chi (U_a + U_b) - (1/mu) log (1/V) int e^{f_a - mu chi} U_a
//! ```
//!
//! (for `mu = 0` the Ding functional trades the log term for
//! `(1/V) int chi e^{f_a} U_a`). All of these vanish on the diagonal, are
//! invariant under constant shifts of either potential, and — except the
//! `mu = 0` Ding branch — satisfy the cocycle identity exactly.

use crate::error::{KimError, Result};
use crate::grid::{BackgroundGeometry, Potential};
use crate::metric::{ricci_inverse_fano, MetricState, TwistedFieldSpec};
use std::sync::Arc;

/// Aubin functionals of a pair, n = 1 closed forms.
#[derive(Clone, Copy, Debug)]
pub struct AubinValues {
    pub i: f64,
    pub j: f64,
    pub i0: f64,
    pub i1: f64,
}

fn check_pair(a: &Potential, b: &Potential) -> Result<()> {
    if !a.background().same_geometry(b.background()) {
        return Err(KimError::BadInput("metric pair lives on different backgrounds".into()));
    }
    Ok(())
}

fn density_of(p: &Potential) -> Vec<f64> {
    let mut u = p.background().apply_l0(p.values());
    for v in u.iter_mut() {
        *v += 1.0;
    }
    u
}

/// I, J and the interpolating family for a pair of (not necessarily
/// Kähler) representatives.
pub fn aubin_report(alpha: &Potential, beta: &Potential) -> Result<AubinValues> {
    check_pair(alpha, beta)?;
    let bg = alpha.background();
    let chi: Vec<f64> = beta
        .values()
        .iter()
        .zip(alpha.values().iter())
        .map(|(b, a)| b - a)
        .collect();
    let d = bg.dirichlet_pairing(&chi, &chi);
    let i = d / bg.volume();
    let j = 0.5 * i;
    Ok(AubinValues { i, j, i0: 0.0, i1: j })
}

/// Mabuchi energy of the pair `(alpha, beta)` through its closed form.
pub fn k_energy(alpha: &MetricState, beta: &MetricState) -> Result<f64> {
    check_pair(alpha.potential(), beta.potential())?;
    let bg = alpha.background();
    let mu = bg.mu();
    let aubin = aubin_report(alpha.potential(), beta.potential())?;
    let f_a = &alpha.ricci_data().ricci_potential;
    let mut entropy = 0.0;
    let mut exchange = 0.0;
    for (((ua, ub), f), w) in alpha
        .density()
        .iter()
        .zip(beta.density().iter())
        .zip(f_a.iter())
        .zip(bg.weights().iter())
    {
        entropy += (ub / ua).ln() * ub * w;
        exchange += f * (ua - ub) * w;
    }
    Ok(entropy / bg.volume() - mu * (aubin.i - aubin.j) + exchange / bg.volume())
}

/// Second Chen-Tian functional, expressed through the Mabuchi energy and
/// the Dirichlet energies of the Ricci potentials. Needs `mu != 0`.
pub fn chen_tian_e1(alpha: &MetricState, beta: &MetricState) -> Result<f64> {
    check_pair(alpha.potential(), beta.potential())?;
    let bg = alpha.background();
    let mu = bg.mu();
    if mu == 0.0 {
        return Err(KimError::BadInput("E1 through the K-energy identity needs mu != 0".into()));
    }
    let e0 = k_energy(alpha, beta)?;
    let jt = |m: &MetricState| -> f64 {
        let f = &m.ricci_data().ricci_potential;
        bg.dirichlet_pairing(f, f) / (2.0 * bg.volume())
    };
    Ok((mu * e0 + jt(beta) - jt(alpha)) / (mu * mu))
}

/// Ding functional; `beta` may be any representative of the class.
pub fn ding_functional(alpha: &MetricState, beta: &Potential) -> Result<f64> {
    check_pair(alpha.potential(), beta)?;
    let bg = alpha.background();
    let mu = bg.mu();
    let u_b = density_of(beta);
    let chi: Vec<f64> = beta
        .values()
        .iter()
        .zip(alpha.potential().values().iter())
        .map(|(b, a)| b - a)
        .collect();
    let f_a = &alpha.ricci_data().ricci_potential;
    let mut pairing = 0.0;
    for (((c, ua), ub), w) in chi
        .iter()
        .zip(alpha.density().iter())
        .zip(u_b.iter())
        .zip(bg.weights().iter())
    {
        pairing += c * (ua + ub) * w;
    }
    let first = -pairing / (2.0 * bg.volume());
    if mu != 0.0 {
        let mut weighted = 0.0;
        for (((f, c), ua), w) in f_a
            .iter()
            .zip(chi.iter())
            .zip(alpha.density().iter())
            .zip(bg.weights().iter())
        {
            weighted += (f - mu * c).exp() * ua * w;
        }
        Ok(first - (weighted / bg.volume()).ln() / mu)
    } else {
        let mut linear = 0.0;
        for (((f, c), ua), w) in f_a
            .iter()
            .zip(chi.iter())
            .zip(alpha.density().iter())
            .zip(bg.weights().iter())
        {
            linear += c * f.exp() * ua * w;
        }
        Ok(first + linear / bg.volume())
    }
}

/// Chen-Tian functional pulled back by `l` applications of the inverse
/// Ricci operator; `k` selects the functional (0 or 1).
pub fn pullback_functional(
    alpha: &MetricState,
    beta: &Potential,
    k: u32,
    l: u32,
) -> Result<f64> {
    let bg = alpha.background();
    if !bg.is_anticanonical_sphere() {
        return Err(KimError::BadInput(
            "pullback functionals require the anticanonical sphere".into(),
        ));
    }
    if k > 1 {
        return Err(KimError::BadInput("only k in {0, 1} exists at n = 1".into()));
    }
    check_pair(alpha.potential(), beta)?;
    let ek = |a: &MetricState, b: &MetricState| -> Result<f64> {
        if k == 0 {
            k_energy(a, b)
        } else {
            chen_tian_e1(a, b)
        }
    };
    if l == 0 {
        let mb = MetricState::new(beta.clone())?;
        return ek(alpha, &mb);
    }
    let mut a = ricci_inverse_fano(bg, alpha.potential())?;
    let mut b = ricci_inverse_fano(bg, beta)?;
    for _ in 1..l {
        a = ricci_inverse_fano(bg, a.potential())?;
        b = ricci_inverse_fano(bg, b.potential())?;
    }
    ek(&a, &b)
}

/// Path parametrizations for the twisted energy quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    Linear,
    Quadratic,
}

/// Twisted Mabuchi energy: quadrature in `t` of
/// `(1/V) <phidot, L^psi (psi^X - f)>_psi` along a path from `alpha` to
/// `beta`, with `L^psi v = L0 v / U + beta (1-s^2) v'` and the inner
/// product weighted by `e^{psi^X} U`. Path-independent up to quadrature
/// error; with a trivial field it reduces to the K-energy.
pub fn twisted_k_energy_path(
    alpha: &MetricState,
    beta: &MetricState,
    x: &TwistedFieldSpec,
    t_nodes: usize,
    path: PathKind,
) -> Result<f64> {
    check_pair(alpha.potential(), beta.potential())?;
    let bg = alpha.background();
    if !bg.is_sphere() {
        return Err(KimError::BadInput("the twisted energy requires the sphere".into()));
    }
    if t_nodes < 2 {
        return Err(KimError::BadInput("need at least 2 quadrature nodes".into()));
    }
    let chi = beta.potential().plus_scaled(alpha.potential(), -1.0)?;
    let (tq, wq) = crate::grid::gauss_legendre(t_nodes);
    let mut total = 0.0;
    for (xq, ww) in tq.iter().zip(wq.iter()) {
        let t = 0.5 * (xq + 1.0);
        let (sigma, sigma_dot) = match path {
            PathKind::Linear => (t, 1.0),
            PathKind::Quadratic => (t * t, 2.0 * t),
        };
        let state = MetricState::new(alpha.potential().plus_scaled(&chi, sigma)?)?;
        let f_t = &state.ricci_data().ricci_potential;
        let psi_t = crate::metric::twisted_field_potential(&state, x)?;
        let w_fun: Vec<f64> = psi_t.iter().zip(f_t.iter()).map(|(p, f)| p - f).collect();
        let lw = bg.apply_l0(&w_fun);
        let drift = if x.beta != 0.0 {
            bg.lie_drift(&w_fun)?
        } else {
            vec![0.0; w_fun.len()]
        };
        let mut inner = 0.0;
        for i in 0..w_fun.len() {
            let lop = lw[i] / state.density()[i] + x.beta * drift[i];
            inner += sigma_dot * chi.values()[i] * lop * psi_t[i].exp() * state.density()[i]
                * bg.weights()[i];
        }
        total += 0.5 * ww * inner / bg.volume();
    }
    Ok(total)
}

/// Twisted Mabuchi energy along the linear path with 16 quadrature nodes.
pub fn twisted_k_energy(
    alpha: &MetricState,
    beta: &MetricState,
    x: &TwistedFieldSpec,
) -> Result<f64> {
    twisted_k_energy_path(alpha, beta, x, 16, PathKind::Linear)
}

/// One Moser-Trudinger-Onofri audit on the anticanonical sphere.
#[derive(Clone, Copy, Debug)]
pub struct MtoAudit {
    /// `(1/V) int e^{-phi + mean}` against the round background.
    pub lhs: f64,
    /// `e^J` for the pair (round, omega_phi).
    pub rhs: f64,
    /// `log rhs - log lhs`; the Ding functional of the pair, expected >= 0.
    pub margin: f64,
}

/// Audit the inequality for an arbitrary smooth potential; positivity of
/// the induced form is not required.
pub fn mto_audit(bg: &Arc<BackgroundGeometry>, phi: &Potential) -> Result<MtoAudit> {
    if !bg.is_anticanonical_sphere() {
        return Err(KimError::BadInput(
            "the Moser-Trudinger-Onofri audit requires the anticanonical sphere".into(),
        ));
    }
    if !bg.same_geometry(phi.background()) {
        return Err(KimError::BadInput("potential lives on a different background".into()));
    }
    let mean = bg.mean(phi.values());
    let mut lhs = 0.0;
    for (p, w) in phi.values().iter().zip(bg.weights().iter()) {
        lhs += (-p + mean).exp() * w;
    }
    lhs /= bg.volume();
    let j = bg.dirichlet_pairing(phi.values(), phi.values()) / (2.0 * bg.volume());
    Ok(MtoAudit {
        lhs,
        rhs: j.exp(),
        margin: j - lhs.ln(),
    })
}

/// Strengthened audit: the plain margin minus the Dirichlet terms
/// collected along the inverse-Ricci orbit.
#[derive(Clone, Debug)]
pub struct ImprovedMtoAudit {
    pub margin: f64,
    pub j_terms: Vec<f64>,
    pub strengthened_margin: f64,
}

pub fn improved_mto_audit(
    bg: &Arc<BackgroundGeometry>,
    phi: &Potential,
    terms: usize,
) -> Result<ImprovedMtoAudit> {
    if terms < 1 {
        return Err(KimError::BadInput("need at least one orbit term".into()));
    }
    let base = mto_audit(bg, phi)?;
    let mut j_terms = Vec::with_capacity(terms);
    let mut prev_pot = phi.clone();
    for _ in 0..terms {
        let next = ricci_inverse_fano(bg, &prev_pot)?;
        let a = aubin_report(next.potential(), &prev_pot)?;
        j_terms.push(a.j);
        prev_pot = next.potential().clone();
    }
    let sum: f64 = j_terms.iter().sum();
    Ok(ImprovedMtoAudit {
        margin: base.margin,
        j_terms,
        strengthened_margin: base.margin - sum,
    })
}

/// Aggregate report for a metric pair.
#[derive(Clone, Copy, Debug)]
pub struct FunctionalReport {
    pub i: f64,
    pub j: f64,
    pub i0: f64,
    pub i1: f64,
    pub i_minus_j: f64,
    pub e0: f64,
    pub e1: Option<f64>,
    pub f_mu: f64,
    pub e0_twisted: Option<f64>,
}

pub fn functional_report(
    alpha: &MetricState,
    beta: &MetricState,
    twist: Option<&TwistedFieldSpec>,
) -> Result<FunctionalReport> {
    let aubin = aubin_report(alpha.potential(), beta.potential())?;
    let e0 = k_energy(alpha, beta)?;
    let e1 = if alpha.background().mu() != 0.0 {
        Some(chen_tian_e1(alpha, beta)?)
    } else {
        None
    };
    let f_mu = ding_functional(alpha, beta.potential())?;
    let e0_twisted = match twist {
        Some(x) if !x.is_trivial() => Some(twisted_k_energy(alpha, beta, x)?),
        _ => None,
    };
    Ok(FunctionalReport {
        i: aubin.i,
        j: aubin.j,
        i0: aubin.i0,
        i1: aubin.i1,
        i_minus_j: aubin.i - aubin.j,
        e0,
        e1,
        f_mu,
        e0_twisted,
    })
}
