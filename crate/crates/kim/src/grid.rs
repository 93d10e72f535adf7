//! Model geometries and their spectral machinery.
//!
//! Three one-complex-dimensional backgrounds are supported:
//!
//! * `SphereSymmetric` — circle-invariant data on the round sphere of volume
//!   `V`, sampled at Gauss-Legendre points `s in (-1,1)`. The operator `L0`
//!   (the ratio of `i ddbar phi` against the background form, written out as
//!   `(1/V) d/ds [(1-s^2) d phi/ds]`) diagonalizes on Legendre polynomials
//!   with eigenvalue `-l(l+1)/V`.
//! * `Torus` — the flat square torus, `N x N` uniform grid, Fourier modes
//!   `exp(2 pi i k.x)` with eigenvalue `-|k|^2/V`.
//! * `SyntheticNegative` — the torus grid reused with `mu = -1` and a
//!   prescribed smooth background potential `f0`. This mode exercises the
//!   negative-curvature equations as analysis only; it does not represent an
//!   actual genus >= 2 surface.
//!
//! Quadrature and differentiation are exact-spectral; node values and
//! spectral coefficients are related by an exact inverse pair, so discrete
//! identities (self-adjointness, Parseval, Poisson round trips) hold to
//! rounding.

use crate::error::{KimError, Result};
use crate::rng::SplitMix64;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackgroundKind {
    SphereSymmetric,
    Torus,
    SyntheticNegative,
}

impl BackgroundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BackgroundKind::SphereSymmetric => "sphere",
            BackgroundKind::Torus => "torus",
            BackgroundKind::SyntheticNegative => "synthetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    None,
    EvenInS,
}

impl Symmetry {
    pub fn as_str(&self) -> &'static str {
        match self {
            Symmetry::None => "none",
            Symmetry::EvenInS => "even",
        }
    }
}

/// One Fourier mode of a prescribed background potential on the torus grid.
#[derive(Clone, Copy, Debug)]
pub struct F0Mode {
    pub k1: i32,
    pub k2: i32,
    pub re: f64,
    pub im: f64,
}

/// Band-limited data prescribing the synthetic-negative background potential.
#[derive(Clone, Debug, Default)]
pub struct F0Spec {
    pub modes: Vec<F0Mode>,
}

impl F0Spec {
    /// Deterministic band-limited spec: one draw per half-plane mode with
    /// `|k|_inf <= band`, scaled by `amplitude / (1+|k|)^2`.
    pub fn seeded(seed: u64, band: u32, amplitude: f64) -> F0Spec {
        let b = band as i32;
        let mut modes = Vec::new();
        for k1 in 0..=b {
            let k2_lo = if k1 == 0 { 1 } else { -b };
            for k2 in k2_lo..=b {
                if k1 == 0 && k2 <= 0 {
                    continue;
                }
                let mut rng = SplitMix64::derived(seed, k1 as i64, k2 as i64);
                let r2 = (k1 * k1 + k2 * k2) as f64;
                let scale = amplitude / ((1.0 + r2) * (1.0 + r2));
                modes.push(F0Mode {
                    k1,
                    k2,
                    re: scale * rng.next_signed(),
                    im: scale * rng.next_signed(),
                });
            }
        }
        F0Spec { modes }
    }

    pub fn max_band(&self) -> i32 {
        self.modes
            .iter()
            .map(|m| m.k1.abs().max(m.k2.abs()))
            .max()
            .unwrap_or(0)
    }
}

struct SphereBasis {
    n: usize,
    /// Gauss-Legendre nodes, ascending.
    nodes: Vec<f64>,
    /// synth[i*n + l] = P_l(s_i)
    synth: Vec<f64>,
    /// anal[l*n + i] = (2l+1)/2 * w_i * P_l(s_i); exact inverse of synth.
    anal: Vec<f64>,
    /// Node-space matrix of L0.
    l0mat: Vec<f64>,
    /// Node-space matrix of u -> (1-s^2) u'.
    drift_mat: Vec<f64>,
    /// Eigenvalues -l(l+1)/V.
    eig: Vec<f64>,
}

struct TorusBasis {
    n: usize,
    /// fwd[k*n + j] = exp(-2 pi i j k / n) / n
    fwd: Vec<Complex64>,
    /// inv[j*n + k] = exp(+2 pi i j k / n)
    inv: Vec<Complex64>,
    /// eig[k1*n + k2] = -(q1^2 + q2^2)/V with signed frequencies q.
    eig: Vec<f64>,
}

enum Basis {
    Sphere(SphereBasis),
    Torus(TorusBasis),
}

/// A fixed reference geometry: grid, quadrature, spectral operators, the
/// Einstein constant `mu`, and the background Ricci potential `f0`.
///
/// Immutable after construction; share via `Arc`.
pub struct BackgroundGeometry {
    kind: BackgroundKind,
    resolution: usize,
    volume: f64,
    mu: f64,
    weights: Vec<f64>,
    base_ricci_potential: Vec<f64>,
    symmetry: Symmetry,
    f0_digest: u64,
    basis: Basis,
}

/// Evaluate P_n and P_n' at x via the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut pm = 1.0;
    let mut p = x;
    for l in 1..n {
        let lf = l as f64;
        let pn = ((2.0 * lf + 1.0) * x * p - lf * pm) / (lf + 1.0);
        pm = p;
        p = pn;
    }
    let nf = n as f64;
    let dp = nf * (x * p - pm) / (x * x - 1.0);
    (p, dp)
}

pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if converged {
                break;
            }
            if dx.abs() < 1e-15 {
                converged = true; // one polishing step after convergence
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    // Enforce the exact +/- symmetry of the rule; this keeps high-degree
    // quadrature cancellations at the rounding level.
    for i in 0..n / 2 {
        let t = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -t;
        nodes[n - 1 - i] = t;
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn mat_vec(mat: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v.iter()) {
            acc += a * b;
        }
        out[r] = acc;
    }
    out
}

impl BackgroundGeometry {
    /// Build a background geometry.
    ///
    /// `f0_spec` is required for `SyntheticNegative` and rejected otherwise.
    /// `symmetry = EvenInS` is only meaningful on the sphere.
    pub fn build(
        kind: BackgroundKind,
        resolution: usize,
        volume: f64,
        f0_spec: Option<&F0Spec>,
        symmetry: Symmetry,
    ) -> Result<Arc<BackgroundGeometry>> {
        if resolution < 8 {
            return Err(KimError::BadInput(format!(
                "resolution {resolution} too small; need N >= 8"
            )));
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(KimError::BadInput(format!("volume {volume} must be positive")));
        }
        if symmetry == Symmetry::EvenInS && kind != BackgroundKind::SphereSymmetric {
            return Err(KimError::BadInput(
                "EvenInS symmetry is only available on the sphere".into(),
            ));
        }
        match kind {
            BackgroundKind::SyntheticNegative => {
                let spec = f0_spec.ok_or_else(|| {
                    KimError::BadInput("SyntheticNegative requires an f0 spec".into())
                })?;
                Self::build_torus_like(kind, resolution, volume, -1.0, spec)
            }
            BackgroundKind::Torus => {
                if f0_spec.is_some() {
                    return Err(KimError::BadInput(
                        "f0 spec is only accepted for SyntheticNegative".into(),
                    ));
                }
                Self::build_torus_like(kind, resolution, volume, 0.0, &F0Spec::default())
            }
            BackgroundKind::SphereSymmetric => {
                if f0_spec.is_some() {
                    return Err(KimError::BadInput(
                        "f0 spec is only accepted for SyntheticNegative".into(),
                    ));
                }
                Self::build_sphere(resolution, volume, symmetry)
            }
        }
    }

    fn build_sphere(n: usize, volume: f64, symmetry: Symmetry) -> Result<Arc<BackgroundGeometry>> {
        let (nodes, gl_weights) = gauss_legendre(n);
        let mut synth = vec![0.0; n * n];
        let mut drift_synth = vec![0.0; n * n];
        for (i, &s) in nodes.iter().enumerate() {
            // P_l(s) for l = 0..n-1 by recurrence.
            let mut pm = 1.0;
            let mut p = s;
            synth[i * n] = 1.0;
            drift_synth[i * n] = 0.0;
            if n > 1 {
                synth[i * n + 1] = s;
                drift_synth[i * n + 1] = 1.0 - s * s;
            }
            for l in 1..n - 1 {
                let lf = l as f64;
                let pn = ((2.0 * lf + 1.0) * s * p - lf * pm) / (lf + 1.0);
                synth[i * n + l + 1] = pn;
                // (1-s^2) P_{l+1}' = (l+1) (P_l - s P_{l+1})
                drift_synth[i * n + l + 1] = (lf + 1.0) * (p - s * pn);
                pm = p;
                p = pn;
            }
        }
        let mut anal = vec![0.0; n * n];
        for l in 0..n {
            let norm = (2.0 * l as f64 + 1.0) / 2.0;
            for i in 0..n {
                anal[l * n + i] = norm * gl_weights[i] * synth[i * n + l];
            }
        }
        // Discrete compatibility: analysis rows l >= 1 annihilate constants
        // exactly and synthesis columns l >= 1 are exactly mean-free, so the
        // kernel/image structure of L0 holds to the last bit instead of
        // being amplified by the l(l+1) eigenvalues.
        for l in 1..n {
            let row_sum: f64 = anal[l * n..(l + 1) * n].iter().sum();
            for i in 0..n {
                anal[l * n + i] -= row_sum / n as f64;
            }
            let col_mean: f64 = (0..n)
                .map(|i| gl_weights[i] * synth[i * n + l])
                .sum::<f64>()
                / 2.0;
            for i in 0..n {
                synth[i * n + l] -= col_mean;
            }
        }
        let eig: Vec<f64> = (0..n)
            .map(|l| -((l * (l + 1)) as f64) / volume)
            .collect();
        // Node-space matrices L0 = S diag(eig) T and drift = Sd T.
        let mut l0mat = vec![0.0; n * n];
        let mut drift_mat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                let mut acc_d = 0.0;
                for l in 0..n {
                    acc += synth[i * n + l] * eig[l] * anal[l * n + j];
                    acc_d += drift_synth[i * n + l] * anal[l * n + j];
                }
                l0mat[i * n + j] = acc;
                drift_mat[i * n + j] = acc_d;
            }
        }
        let weights: Vec<f64> = gl_weights.iter().map(|w| w * volume / 2.0).collect();
        let bg = BackgroundGeometry {
            kind: BackgroundKind::SphereSymmetric,
            resolution: n,
            volume,
            mu: 2.0 / volume,
            weights,
            base_ricci_potential: vec![0.0; n],
            symmetry,
            f0_digest: crate::rng::digest_f64(&vec![0.0; n]),
            basis: Basis::Sphere(SphereBasis {
                n,
                nodes,
                synth,
                anal,
                l0mat,
                drift_mat,
                eig,
            }),
        };
        Ok(Arc::new(bg))
    }

    fn build_torus_like(
        kind: BackgroundKind,
        n: usize,
        volume: f64,
        mu: f64,
        f0_spec: &F0Spec,
    ) -> Result<Arc<BackgroundGeometry>> {
        if f0_spec.max_band() as usize >= n / 2 {
            return Err(KimError::BadInput(format!(
                "f0 band {} exceeds Nyquist limit for N = {n}",
                f0_spec.max_band()
            )));
        }
        let mut fwd = vec![Complex64::new(0.0, 0.0); n * n];
        let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
        for k in 0..n {
            for j in 0..n {
                let ang = 2.0 * PI * (j as f64) * (k as f64) / (n as f64);
                fwd[k * n + j] = Complex64::new(ang.cos(), -ang.sin()) / n as f64;
                inv[j * n + k] = Complex64::new(ang.cos(), ang.sin());
            }
        }
        let signed = |k: usize| -> f64 {
            if k <= n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            }
        };
        let mut eig = vec![0.0; n * n];
        for k1 in 0..n {
            for k2 in 0..n {
                let q1 = signed(k1);
                let q2 = signed(k2);
                eig[k1 * n + k2] = -(q1 * q1 + q2 * q2) / volume;
            }
        }
        let node_count = n * n;
        let weights = vec![volume / node_count as f64; node_count];
        // Prescribed background potential, normalized so (1/V) int e^{f0} = 1.
        let mut f0 = vec![0.0; node_count];
        for m in &f0_spec.modes {
            for i in 0..n {
                let x = i as f64 / n as f64;
                for j in 0..n {
                    let y = j as f64 / n as f64;
                    let ang = 2.0 * PI * (m.k1 as f64 * x + m.k2 as f64 * y);
                    f0[i * n + j] += 2.0 * (m.re * ang.cos() - m.im * ang.sin());
                }
            }
        }
        let mut exp_int = 0.0;
        for (v, w) in f0.iter().zip(weights.iter()) {
            exp_int += v.exp() * w;
        }
        let shift = -(exp_int / volume).ln();
        for v in f0.iter_mut() {
            *v += shift;
        }
        let bg = BackgroundGeometry {
            kind,
            resolution: n,
            volume,
            mu,
            weights,
            f0_digest: crate::rng::digest_f64(&f0),
            base_ricci_potential: f0,
            symmetry: Symmetry::None,
            basis: Basis::Torus(TorusBasis { n, fwd, inv, eig }),
        };
        Ok(Arc::new(bg))
    }

    pub fn kind(&self) -> BackgroundKind {
        self.kind
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn base_ricci_potential(&self) -> &[f64] {
        &self.base_ricci_potential
    }

    pub fn f0_digest(&self) -> u64 {
        self.f0_digest
    }

    pub fn node_count(&self) -> usize {
        match &self.basis {
            Basis::Sphere(b) => b.n,
            Basis::Torus(b) => b.n * b.n,
        }
    }

    /// Gauss-Legendre nodes (sphere only).
    pub fn sphere_nodes(&self) -> Option<&[f64]> {
        match &self.basis {
            Basis::Sphere(b) => Some(&b.nodes),
            Basis::Torus(_) => None,
        }
    }

    pub fn is_sphere(&self) -> bool {
        self.kind == BackgroundKind::SphereSymmetric
    }

    /// The anticanonically polarized sphere (V = 2, mu = 1) on which the
    /// forward/inverse Ricci operators act within the represented class.
    pub fn is_anticanonical_sphere(&self) -> bool {
        self.is_sphere() && (self.volume - 2.0).abs() <= 1e-12
    }

    /// True if two backgrounds describe the same discrete geometry.
    pub fn same_geometry(&self, other: &BackgroundGeometry) -> bool {
        self.kind == other.kind
            && self.resolution == other.resolution
            && self.volume == other.volume
            && self.symmetry == other.symmetry
            && self.f0_digest == other.f0_digest
    }

    /// Quadrature of `u` against the background measure.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.node_count());
        let mut acc = 0.0;
        for (v, w) in u.iter().zip(self.weights.iter()) {
            acc += v * w;
        }
        acc
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        self.integrate(u) / self.volume
    }

    /// Apply the ddbar-ratio operator `L0`.
    pub fn apply_l0(&self, u: &[f64]) -> Vec<f64> {
        match &self.basis {
            Basis::Sphere(b) => mat_vec(&b.l0mat, u, b.n, b.n),
            Basis::Torus(b) => {
                let mut hat = torus_forward(b, u);
                for (h, e) in hat.iter_mut().zip(b.eig.iter()) {
                    *h *= *e;
                }
                torus_inverse(b, &hat)
            }
        }
    }

    /// Mean-zero solve of `L0 u = g - mean(g)`.
    ///
    /// Callers that must reject a nonzero mean do so before calling; this
    /// routine always projects out the mean so the division is well posed.
    pub fn solve_l0(&self, g: &[f64]) -> Vec<f64> {
        match &self.basis {
            Basis::Sphere(b) => {
                let mut coeffs = mat_vec(&b.anal, g, b.n, b.n);
                coeffs[0] = 0.0;
                for (c, e) in coeffs.iter_mut().zip(b.eig.iter()).skip(1) {
                    *c /= *e;
                }
                mat_vec(&b.synth, &coeffs, b.n, b.n)
            }
            Basis::Torus(b) => {
                let mut hat = torus_forward(b, g);
                hat[0] = Complex64::new(0.0, 0.0);
                for (idx, h) in hat.iter_mut().enumerate() {
                    if idx != 0 {
                        *h /= b.eig[idx];
                    }
                }
                torus_inverse(b, &hat)
            }
        }
    }

    /// Dirichlet pairing `D(u,v) = -int u L0 v dm0`; symmetric, D(u,u) >= 0.
    pub fn dirichlet_pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        let lv = self.apply_l0(v);
        let mut acc = 0.0;
        for ((a, b), w) in u.iter().zip(lv.iter()).zip(self.weights.iter()) {
            acc -= a * b * w;
        }
        acc
    }

    /// Node values of `(1-s^2) u'(s)`; the canonical holomorphic drift on
    /// the sphere. Errors off-sphere.
    pub fn lie_drift(&self, u: &[f64]) -> Result<Vec<f64>> {
        match &self.basis {
            Basis::Sphere(b) => Ok(mat_vec(&b.drift_mat, u, b.n, b.n)),
            Basis::Torus(_) => Err(KimError::BadInput(
                "holomorphic drift is only defined on the sphere".into(),
            )),
        }
    }

    /// Legendre coefficients of `u` (sphere only).
    pub fn legendre_coeffs(&self, u: &[f64]) -> Option<Vec<f64>> {
        match &self.basis {
            Basis::Sphere(b) => Some(mat_vec(&b.anal, u, b.n, b.n)),
            Basis::Torus(_) => None,
        }
    }

    /// Coefficient energy beyond `band` (normalized L2 of the spectral tail).
    pub fn tail_energy(&self, u: &[f64], band: usize) -> f64 {
        match &self.basis {
            Basis::Sphere(b) => {
                let coeffs = mat_vec(&b.anal, u, b.n, b.n);
                let mut acc = 0.0;
                for (l, c) in coeffs.iter().enumerate() {
                    if l > band {
                        // int P_l^2 dm0 = V / (2l+1)
                        acc += c * c * self.volume / (2.0 * l as f64 + 1.0);
                    }
                }
                acc
            }
            Basis::Torus(b) => {
                let hat = torus_forward(b, u);
                let signed = |k: usize| -> i64 {
                    if k <= b.n / 2 {
                        k as i64
                    } else {
                        k as i64 - b.n as i64
                    }
                };
                let mut acc = 0.0;
                for k1 in 0..b.n {
                    for k2 in 0..b.n {
                        let q = signed(k1).abs().max(signed(k2).abs());
                        if q > band as i64 {
                            acc += hat[k1 * b.n + k2].norm_sqr() * self.volume;
                        }
                    }
                }
                acc
            }
        }
    }

    /// Largest magnitude among the `L0` eigenvalues; sets the rounding
    /// floor of derived second-derivative quantities.
    pub fn max_abs_eigenvalue(&self) -> f64 {
        match &self.basis {
            Basis::Sphere(b) => b.eig[b.n - 1].abs(),
            Basis::Torus(b) => {
                let q = (b.n / 2) as f64;
                2.0 * q * q / self.volume
            }
        }
    }

    /// Dense node-space matrix of `L0` (built on demand for the torus).
    pub fn dense_l0_matrix(&self) -> Vec<f64> {
        match &self.basis {
            Basis::Sphere(b) => b.l0mat.clone(),
            Basis::Torus(b) => {
                let m = b.n * b.n;
                let mut mat = vec![0.0; m * m];
                let mut unit = vec![0.0; m];
                for j in 0..m {
                    unit[j] = 1.0;
                    let col = self.apply_l0(&unit);
                    unit[j] = 0.0;
                    for i in 0..m {
                        mat[i * m + j] = col[i];
                    }
                }
                mat
            }
        }
    }

    /// Dense node-space matrix of the sphere drift `u -> (1-s^2) u'`.
    pub fn dense_drift_matrix(&self) -> Result<Vec<f64>> {
        match &self.basis {
            Basis::Sphere(b) => Ok(b.drift_mat.clone()),
            Basis::Torus(_) => Err(KimError::BadInput(
                "holomorphic drift is only defined on the sphere".into(),
            )),
        }
    }

    /// Preconditioner solve `(a I - L0) u = g` (diagonal in the spectral
    /// basis); used by the torus conjugate-gradient path.
    pub fn shifted_flat_solve(&self, a: f64, g: &[f64]) -> Vec<f64> {
        match &self.basis {
            Basis::Sphere(b) => {
                let mut coeffs = mat_vec(&b.anal, g, b.n, b.n);
                for (c, e) in coeffs.iter_mut().zip(b.eig.iter()) {
                    *c /= a - *e;
                }
                mat_vec(&b.synth, &coeffs, b.n, b.n)
            }
            Basis::Torus(b) => {
                let mut hat = torus_forward(b, g);
                for (h, e) in hat.iter_mut().zip(b.eig.iter()) {
                    *h /= a - *e;
                }
                torus_inverse(b, &hat)
            }
        }
    }

    /// Project onto the represented symmetry class: mean removal plus,
    /// under `EvenInS`, removal of odd-degree coefficients. Idempotent:
    /// data already normalized to rounding level is returned bit-for-bit,
    /// so persisted states round-trip exactly.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let mut out = u.to_vec();
        let sup = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if self.symmetry == Symmetry::EvenInS {
            if let Basis::Sphere(b) = &self.basis {
                let odd = self.odd_energy(&out).sqrt();
                if odd > 1e-13 * (1.0 + sup) {
                    let mut coeffs = mat_vec(&b.anal, &out, b.n, b.n);
                    for (l, c) in coeffs.iter_mut().enumerate() {
                        if l % 2 == 1 {
                            *c = 0.0;
                        }
                    }
                    out = mat_vec(&b.synth, &coeffs, b.n, b.n);
                }
            }
        }
        let m = self.mean(&out);
        if m.abs() > 1e-15 * self.volume * (1.0 + sup) {
            for v in out.iter_mut() {
                *v -= m;
            }
        }
        out
    }

    /// Energy in the odd-degree coefficients; zero for even functions.
    pub fn odd_energy(&self, u: &[f64]) -> f64 {
        match &self.basis {
            Basis::Sphere(b) => {
                let coeffs = mat_vec(&b.anal, u, b.n, b.n);
                coeffs
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| l % 2 == 1)
                    .map(|(l, c)| c * c * self.volume / (2.0 * l as f64 + 1.0))
                    .sum()
            }
            Basis::Torus(_) => 0.0,
        }
    }
}

fn torus_forward(b: &TorusBasis, u: &[f64]) -> Vec<Complex64> {
    let n = b.n;
    // Rows (y-direction) then columns (x-direction).
    let mut mid = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k2 in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += b.fwd[k2 * n + j] * u[i * n + j];
            }
            mid[i * n + k2] = acc;
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for k2 in 0..n {
        for k1 in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                acc += b.fwd[k1 * n + i] * mid[i * n + k2];
            }
            out[k1 * n + k2] = acc;
        }
    }
    out
}

fn torus_inverse(b: &TorusBasis, hat: &[Complex64]) -> Vec<f64> {
    let n = b.n;
    let mut mid = vec![Complex64::new(0.0, 0.0); n * n];
    for k2 in 0..n {
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k1 in 0..n {
                acc += b.inv[i * n + k1] * hat[k1 * n + k2];
            }
            mid[i * n + k2] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k2 in 0..n {
                acc += b.inv[j * n + k2] * mid[i * n + k2];
            }
            out[i * n + j] = acc.re;
        }
    }
    out
}

/// A mean-zero potential on the grid; the metric it induces need not be
/// Kähler (arbitrary representatives of the class are allowed here).
#[derive(Clone)]
pub struct Potential {
    background: Arc<BackgroundGeometry>,
    values: Vec<f64>,
}

impl Potential {
    /// Wrap node values as a potential: validates finiteness and symmetry,
    /// then stores the mean-normalized (and symmetry-projected) data.
    pub fn new(background: Arc<BackgroundGeometry>, values: Vec<f64>) -> Result<Potential> {
        if values.len() != background.node_count() {
            return Err(KimError::BadInput(format!(
                "potential has {} values, grid has {} nodes",
                values.len(),
                background.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KimError::BadInput("potential contains non-finite values".into()));
        }
        if background.symmetry() == Symmetry::EvenInS {
            let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let odd = background.odd_energy(&values);
            if odd.sqrt() > 1e-9 * (1.0 + sup) {
                return Err(KimError::BadInput(
                    "potential breaks the EvenInS symmetry restriction".into(),
                ));
            }
        }
        let values = background.project(&values);
        Ok(Potential { background, values })
    }

    pub fn zero(background: Arc<BackgroundGeometry>) -> Potential {
        let n = background.node_count();
        Potential {
            background,
            values: vec![0.0; n],
        }
    }

    pub fn background(&self) -> &Arc<BackgroundGeometry> {
        &self.background
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `self + scale * other`, re-normalized.
    pub fn plus_scaled(&self, other: &Potential, scale: f64) -> Result<Potential> {
        if !self.background.same_geometry(&other.background) {
            return Err(KimError::BadInput("potentials live on different backgrounds".into()));
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a + scale * b)
            .collect();
        Potential::new(self.background.clone(), values)
    }

    pub fn sup_distance(&self, other: &Potential) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Deterministic band-limited test potential.
///
/// Sphere: Legendre coefficients `a_l`, `1 <= l <= band`, i.i.d. uniform in
/// [-1,1] scaled by `amplitude/(1+l)^2` (odd degrees dropped under EvenInS).
/// Torus: one draw per half-plane Fourier mode with `|k|_inf <= band`,
/// scaled by `amplitude/(1+|k|^2)^2` so the induced density stays bounded
/// as the mode count grows. Draws depend only on (seed, mode), never on the
/// grid resolution.
pub fn random_potential(
    background: &Arc<BackgroundGeometry>,
    seed: u64,
    band: u32,
    amplitude: f64,
) -> Result<Potential> {
    if amplitude < 0.0 || !amplitude.is_finite() {
        return Err(KimError::BadInput("amplitude must be nonnegative".into()));
    }
    match &background.basis {
        Basis::Sphere(b) => {
            if band as usize >= b.n {
                return Err(KimError::BadInput(format!(
                    "band {band} exceeds sphere resolution {}",
                    b.n
                )));
            }
            let mut rng = SplitMix64::new(seed);
            let mut coeffs = vec![0.0; b.n];
            // One draw per degree even when parity drops it, so the same
            // seed selects the same even coefficients with or without the
            // symmetry restriction.
            #[allow(clippy::needless_range_loop)]
            for l in 1..=band as usize {
                let draw = rng.next_signed();
                if background.symmetry == Symmetry::EvenInS && l % 2 == 1 {
                    continue;
                }
                coeffs[l] = amplitude * draw / ((1 + l) * (1 + l)) as f64;
            }
            let values = mat_vec(&b.synth, &coeffs, b.n, b.n);
            Potential::new(background.clone(), values)
        }
        Basis::Torus(b) => {
            if band as usize >= b.n / 2 {
                return Err(KimError::BadInput(format!(
                    "band {band} exceeds Nyquist limit for N = {}",
                    b.n
                )));
            }
            let bb = band as i32;
            let n = b.n;
            let mut values = vec![0.0; n * n];
            for k1 in 0..=bb {
                let k2_lo = if k1 == 0 { 1 } else { -bb };
                for k2 in k2_lo..=bb {
                    if k1 == 0 && k2 <= 0 {
                        continue;
                    }
                    let mut rng = SplitMix64::derived(seed, k1 as i64, k2 as i64);
                    let r2 = (k1 * k1 + k2 * k2) as f64;
                    let scale = amplitude / ((1.0 + r2) * (1.0 + r2));
                    let re = scale * rng.next_signed();
                    let im = scale * rng.next_signed();
                    for i in 0..n {
                        let x = i as f64 / n as f64;
                        for j in 0..n {
                            let y = j as f64 / n as f64;
                            let ang = 2.0 * PI * (k1 as f64 * x + k2 as f64 * y);
                            values[i * n + j] += 2.0 * (re * ang.cos() - im * ang.sin());
                        }
                    }
                }
            }
            Potential::new(background.clone(), values)
        }
    }
}

/// Potential of the round metric pulled back by the Möbius dilation of
/// parameter `lambda`: density `U(s) = 4 lambda^2 / ((1+s) lambda^2 + (1-s))^2`.
/// The resulting metric satisfies `Ric = (2/V) omega` pointwise.
pub fn dilation_pullback_potential(
    background: &Arc<BackgroundGeometry>,
    lambda: f64,
) -> Result<Potential> {
    if !background.is_sphere() {
        return Err(KimError::BadInput("dilation pullback requires the sphere".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(KimError::BadInput("lambda must be positive".into()));
    }
    if background.symmetry() == Symmetry::EvenInS && (lambda - 1.0).abs() > 0.0 {
        return Err(KimError::BadInput(
            "Möbius dilations break the EvenInS restriction".into(),
        ));
    }
    let nodes = background.sphere_nodes().expect("sphere basis");
    let a = lambda * lambda;
    let g: Vec<f64> = nodes
        .iter()
        .map(|&s| {
            let d = (1.0 + s) * a + (1.0 - s);
            4.0 * a / (d * d) - 1.0
        })
        .collect();
    let mean = background.mean(&g);
    let centered: Vec<f64> = g.iter().map(|v| v - mean).collect();
    let phi = background.solve_l0(&centered);
    Potential::new(background.clone(), phi)
}
