//! Shared builders and independent oracles for the integration suites.

use kim::grid::{BackgroundGeometry, BackgroundKind, F0Spec, Symmetry};
use kim::MetricState;
use std::sync::Arc;

pub fn sphere(n: usize, v: f64, even: bool) -> Arc<BackgroundGeometry> {
    let sym = if even { Symmetry::EvenInS } else { Symmetry::None };
    BackgroundGeometry::build(BackgroundKind::SphereSymmetric, n, v, None, sym).unwrap()
}

pub fn torus(n: usize, v: f64) -> Arc<BackgroundGeometry> {
    BackgroundGeometry::build(BackgroundKind::Torus, n, v, None, Symmetry::None).unwrap()
}

pub fn synthetic(n: usize, f0_seed: u64, f0_band: u32, f0_amp: f64) -> Arc<BackgroundGeometry> {
    let spec = F0Spec::seeded(f0_seed, f0_band, f0_amp);
    BackgroundGeometry::build(BackgroundKind::SyntheticNegative, n, 1.0, Some(&spec), Symmetry::None)
        .unwrap()
}

pub fn kahler(bg: &Arc<BackgroundGeometry>, seed: u64, band: u32, amp: f64) -> MetricState {
    MetricState::new(kim::random_potential(bg, seed, band, amp).unwrap()).unwrap()
}

/// Second Legendre polynomial.
pub fn p2(s: f64) -> f64 {
    0.5 * (3.0 * s * s - 1.0)
}

/// Independent curvature oracle for the axially symmetric sphere (V = 2)
/// and the one-parameter family `phi = c P2`.
///
/// Uses only hand-derivable facts: the density of `phi = c P2` is
/// `U(s) = 1 - 3 c P2(s)` (from `(1/2) d/ds[(1-s^2) P2'] = -3 P2`), and the
/// Ricci ratio is `r = 1 - (1/2) d/ds[(1-s^2) (log U)']`, evaluated here by
/// central finite differences on a fine off-grid sample. Never touches the
/// spectral machinery under test.
pub fn oracle_min_ricci_p2(c: f64) -> f64 {
    let u = |s: f64| 1.0 - 3.0 * c * p2(s);
    let logu = |s: f64| u(s).ln();
    let h = 1e-5;
    let flux = |s: f64| (1.0 - s * s) * (logu(s + h) - logu(s - h)) / (2.0 * h);
    let mut min_r = f64::INFINITY;
    let samples = 4001;
    for i in 0..samples {
        let s = -0.9995 + 1.999 * i as f64 / (samples - 1) as f64;
        let l0_logu = (flux(s + h) - flux(s - h)) / (2.0 * h) / 2.0;
        min_r = min_r.min(1.0 - l0_logu);
    }
    min_r
}
