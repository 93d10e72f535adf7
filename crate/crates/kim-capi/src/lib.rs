//! C ABI for the kim numerical laboratory.
//!
//! Handles are opaque pointers owned by the library; every constructor has
//! a matching `_free`. Functions return a [`KimStatus`]; on any status
//! other than `Ok` the thread-local message from [`kim_last_error`]
//! describes the failure. Optional numeric outputs use NaN for "absent"
//! (for example `e1` on a Ricci-flat background).
//!
//! The generated header lands in `include/kim.h` at build time.
//!
//! Safety contract for every `unsafe extern` function: handle pointers
//! must be null or values previously returned by this library and not yet
//! freed; buffer pointers must reference `len` readable (or writable)
//! doubles. Null handles are caught and reported as `NullArgument`.

#![allow(clippy::missing_safety_doc)]

use kim::dynamics::{ricci_iteration_run, IterationConfig, IterationTrace, Verdict};
use kim::energy::{functional_report, mto_audit};
use kim::grid::{BackgroundGeometry, BackgroundKind, F0Spec, Potential, Symmetry};
use kim::metric::{ricci_index, ricci_inverse_fano, ricci_inverse_general, RicciIndex};
use kim::{KimError, MetricState, TwistedFieldSpec};
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

/// Status codes; aligned with the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum KimStatus {
    Ok = 0,
    SolverFailure = 2,
    PositivityViolation = 3,
    BadInput = 4,
    NullArgument = 5,
    InternalPanic = 6,
}

/// Opaque background geometry handle.
pub struct KimBackground {
    inner: Arc<BackgroundGeometry>,
}

/// Opaque metric handle.
pub struct KimMetric {
    inner: MetricState,
}

/// Opaque iteration trace handle.
pub struct KimTrace {
    inner: IterationTrace,
}

/// One per-step record of an iteration trace.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct KimStepRecord {
    pub k: usize,
    pub sup_eta: f64,
    pub inf_eta: f64,
    pub sup_psi: f64,
    pub inf_psi: f64,
    pub e0: f64,
    /// NaN when undefined (mu = 0).
    pub e1: f64,
    pub f_mu: f64,
    pub i: f64,
    pub j: f64,
    pub min_ricci_ratio: f64,
    pub newton_iters: u32,
    pub residual: f64,
    /// NaN for untwisted runs.
    pub e0_twisted: f64,
    pub normalization_constant: f64,
}

/// Energy functionals of a metric pair.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct KimEnergyReport {
    pub i: f64,
    pub j: f64,
    pub i0: f64,
    pub i1: f64,
    pub i_minus_j: f64,
    pub e0: f64,
    /// NaN when undefined (mu = 0).
    pub e1: f64,
    pub f_mu: f64,
    /// NaN when no twist was requested.
    pub e0_twisted: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &KimError) -> KimStatus {
    match err {
        KimError::SolverFailure(_) => KimStatus::SolverFailure,
        KimError::PositivityViolation(_) => KimStatus::PositivityViolation,
        KimError::BadInput(_) | KimError::Io(_) => KimStatus::BadInput,
    }
}

fn guard<F: FnOnce() -> KimStatus>(f: F) -> KimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            KimStatus::InternalPanic
        }
    }
}

fn fail(err: KimError) -> KimStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null_arg(name: &str) -> KimStatus {
    set_error(&format!("null argument: {name}"));
    KimStatus::NullArgument
}

macro_rules! nonnull {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return null_arg($name),
        }
    };
}

fn emit<T>(out: *mut *mut T, value: T) -> KimStatus {
    if out.is_null() {
        return null_arg("out");
    }
    unsafe {
        *out = Box::into_raw(Box::new(value));
    }
    KimStatus::Ok
}

/// ABI revision of this header.
#[no_mangle]
pub extern "C" fn kim_abi_version() -> u32 {
    1
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kim_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Round-sphere background of volume `volume`, `n` quadrature nodes;
/// `even` restricts to even data.
#[no_mangle]
pub unsafe extern "C" fn kim_background_sphere(
    n: usize,
    volume: f64,
    even: bool,
    out: *mut *mut KimBackground,
) -> KimStatus {
    guard(|| {
        let sym = if even { Symmetry::EvenInS } else { Symmetry::None };
        match BackgroundGeometry::build(BackgroundKind::SphereSymmetric, n, volume, None, sym) {
            Ok(bg) => emit(out, KimBackground { inner: bg }),
            Err(e) => fail(e),
        }
    })
}

/// Flat torus background on an `n x n` grid.
#[no_mangle]
pub unsafe extern "C" fn kim_background_torus(
    n: usize,
    volume: f64,
    out: *mut *mut KimBackground,
) -> KimStatus {
    guard(|| {
        match BackgroundGeometry::build(BackgroundKind::Torus, n, volume, None, Symmetry::None) {
            Ok(bg) => emit(out, KimBackground { inner: bg }),
            Err(e) => fail(e),
        }
    })
}

/// Synthetic negative-mode background with a seeded band-limited
/// prescribed potential.
#[no_mangle]
pub unsafe extern "C" fn kim_background_synthetic(
    n: usize,
    volume: f64,
    f0_seed: u64,
    f0_band: u32,
    f0_amp: f64,
    out: *mut *mut KimBackground,
) -> KimStatus {
    guard(|| {
        let spec = F0Spec::seeded(f0_seed, f0_band, f0_amp);
        match BackgroundGeometry::build(
            BackgroundKind::SyntheticNegative,
            n,
            volume,
            Some(&spec),
            Symmetry::None,
        ) {
            Ok(bg) => emit(out, KimBackground { inner: bg }),
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn kim_background_free(bg: *mut KimBackground) {
    if !bg.is_null() {
        drop(unsafe { Box::from_raw(bg) });
    }
}

/// Number of grid nodes (sphere: n, torus: n^2).
#[no_mangle]
pub unsafe extern "C" fn kim_background_node_count(bg: *const KimBackground) -> usize {
    unsafe { bg.as_ref() }.map(|b| b.inner.node_count()).unwrap_or(0)
}

#[no_mangle]
pub unsafe extern "C" fn kim_background_volume(bg: *const KimBackground) -> f64 {
    unsafe { bg.as_ref() }.map(|b| b.inner.volume()).unwrap_or(f64::NAN)
}

/// Einstein proportionality constant of the background class.
#[no_mangle]
pub unsafe extern "C" fn kim_background_mu(bg: *const KimBackground) -> f64 {
    unsafe { bg.as_ref() }.map(|b| b.inner.mu()).unwrap_or(f64::NAN)
}

/// The background metric itself.
#[no_mangle]
pub unsafe extern "C" fn kim_metric_flat(
    bg: *const KimBackground,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let bg = nonnull!(bg, "bg");
        emit(out, KimMetric { inner: MetricState::base(bg.inner.clone()) })
    })
}

/// Metric from raw potential values (`len` must match the node count);
/// the data is mean-normalized and validated for positivity.
#[no_mangle]
pub unsafe extern "C" fn kim_metric_from_potential(
    bg: *const KimBackground,
    values: *const f64,
    len: usize,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let bg = nonnull!(bg, "bg");
        if values.is_null() {
            return null_arg("values");
        }
        let slice = unsafe { std::slice::from_raw_parts(values, len) };
        let pot = match Potential::new(bg.inner.clone(), slice.to_vec()) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match MetricState::new(pot) {
            Ok(m) => emit(out, KimMetric { inner: m }),
            Err(e) => fail(e),
        }
    })
}

/// Deterministic seeded band-limited metric.
#[no_mangle]
pub unsafe extern "C" fn kim_metric_random(
    bg: *const KimBackground,
    seed: u64,
    band: u32,
    amplitude: f64,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let bg = nonnull!(bg, "bg");
        let pot = match kim::random_potential(&bg.inner, seed, band, amplitude) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match MetricState::new(pot) {
            Ok(m) => emit(out, KimMetric { inner: m }),
            Err(e) => fail(e),
        }
    })
}

/// Möbius-dilation pullback of the round metric (sphere only).
#[no_mangle]
pub unsafe extern "C" fn kim_metric_dilation(
    bg: *const KimBackground,
    lambda: f64,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let bg = nonnull!(bg, "bg");
        let pot = match kim::dilation_pullback_potential(&bg.inner, lambda) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match MetricState::new(pot) {
            Ok(m) => emit(out, KimMetric { inner: m }),
            Err(e) => fail(e),
        }
    })
}

/// Copy the potential into a caller buffer of exactly `len` entries.
#[no_mangle]
pub unsafe extern "C" fn kim_metric_potential(
    m: *const KimMetric,
    out: *mut f64,
    len: usize,
) -> KimStatus {
    guard(|| {
        let m = nonnull!(m, "metric");
        if out.is_null() {
            return null_arg("out");
        }
        let values = m.inner.potential().values();
        if len != values.len() {
            set_error(&format!("buffer holds {len} entries, grid has {}", values.len()));
            return KimStatus::BadInput;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(values.as_ptr(), out, len);
        }
        KimStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn kim_metric_min_density(m: *const KimMetric) -> f64 {
    unsafe { m.as_ref() }.map(|m| m.inner.min_density()).unwrap_or(f64::NAN)
}

#[no_mangle]
pub unsafe extern "C" fn kim_metric_min_ricci_ratio(m: *const KimMetric) -> f64 {
    unsafe { m.as_ref() }.map(|m| m.inner.min_ricci_ratio()).unwrap_or(f64::NAN)
}

#[no_mangle]
pub unsafe extern "C" fn kim_metric_free(m: *mut KimMetric) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Inverse Ricci operator (anticanonical sphere).
#[no_mangle]
pub unsafe extern "C" fn kim_ricci_inverse(
    m: *const KimMetric,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let m = nonnull!(m, "metric");
        match ricci_inverse_fano(m.inner.background(), m.inner.potential()) {
            Ok(r) => emit(out, KimMetric { inner: r }),
            Err(e) => fail(e),
        }
    })
}

/// Generalized inverse Ricci operator (any background).
#[no_mangle]
pub unsafe extern "C" fn kim_ricci_inverse_general(
    m: *const KimMetric,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let m = nonnull!(m, "metric");
        match ricci_inverse_general(&m.inner) {
            Ok(r) => emit(out, KimMetric { inner: r }),
            Err(e) => fail(e),
        }
    })
}

/// Ricci index capped at `cap`; `at_least` is set when the cap was hit.
#[no_mangle]
pub unsafe extern "C" fn kim_ricci_index(
    m: *const KimMetric,
    cap: u32,
    out_index: *mut u32,
    out_at_least: *mut bool,
) -> KimStatus {
    guard(|| {
        let m = nonnull!(m, "metric");
        if out_index.is_null() || out_at_least.is_null() {
            return null_arg("out");
        }
        match ricci_index(&m.inner, cap) {
            Ok(RicciIndex::Exactly(k)) => unsafe {
                *out_index = k;
                *out_at_least = false;
                KimStatus::Ok
            },
            Ok(RicciIndex::AtLeast(k)) => unsafe {
                *out_index = k;
                *out_at_least = true;
                KimStatus::Ok
            },
            Err(e) => fail(e),
        }
    })
}

/// Run the time `tau` iteration (`twist_beta = 0` for the plain dynamics).
#[no_mangle]
pub unsafe extern "C" fn kim_iterate(
    start: *const KimMetric,
    tau: f64,
    steps: usize,
    twist_beta: f64,
    nonstandard_branch: bool,
    out: *mut *mut KimTrace,
) -> KimStatus {
    guard(|| {
        let start = nonnull!(start, "start");
        let mut cfg = IterationConfig::new(tau, steps);
        cfg.nonstandard_branch = nonstandard_branch;
        if twist_beta != 0.0 {
            cfg.twist = match TwistedFieldSpec::new(twist_beta) {
                Ok(x) => Some(x),
                Err(e) => return fail(e),
            };
        }
        match ricci_iteration_run(&start.inner, &cfg) {
            Ok(trace) => emit(out, KimTrace { inner: trace }),
            Err(e) => fail(e),
        }
    })
}

/// Number of recorded steps.
#[no_mangle]
pub unsafe extern "C" fn kim_trace_len(t: *const KimTrace) -> usize {
    unsafe { t.as_ref() }.map(|t| t.inner.records.len()).unwrap_or(0)
}

/// 0 converged, 1 max-steps, 2 solver-failure, -1 on a null handle.
#[no_mangle]
pub unsafe extern "C" fn kim_trace_verdict(t: *const KimTrace) -> i32 {
    match unsafe { t.as_ref() } {
        Some(t) => match t.inner.verdict {
            Verdict::Converged => 0,
            Verdict::MaxSteps => 1,
            Verdict::SolverFailure => 2,
        },
        None => -1,
    }
}

/// Copy record `k` (zero-based) into `out`.
#[no_mangle]
pub unsafe extern "C" fn kim_trace_record(
    t: *const KimTrace,
    k: usize,
    out: *mut KimStepRecord,
) -> KimStatus {
    guard(|| {
        let t = nonnull!(t, "trace");
        if out.is_null() {
            return null_arg("out");
        }
        let Some(r) = t.inner.records.get(k) else {
            set_error(&format!("record {k} out of range ({} steps)", t.inner.records.len()));
            return KimStatus::BadInput;
        };
        let rec = KimStepRecord {
            k: r.k,
            sup_eta: r.sup_eta,
            inf_eta: r.inf_eta,
            sup_psi: r.sup_psi,
            inf_psi: r.inf_psi,
            e0: r.e0,
            e1: r.e1.unwrap_or(f64::NAN),
            f_mu: r.f_mu,
            i: r.i,
            j: r.j,
            min_ricci_ratio: r.min_ricci_ratio,
            newton_iters: r.newton_iters,
            residual: r.residual,
            e0_twisted: r.e0_twisted.unwrap_or(f64::NAN),
            normalization_constant: r.normalization_constant,
        };
        unsafe {
            *out = rec;
        }
        KimStatus::Ok
    })
}

/// The final state of a run.
#[no_mangle]
pub unsafe extern "C" fn kim_trace_final_metric(
    t: *const KimTrace,
    out: *mut *mut KimMetric,
) -> KimStatus {
    guard(|| {
        let t = nonnull!(t, "trace");
        emit(out, KimMetric { inner: t.inner.final_state.clone() })
    })
}

#[no_mangle]
pub unsafe extern "C" fn kim_trace_free(t: *mut KimTrace) {
    if !t.is_null() {
        drop(unsafe { Box::from_raw(t) });
    }
}

/// All energy functionals of the pair `(a, b)`; `twist_beta = 0` skips the
/// twisted energy.
#[no_mangle]
pub unsafe extern "C" fn kim_energy_report(
    a: *const KimMetric,
    b: *const KimMetric,
    twist_beta: f64,
    out: *mut KimEnergyReport,
) -> KimStatus {
    guard(|| {
        let a = nonnull!(a, "a");
        let b = nonnull!(b, "b");
        if out.is_null() {
            return null_arg("out");
        }
        let twist = if twist_beta != 0.0 {
            match TwistedFieldSpec::new(twist_beta) {
                Ok(x) => Some(x),
                Err(e) => return fail(e),
            }
        } else {
            None
        };
        match functional_report(&a.inner, &b.inner, twist.as_ref()) {
            Ok(r) => {
                unsafe {
                    *out = KimEnergyReport {
                        i: r.i,
                        j: r.j,
                        i0: r.i0,
                        i1: r.i1,
                        i_minus_j: r.i_minus_j,
                        e0: r.e0,
                        e1: r.e1.unwrap_or(f64::NAN),
                        f_mu: r.f_mu,
                        e0_twisted: r.e0_twisted.unwrap_or(f64::NAN),
                    };
                }
                KimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Audit the Moser-Trudinger-Onofri inequality for raw potential values
/// (positivity of the induced form is not required).
#[no_mangle]
pub unsafe extern "C" fn kim_mto_audit(
    bg: *const KimBackground,
    phi: *const f64,
    len: usize,
    out_lhs: *mut f64,
    out_rhs: *mut f64,
    out_margin: *mut f64,
) -> KimStatus {
    guard(|| {
        let bg = nonnull!(bg, "bg");
        if phi.is_null() {
            return null_arg("phi");
        }
        if out_lhs.is_null() || out_rhs.is_null() || out_margin.is_null() {
            return null_arg("out");
        }
        let slice = unsafe { std::slice::from_raw_parts(phi, len) };
        let pot = match Potential::new(bg.inner.clone(), slice.to_vec()) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        match mto_audit(&bg.inner, &pot) {
            Ok(a) => {
                unsafe {
                    *out_lhs = a.lhs;
                    *out_rhs = a.rhs;
                    *out_margin = a.margin;
                }
                KimStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
