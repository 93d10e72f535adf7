//! Exercise the C surface exactly as a foreign binding would: through raw
//! pointers and status codes.

use kim_capi::*;
use std::ffi::CStr;
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kim_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn background_lifecycle_and_errors() {
    unsafe {
        let mut bg: *mut KimBackground = ptr::null_mut();
        assert_eq!(kim_background_sphere(64, 2.0, false, &mut bg), KimStatus::Ok);
        assert_eq!(kim_background_node_count(bg), 64);
        assert_eq!(kim_background_volume(bg), 2.0);
        assert_eq!(kim_background_mu(bg), 1.0);
        kim_background_free(bg);

        let mut bad: *mut KimBackground = ptr::null_mut();
        assert_eq!(
            kim_background_sphere(4, 2.0, false, &mut bad),
            KimStatus::BadInput
        );
        assert!(last_error().contains("resolution"));
        assert_eq!(
            kim_background_sphere(64, 2.0, false, ptr::null_mut()),
            KimStatus::NullArgument
        );
        assert_eq!(kim_abi_version(), 1);
    }
}

#[test]
fn iterate_and_inspect_trace() {
    unsafe {
        let mut bg: *mut KimBackground = ptr::null_mut();
        assert_eq!(kim_background_sphere(48, 2.0, true, &mut bg), KimStatus::Ok);
        let mut m: *mut KimMetric = ptr::null_mut();
        assert_eq!(kim_metric_random(bg, 7, 8, 0.3, &mut m), KimStatus::Ok);
        assert!(kim_metric_min_density(m) > 0.0);

        let mut trace: *mut KimTrace = ptr::null_mut();
        assert_eq!(kim_iterate(m, 1.0, 80, 0.0, false, &mut trace), KimStatus::Ok);
        assert_eq!(kim_trace_verdict(trace), 0, "converged");
        let n = kim_trace_len(trace);
        assert!(n >= 2);
        let mut prev_e0 = f64::INFINITY;
        for k in 0..n {
            let mut rec = std::mem::MaybeUninit::<KimStepRecord>::uninit();
            assert_eq!(kim_trace_record(trace, k, rec.as_mut_ptr()), KimStatus::Ok);
            let rec = rec.assume_init();
            assert!(rec.e0 <= prev_e0 + 1e-11, "energy rose at step {k}");
            prev_e0 = rec.e0;
        }
        let mut rec = std::mem::MaybeUninit::<KimStepRecord>::uninit();
        assert_eq!(
            kim_trace_record(trace, n + 5, rec.as_mut_ptr()),
            KimStatus::BadInput
        );

        let mut end: *mut KimMetric = ptr::null_mut();
        assert_eq!(kim_trace_final_metric(trace, &mut end), KimStatus::Ok);
        let count = kim_background_node_count(bg);
        let mut buf = vec![0.0f64; count];
        assert_eq!(kim_metric_potential(end, buf.as_mut_ptr(), count), KimStatus::Ok);
        assert!(buf.iter().all(|v| v.abs() < 1e-7), "endpoint nearly round");
        // Wrong buffer size rejected.
        assert_eq!(
            kim_metric_potential(end, buf.as_mut_ptr(), count - 1),
            KimStatus::BadInput
        );

        kim_metric_free(end);
        kim_trace_free(trace);
        kim_metric_free(m);
        kim_background_free(bg);
    }
}

#[test]
fn operators_and_energy() {
    unsafe {
        let mut bg: *mut KimBackground = ptr::null_mut();
        assert_eq!(kim_background_sphere(64, 2.0, false, &mut bg), KimStatus::Ok);
        let mut flat: *mut KimMetric = ptr::null_mut();
        assert_eq!(kim_metric_flat(bg, &mut flat), KimStatus::Ok);
        let mut m: *mut KimMetric = ptr::null_mut();
        assert_eq!(kim_metric_random(bg, 11, 6, 0.1, &mut m), KimStatus::Ok);

        let mut inv: *mut KimMetric = ptr::null_mut();
        assert_eq!(kim_ricci_inverse(m, &mut inv), KimStatus::Ok);
        assert!(kim_metric_min_ricci_ratio(inv) > 0.0);

        let mut report = std::mem::MaybeUninit::<KimEnergyReport>::uninit();
        assert_eq!(
            kim_energy_report(flat, m, 0.0, report.as_mut_ptr()),
            KimStatus::Ok
        );
        let report = report.assume_init();
        assert!((report.i - 2.0 * report.j).abs() <= 1e-11 * report.i.abs().max(1e-30));
        assert!(report.e0_twisted.is_nan());
        assert!(!report.e1.is_nan());

        let mut index = 0u32;
        let mut at_least = false;
        assert_eq!(
            kim_ricci_index(flat, 20, &mut index, &mut at_least),
            KimStatus::Ok
        );
        assert!(at_least);
        assert_eq!(index, 20);

        // A far-out amplitude is rejected as a metric but audits fine as a
        // raw potential; the Möbius pullback audits to a zero margin.
        let count = kim_background_node_count(bg);
        let mut phi = vec![0.0f64; count];
        let mut out: *mut KimMetric = ptr::null_mut();
        assert_eq!(
            kim_metric_random(bg, 13, 8, 8.0, &mut out),
            KimStatus::PositivityViolation
        );
        {
            let mut lam: *mut KimMetric = ptr::null_mut();
            assert_eq!(kim_metric_dilation(bg, 2.0, &mut lam), KimStatus::Ok);
            assert_eq!(
                kim_metric_potential(lam, phi.as_mut_ptr(), count),
                KimStatus::Ok
            );
            kim_metric_free(lam);
        }
        let (mut lhs, mut rhs, mut margin) = (0.0, 0.0, 0.0);
        assert_eq!(
            kim_mto_audit(bg, phi.as_ptr(), count, &mut lhs, &mut rhs, &mut margin),
            KimStatus::Ok
        );
        assert!(margin.abs() <= 1e-8, "Möbius margin {margin:e}");

        kim_metric_free(inv);
        kim_metric_free(m);
        kim_metric_free(flat);
        kim_background_free(bg);
    }
}

#[test]
fn twisted_iteration_through_abi() {
    unsafe {
        let mut bg: *mut KimBackground = ptr::null_mut();
        assert_eq!(kim_background_sphere(48, 2.0, false, &mut bg), KimStatus::Ok);
        let mut m: *mut KimMetric = ptr::null_mut();
        assert_eq!(kim_metric_flat(bg, &mut m), KimStatus::Ok);
        let mut trace: *mut KimTrace = ptr::null_mut();
        assert_eq!(kim_iterate(m, 1.0, 12, 0.3, false, &mut trace), KimStatus::Ok);
        let n = kim_trace_len(trace);
        assert!(n >= 2);
        let mut prev = f64::INFINITY;
        for k in 0..n {
            let mut rec = std::mem::MaybeUninit::<KimStepRecord>::uninit();
            assert_eq!(kim_trace_record(trace, k, rec.as_mut_ptr()), KimStatus::Ok);
            let rec = rec.assume_init();
            assert!(!rec.e0_twisted.is_nan());
            assert!(rec.e0_twisted <= prev + 1e-11);
            prev = rec.e0_twisted;
        }
        kim_trace_free(trace);
        kim_metric_free(m);
        kim_background_free(bg);
    }
}
