use std::ffi::{c_char, CStr, CString};
use std::ptr;

use riskdp::document::bundled;
use riskdp_ffi::*;

fn last_error() -> String {
    let p = riskdp_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn distribution(xs: &[f64], ps: &[f64]) -> *mut RiskdpDistribution {
    let mut d = ptr::null_mut();
    let status = unsafe { riskdp_distribution_new(xs.as_ptr(), ps.as_ptr(), xs.len(), &mut d) };
    assert_eq!(status, RiskdpStatus::Ok);
    d
}

fn mdp(name: &str) -> *mut RiskdpMdp {
    let json = CString::new(bundled(name).unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { riskdp_mdp_from_json(json.as_ptr(), &mut m) },
        RiskdpStatus::Ok
    );
    m
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { riskdp_string_free(p) };
    s
}

#[test]
fn risk_measures_on_a_distribution() {
    let d = distribution(&[-2.0, 1.0, 5.0], &[0.2, 0.5, 0.3]);
    let mut out = 0.0;
    unsafe {
        assert_eq!(riskdp_cvar(d, 0.2, &mut out), RiskdpStatus::Ok);
        assert_eq!(out, -2.0);
        assert_eq!(riskdp_var(d, 0.5, &mut out), RiskdpStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(riskdp_lower_quantile(d, 0.2, &mut out), RiskdpStatus::Ok);
        assert_eq!(out, -2.0);
        assert_eq!(riskdp_var(d, 1.0, &mut out), RiskdpStatus::Ok);
        assert_eq!(out, f64::INFINITY);
        assert_eq!(riskdp_evar(d, 1.0, &mut out), RiskdpStatus::Ok);
        assert!((out - 1.6).abs() < 1e-9);
        assert!(riskdp_last_error_message().is_null());
        riskdp_distribution_free(d);
    }
}

#[test]
fn argument_errors_carry_messages() {
    let d = distribution(&[0.0, 1.0], &[0.5, 0.5]);
    let mut out = 0.0;
    unsafe {
        assert_eq!(riskdp_cvar(d, 1.5, &mut out), RiskdpStatus::InvalidArgument);
        assert!(last_error().contains("1.5"));
        assert_eq!(riskdp_cvar(ptr::null(), 0.5, &mut out), RiskdpStatus::NullPointer);
        assert_eq!(riskdp_cvar(d, 0.5, ptr::null_mut()), RiskdpStatus::NullPointer);
        riskdp_distribution_free(d);
        riskdp_distribution_free(ptr::null_mut());
    }
    let mut bad = ptr::null_mut();
    let status = unsafe { riskdp_distribution_new([1.0].as_ptr(), [0.5].as_ptr(), 1, &mut bad) };
    assert_eq!(status, RiskdpStatus::InvalidArgument);
    assert!(bad.is_null());
}

#[test]
fn documents_parse_and_validate() {
    let mut m = ptr::null_mut();
    let broken = CString::new("{ \"states\": [").unwrap();
    assert_eq!(
        unsafe { riskdp_mdp_from_json(broken.as_ptr(), &mut m) },
        RiskdpStatus::ParseError
    );
    let mut doc: serde_json::Value = serde_json::from_str(bundled("mc").unwrap()).unwrap();
    doc["transitions"].as_array_mut().unwrap().pop();
    let invalid = CString::new(doc.to_string()).unwrap();
    assert_eq!(
        unsafe { riskdp_mdp_from_json(invalid.as_ptr(), &mut m) },
        RiskdpStatus::ValidationError
    );
    assert!(m.is_null());
    let m = mdp("mc");
    assert_eq!(unsafe { riskdp_mdp_num_states(m) }, 2);
    unsafe { riskdp_mdp_free(m) };
}

#[test]
fn optimize_and_evaluate() {
    let m = mdp("mc");
    let (mut value, mut policy) = (f64::NAN, ptr::null_mut());
    unsafe {
        let status = riskdp_optimize(m, RiskdpMeasure::Cvar as i32, 0.5, &mut value, &mut policy);
        assert_eq!(status, RiskdpStatus::Ok);
        assert_eq!(value, 0.0);
        let described = take_string(policy);
        assert_eq!(described, "s1=a2,s2=a1");
        let text = CString::new(described).unwrap();
        let mut again = f64::NAN;
        let status = riskdp_evaluate(m, text.as_ptr(), RiskdpMeasure::Cvar as i32, 0.5, &mut again);
        assert_eq!(status, RiskdpStatus::Ok);
        assert_eq!(again, value);
        assert_eq!(
            riskdp_evaluate(m, ptr::null(), 9, 0.5, &mut again),
            RiskdpStatus::InvalidArgument
        );
        riskdp_mdp_free(m);
    }
}

#[test]
fn decomposition_reports_as_json() {
    let m = mdp("mc");
    let scheme = CString::new("cvar-opt").unwrap();
    let mut json = ptr::null_mut();
    unsafe {
        let status = riskdp_decompose_json(m, scheme.as_ptr(), 0.5, ptr::null(), 0.0, &mut json);
        assert_eq!(status, RiskdpStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert!((report["value"].as_f64().unwrap() - 4.0).abs() < 1e-9);

        let eval = CString::new("cvar-eval").unwrap();
        let status = riskdp_decompose_json(m, eval.as_ptr(), 0.5, ptr::null(), 0.0, &mut json);
        assert_eq!(status, RiskdpStatus::InvalidArgument);
        assert!(last_error().contains("cvar-eval"));

        let unknown = CString::new("mean").unwrap();
        let status = riskdp_decompose_json(m, unknown.as_ptr(), 0.5, ptr::null(), 0.0, &mut json);
        assert_eq!(status, RiskdpStatus::InvalidArgument);
        riskdp_mdp_free(m);
    }
}

#[test]
fn errors_are_per_thread() {
    let mut out = 0.0;
    assert_eq!(
        unsafe { riskdp_cvar(ptr::null(), 0.5, &mut out) },
        RiskdpStatus::NullPointer
    );
    std::thread::spawn(|| assert!(riskdp_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(last_error().contains("null"));
}
