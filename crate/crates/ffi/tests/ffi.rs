use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mgmp_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { mgmp_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn build(levels: usize) -> *mut MgmpHierarchy {
    let mut h = ptr::null_mut();
    let st = unsafe { mgmp_hierarchy_build_fem1d(5, 5, levels, true, &mut h) };
    assert_eq!(st, MgmpStatus::Ok, "{}", last_error());
    assert!(!h.is_null());
    h
}

#[test]
fn hierarchy_queries_and_round_trip() {
    let h = build(3);
    let mut nl = 0;
    assert_eq!(unsafe { mgmp_hierarchy_num_levels(h, &mut nl) }, MgmpStatus::Ok);
    assert_eq!(nl, 3);
    let mut dims = vec![];
    for j in 0..nl {
        let mut n = 0;
        assert_eq!(unsafe { mgmp_hierarchy_level_dim(h, j, &mut n) }, MgmpStatus::Ok);
        dims.push(n);
    }
    assert_eq!(dims, vec![24, 49, 99]);
    let mut n = 0;
    assert_eq!(unsafe { mgmp_hierarchy_level_dim(h, 3, &mut n) }, MgmpStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { mgmp_hierarchy_save(h, path.as_ptr()) }, MgmpStatus::Ok);
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { mgmp_hierarchy_load(path.as_ptr(), &mut g) }, MgmpStatus::Ok);
    let mut b1 = vec![0.0; 99];
    let mut b2 = vec![0.0; 99];
    assert_eq!(unsafe { mgmp_hierarchy_rhs(h, b1.as_mut_ptr(), 99) }, MgmpStatus::Ok);
    assert_eq!(unsafe { mgmp_hierarchy_rhs(g, b2.as_mut_ptr(), 99) }, MgmpStatus::Ok);
    assert_eq!(b1, b2);
    assert_eq!(unsafe { mgmp_hierarchy_rhs(g, b2.as_mut_ptr(), 98) }, MgmpStatus::DimensionMismatch);
    unsafe {
        mgmp_hierarchy_free(g);
        mgmp_hierarchy_free(h);
        mgmp_hierarchy_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported_not_panicked() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { mgmp_hierarchy_build_fem1d(5, 5, 0, true, &mut h) }, MgmpStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { mgmp_hierarchy_num_levels(ptr::null(), ptr::null_mut()) }, MgmpStatus::NullPointer);
    let missing = CString::new("/definitely/not/here").unwrap();
    assert_eq!(unsafe { mgmp_hierarchy_load(missing.as_ptr(), &mut h) }, MgmpStatus::Io);
    let h = build(2);
    let bad = CString::new("d-d-x-d").unwrap();
    let mut s = ptr::null_mut();
    let st = unsafe { mgmp_solver_new(h, bad.as_ptr(), MgmpSmoother::Ic0, 0.0, false, &mut s) };
    assert_eq!(st, MgmpStatus::InvalidArgument);
    assert!(s.is_null());
    unsafe { mgmp_hierarchy_free(h) };
}

#[test]
fn solvers_converge_through_the_c_abi() {
    let h = build(5);
    let mut n = 0;
    unsafe { mgmp_hierarchy_level_dim(h, 4, &mut n) };
    let mut b = vec![0.0; n];
    unsafe { mgmp_hierarchy_rhs(h, b.as_mut_ptr(), n) };
    let stop = CString::new("relres:1e-8").unwrap();
    for (variant, symmetric) in [("d-d-d-d", false), ("d-d-s-s", true)] {
        let name = CString::new(variant).unwrap();
        let mut s = ptr::null_mut();
        let st = unsafe { mgmp_solver_new(h, name.as_ptr(), MgmpSmoother::Ic0, 0.0, symmetric, &mut s) };
        assert_eq!(st, MgmpStatus::Ok, "{}", last_error());
        let mut dim = 0;
        unsafe { mgmp_solver_dim(s, &mut dim) };
        assert_eq!(dim, n);
        let mut y = vec![0.0; n];
        assert_eq!(unsafe { mgmp_solver_vcycle(s, b.as_ptr(), y.as_mut_ptr(), n) }, MgmpStatus::Ok);
        assert!(y.iter().any(|v| *v != 0.0));
        let mut x = vec![0.0; n];
        let mut sum = MgmpSolveSummary {
            iterations: 0,
            converged: false,
            reason: MgmpStopReason::CycleError,
            final_rel_residual: 0.0,
            plateau: 0.0,
        };
        let solve = if symmetric { mgmp_solver_pcg } else { mgmp_solver_ir };
        let st = unsafe { solve(s, b.as_ptr(), x.as_mut_ptr(), n, stop.as_ptr(), 200, &mut sum) };
        assert_eq!(st, MgmpStatus::Ok, "{}", last_error());
        assert!(sum.converged, "{variant}: {sum:?}");
        assert_eq!(sum.reason, MgmpStopReason::Converged);
        assert!(sum.final_rel_residual <= 1e-8);
        assert!(sum.plateau.is_nan());
        unsafe { mgmp_solver_free(s) };
    }
    unsafe { mgmp_hierarchy_free(h) };
}

#[test]
fn scalar_rounding() {
    let h = CString::new("h").unwrap();
    let mut y = 0.0;
    assert_eq!(unsafe { mgmp_round_scalar(1.0 + 2f64.powi(-11), h.as_ptr(), &mut y) }, MgmpStatus::Ok);
    assert_eq!(y, 1.0);
    assert_eq!(unsafe { mgmp_round_scalar(1e6, h.as_ptr(), &mut y) }, MgmpStatus::Overflow);
    let mut u = 0.0;
    assert_eq!(unsafe { mgmp_unit_roundoff(h.as_ptr(), &mut u) }, MgmpStatus::Ok);
    assert_eq!(u, 2f64.powi(-11));
    let bits = CString::new("bits-8").unwrap();
    unsafe { mgmp_unit_roundoff(bits.as_ptr(), &mut u) };
    assert_eq!(u, 2f64.powi(-8));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("mgmp.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "mgmp_hierarchy_build_fem1d",
        "mgmp_hierarchy_load",
        "mgmp_hierarchy_free",
        "mgmp_solver_new",
        "mgmp_solver_vcycle",
        "mgmp_solver_ir",
        "mgmp_solver_pcg",
        "mgmp_round_scalar",
        "mgmp_last_error_message",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, "#include \"mgmp.h\"\nint main(void) { return MGMP_STATUS_OK; }\n").unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; syntax check skipped"),
    }
}
