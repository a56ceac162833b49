use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use promptpolicy::kg::{save_snapshot, EntityKind, EntityRef, KgBuilder, Relation};
use promptpolicy::meta::ArtifactMeta;
use promptpolicy_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { pp_string_free(s) };
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pp_last_error_message()) }.to_str().unwrap().to_string()
}

#[test]
fn scalar_helpers() {
    let d = pp_haversine_km(0.0, 0.0, 0.0, 1.0);
    assert!((d - 6371.0 * std::f64::consts::PI / 180.0).abs() < 1e-9);
    assert!((pp_reward_combine(1.0, 0.6, 0.0, 0.2) - 0.35).abs() < 1e-15);
    let v = unsafe { CStr::from_ptr(pp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_response_ok_and_violation() {
    let cands = c(r#"["a", "b", "c"]"#);
    let mut out = ptr::null_mut();
    let s = unsafe { pp_parse_response(c(r#"{"ranking": ["b", "a"]}"#).as_ptr(), cands.as_ptr(), &mut out) };
    assert_eq!(s, PpStatus::Ok);
    assert_eq!(take(out), r#"{"ranking":["b","a"]}"#);

    let s = unsafe { pp_parse_response(c(r#"{"ranking": ["z"]}"#).as_ptr(), cands.as_ptr(), &mut out) };
    assert_eq!(s, PpStatus::Violation);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["reason"], "out_of_candidate");
    assert!(!last_error().is_empty());

    let s = unsafe { pp_parse_response(ptr::null(), cands.as_ptr(), &mut out) };
    assert_eq!(s, PpStatus::NullArgument);
    let s = unsafe { pp_parse_response(c("{}").as_ptr(), c("not json").as_ptr(), &mut out) };
    assert_eq!(s, PpStatus::Parse);
}

#[test]
fn posterior_lifecycle() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { pp_posterior_new(2, 1.0, 0.25, &mut p) }, PpStatus::Ok);
    assert_eq!(unsafe { pp_posterior_dim(p) }, 2);
    assert_eq!(unsafe { pp_posterior_dim(ptr::null()) }, 0);

    // mean after one update of x = e1, r = 0.5 with unit prior is 0.25 e1
    let x = [1.0, 0.0];
    assert_eq!(unsafe { pp_posterior_update(p, x.as_ptr(), 2, 0.5) }, PpStatus::Ok);
    let mut m = [0.0; 2];
    assert_eq!(unsafe { pp_posterior_mean(p, m.as_mut_ptr(), 2) }, PpStatus::Ok);
    assert!((m[0] - 0.25).abs() < 1e-12 && m[1].abs() < 1e-12);

    assert_eq!(unsafe { pp_posterior_update(p, x.as_ptr(), 3, 0.5) }, PpStatus::InvalidArgument);
    assert_eq!(unsafe { pp_posterior_update(p, x.as_ptr(), 2, 0.9) }, PpStatus::InvalidArgument);
    assert!(last_error().contains("0.9"));

    let feats = [0.0, 1.0, 1.0, 0.0];
    let mut idx = 9;
    assert_eq!(unsafe { pp_posterior_select(p, feats.as_ptr(), 2, 1, 0, &mut idx) }, PpStatus::Ok);
    assert_eq!(idx, 1);
    let mut a = 9;
    let mut b = 9;
    unsafe {
        pp_posterior_select(p, feats.as_ptr(), 2, 0, 7, &mut a);
        pp_posterior_select(p, feats.as_ptr(), 2, 0, 7, &mut b);
    }
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("p.bin").to_str().unwrap());
    assert_eq!(unsafe { pp_posterior_save(p, path.as_ptr()) }, PpStatus::Ok);
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { pp_posterior_load(path.as_ptr(), &mut q) }, PpStatus::Ok);
    let mut m2 = [0.0; 2];
    unsafe { pp_posterior_mean(q, m2.as_mut_ptr(), 2) };
    assert_eq!(m, m2);
    let missing = c(dir.path().join("none.bin").to_str().unwrap());
    assert_eq!(unsafe { pp_posterior_load(missing.as_ptr(), &mut q) }, PpStatus::Io);
    unsafe {
        pp_posterior_free(p);
        pp_posterior_free(q);
        pp_posterior_free(ptr::null_mut());
    }
}

#[test]
fn kg_discovery_and_card() {
    let km = 180.0 / (6371.0 * std::f64::consts::PI);
    let mut b = KgBuilder::new();
    b.add_poi("p0", 0.0, 0.0).add_poi("p1", km, 0.0).add_poi("p2", 2.0 * km, 0.0);
    let g = EntityRef::new(EntityKind::Grid, "g0");
    for (h, r, t) in [
        (EntityRef::user("u"), Relation::Visited, EntityRef::poi("p0")),
        (EntityRef::poi("p0"), Relation::InGrid, g.clone()),
        (EntityRef::poi("p1"), Relation::InGrid, g.clone()),
        (EntityRef::poi("p0"), Relation::Near, EntityRef::poi("p2")),
    ] {
        b.add_triple(h, r, t).unwrap();
    }
    let kg = b.build();
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("kg.ndjson");
    save_snapshot(&file, &kg, &ArtifactMeta::detached(1), 10.0).unwrap();

    let mut h = ptr::null_mut();
    assert_eq!(unsafe { pp_kg_load(c(file.to_str().unwrap()).as_ptr(), &mut h) }, PpStatus::Ok);
    let mut out = ptr::null_mut();
    let s = unsafe { pp_kg_discover(h, c("u").as_ptr(), c("p0").as_ptr(), ptr::null(), &mut out) };
    assert_eq!(s, PpStatus::Ok);
    let cands: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    let ids: Vec<&str> = cands.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["p1", "p2"]);

    let s = unsafe { pp_kg_evidence_card(h, c("u").as_ptr(), c("p1").as_ptr(), c("p0").as_ptr(), ptr::null(), &mut out) };
    assert_eq!(s, PpStatus::Ok);
    assert!(take(out).contains("Shares g0 grid cell"));

    let s = unsafe { pp_kg_discover(h, c("u").as_ptr(), c("nowhere").as_ptr(), ptr::null(), &mut out) };
    assert_eq!(s, PpStatus::NotFound);
    let s = unsafe { pp_kg_discover(h, c("u").as_ptr(), c("p0").as_ptr(), c(r#"{"bogus": 1}"#).as_ptr(), &mut out) };
    assert_eq!(s, PpStatus::Parse);
    unsafe { pp_kg_free(h) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/promptpolicy.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct PpPosterior PpPosterior;"));
    assert!(h.contains("PP_STATUS_VIOLATION = 7"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"promptpolicy.h\"\nint main(void) { PpPosterior *p = 0; PpStatus s = pp_posterior_new(3, 1.0, 0.25, &p); \
         return s == PP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header().parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
