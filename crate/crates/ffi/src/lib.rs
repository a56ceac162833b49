//! C ABI over the core library.
//!
//! Conventions: every fallible function returns a [`PpStatus`]; on failure
//! the message is available from [`pp_last_error_message`] on the same
//! thread until the next call. Objects are opaque handles released with
//! their `_free` function. Strings returned through `char **` out-params
//! are owned by the caller and released with [`pp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use promptpolicy::discovery::{discover_candidates, enumerate_evidence_paths, DiscoveryConfig};
use promptpolicy::evidence::build_card;
use promptpolicy::ingest::CheckIn;
use promptpolicy::kg::{haversine, load_snapshot, Kg};
use promptpolicy::policy::{combine, PosteriorState};
use promptpolicy::prompt::parse_response;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Status codes shared by all fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Numeric = 5,
    NotFound = 6,
    /// The model reply failed validation; the out-param holds the violation.
    Violation = 7,
    Panic = 99,
}

/// Opaque bandit posterior.
pub struct PpPosterior(PosteriorState);

/// Opaque knowledge-graph snapshot.
pub struct PpKg(Kg);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: PpStatus, msg: impl Into<String>) -> PpStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PpStatus) -> PpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == PpStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(PpStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, PpStatus> {
    if p.is_null() {
        return Err(fail(PpStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(PpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> PpStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            PpStatus::Ok
        }
        Err(_) => fail(PpStatus::InvalidArgument, "string contains NUL"),
    }
}

fn core_status(e: &promptpolicy::Error) -> PpStatus {
    use promptpolicy::Error;
    match e {
        Error::Io { .. } => PpStatus::Io,
        Error::Format { .. } => PpStatus::Parse,
        Error::Policy(_) => PpStatus::Numeric,
        _ => PpStatus::InvalidArgument,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread; empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn pp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Great-circle distance in kilometres.
#[no_mangle]
pub extern "C" fn pp_haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine((lat1, lon1), (lat2, lon2))
}

/// Scalar reward from its four components.
#[no_mangle]
pub extern "C" fn pp_reward_combine(accuracy: f64, diversity: f64, violation: f64, cost: f64) -> f64 {
    combine(accuracy, diversity, violation, cost)
}

/// Validates a model reply against a JSON array of candidate ids. On
/// success `*out_json` holds `{"ranking": [...]}`; on `Violation` it holds
/// `{"reason": ..., "detail": ...}`.
///
/// # Safety
/// Pointers must be valid NUL-terminated strings; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_parse_response(
    reply: *const c_char,
    candidates_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PpStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(PpStatus::NullArgument, "out_json is null");
        }
        let reply = match str_arg(reply, "reply") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let cands = match str_arg(candidates_json, "candidates_json") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let ids: Vec<String> = match serde_json::from_str(cands) {
            Ok(v) => v,
            Err(e) => return fail(PpStatus::Parse, format!("candidates_json: {e}")),
        };
        match parse_response(reply, &ids) {
            Ok(r) => write_string(out_json, serde_json::to_string(&r).expect("serializable")),
            Err(v) => {
                set_error(v.to_string());
                match write_string(out_json, serde_json::to_string(&v).expect("serializable")) {
                    PpStatus::Ok => PpStatus::Violation,
                    s => s,
                }
            }
        }
    })
}

/// Creates a prior posterior of dimension `d`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_new(d: usize, lambda_prior: f64, sigma2: f64, out: *mut *mut PpPosterior) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PpStatus::NullArgument, "out is null");
        }
        match PosteriorState::new(d, lambda_prior, sigma2) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(PpPosterior(p)));
                PpStatus::Ok
            }
            Err(e) => fail(PpStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_free(p: *mut PpPosterior) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Feature dimension, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_dim(p: *const PpPosterior) -> usize {
    p.as_ref().map_or(0, |p| p.0.dim())
}

/// Rank-one update with feature vector `x` (length `len`) and reward `r`.
///
/// # Safety
/// `p` must be a live handle and `x` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_update(p: *mut PpPosterior, x: *const f64, len: usize, r: f64) -> PpStatus {
    guard(|| {
        let (Some(p), false) = (p.as_mut(), x.is_null()) else {
            return fail(PpStatus::NullArgument, "null handle or vector");
        };
        if len != p.0.dim() {
            return fail(PpStatus::InvalidArgument, format!("expected {} features, got {len}", p.0.dim()));
        }
        match p.0.update(std::slice::from_raw_parts(x, len), r) {
            Ok(()) => PpStatus::Ok,
            Err(e) => fail(PpStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Writes the posterior mean into `out` (length `len` = dimension).
///
/// # Safety
/// `p` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_mean(p: *const PpPosterior, out: *mut f64, len: usize) -> PpStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return fail(PpStatus::NullArgument, "null handle or buffer");
        };
        if len != p.0.dim() {
            return fail(PpStatus::InvalidArgument, format!("buffer holds {len}, dimension is {}", p.0.dim()));
        }
        match p.0.mean() {
            Ok(m) => {
                std::slice::from_raw_parts_mut(out, len).copy_from_slice(m.as_slice());
                PpStatus::Ok
            }
            Err(e) => fail(PpStatus::Numeric, e.to_string()),
        }
    })
}

/// Picks the row of `features` (`n_actions` rows of `dim` doubles,
/// row-major) with the largest score under θ. θ is the posterior mean when
/// `use_mean` is nonzero, otherwise a Thompson draw seeded by `seed`.
/// Ties keep the lowest index.
///
/// # Safety
/// `p` must be a live handle, `features` must hold `n_actions * dim`
/// doubles, and `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_select(
    p: *const PpPosterior,
    features: *const f64,
    n_actions: usize,
    use_mean: i32,
    seed: u64,
    out_index: *mut usize,
) -> PpStatus {
    guard(|| {
        let (Some(p), false, false) = (p.as_ref(), features.is_null(), out_index.is_null()) else {
            return fail(PpStatus::NullArgument, "null handle or buffer");
        };
        if n_actions == 0 {
            return fail(PpStatus::InvalidArgument, "no actions");
        }
        let d = p.0.dim();
        let theta = if use_mean != 0 {
            p.0.mean()
        } else {
            p.0.sample(&mut ChaCha8Rng::seed_from_u64(seed))
        };
        let theta = match theta {
            Ok(t) => t,
            Err(e) => return fail(PpStatus::Numeric, e.to_string()),
        };
        let rows = std::slice::from_raw_parts(features, n_actions * d);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, row) in rows.chunks_exact(d).enumerate() {
            let v: f64 = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            if !v.is_finite() {
                return fail(PpStatus::Numeric, format!("non-finite score for action {i}"));
            }
            if v > best.1 {
                best = (i, v);
            }
        }
        *out_index = best.0;
        PpStatus::Ok
    })
}

/// Writes a binary checkpoint.
///
/// # Safety
/// `p` must be a live handle and `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_save(p: *const PpPosterior, path: *const c_char) -> PpStatus {
    guard(|| {
        let Some(p) = p.as_ref() else { return fail(PpStatus::NullArgument, "null handle") };
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match p.0.save(Path::new(path), &serde_json::json!({"writer": "ffi"})) {
            Ok(()) => PpStatus::Ok,
            Err(e) => fail(core_status(&e), e.to_string()),
        }
    })
}

/// Loads a checkpoint written by this library or the command-line tool.
///
/// # Safety
/// `path` must be a valid string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_posterior_load(path: *const c_char, out: *mut *mut PpPosterior) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PpStatus::NullArgument, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match PosteriorState::load(Path::new(path)) {
            Ok((p, _)) => {
                *out = Box::into_raw(Box::new(PpPosterior(p)));
                PpStatus::Ok
            }
            Err(e) => fail(core_status(&e), e.to_string()),
        }
    })
}

/// Loads a knowledge-graph snapshot written by `build-kg`.
///
/// # Safety
/// `path` must be a valid string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_kg_load(path: *const c_char, out: *mut *mut PpKg) -> PpStatus {
    guard(|| {
        if out.is_null() {
            return fail(PpStatus::NullArgument, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match load_snapshot(Path::new(path)) {
            Ok((kg, _)) => {
                *out = Box::into_raw(Box::new(PpKg(kg)));
                PpStatus::Ok
            }
            Err(e) => fail(core_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `kg` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pp_kg_free(kg: *mut PpKg) {
    if !kg.is_null() {
        drop(Box::from_raw(kg));
    }
}

unsafe fn discovery_config(json: *const c_char) -> Result<DiscoveryConfig, PpStatus> {
    if json.is_null() {
        return Ok(DiscoveryConfig::default());
    }
    let s = str_arg(json, "config_json")?;
    let cfg: DiscoveryConfig = serde_json::from_str(s).map_err(|e| fail(PpStatus::Parse, format!("config_json: {e}")))?;
    cfg.validate().map_err(|e| fail(PpStatus::InvalidArgument, e))?;
    Ok(cfg)
}

fn last_checkin(kg: &Kg, user: &str, poi: &str) -> Result<CheckIn, PpStatus> {
    let Some((lat, lon)) = kg.poi_coords(poi) else {
        return Err(fail(PpStatus::NotFound, format!("unknown POI {poi}")));
    };
    Ok(CheckIn {
        user_id: user.to_string(),
        poi_id: poi.to_string(),
        category: kg.poi_category(poi).unwrap_or_default().to_string(),
        lat,
        lon,
        utc_time: 0,
        tz_offset_min: 0,
    })
}

/// Candidate discovery for `user` standing at `last_poi`. `config_json` may
/// be null for defaults. `*out_json` receives an array of
/// `{"id", "category", "distance"}` (kilometres).
///
/// # Safety
/// `kg` must be a live handle, strings valid, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_kg_discover(
    kg: *const PpKg,
    user: *const c_char,
    last_poi: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PpStatus {
    guard(|| {
        let (Some(kg), false) = (kg.as_ref(), out_json.is_null()) else {
            return fail(PpStatus::NullArgument, "null handle or out_json");
        };
        let run = || -> Result<String, PpStatus> {
            let user = str_arg(user, "user")?;
            let poi = str_arg(last_poi, "last_poi")?;
            let cfg = discovery_config(config_json)?;
            let last = last_checkin(&kg.0, user, poi)?;
            let c = discover_candidates(&kg.0, user, &last, &cfg).map_err(|e| fail(PpStatus::NotFound, e.to_string()))?;
            Ok(serde_json::to_string(&c).expect("serializable"))
        };
        match run() {
            Ok(s) => write_string(out_json, s),
            Err(s) => s,
        }
    })
}

/// The full evidence card for `poi` as JSON, before any pruning.
///
/// # Safety
/// `kg` must be a live handle, strings valid, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn pp_kg_evidence_card(
    kg: *const PpKg,
    user: *const c_char,
    poi: *const c_char,
    last_poi: *const c_char,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> PpStatus {
    guard(|| {
        let (Some(kg), false) = (kg.as_ref(), out_json.is_null()) else {
            return fail(PpStatus::NullArgument, "null handle or out_json");
        };
        let run = || -> Result<String, PpStatus> {
            let user = str_arg(user, "user")?;
            let poi = str_arg(poi, "poi")?;
            let last = str_arg(last_poi, "last_poi")?;
            let cfg = discovery_config(config_json)?;
            let paths =
                enumerate_evidence_paths(&kg.0, user, poi, &cfg).map_err(|e| fail(PpStatus::NotFound, e.to_string()))?;
            Ok(serde_json::to_string(&build_card(poi, &paths, last)).expect("serializable"))
        };
        match run() {
            Ok(s) => write_string(out_json, s),
            Err(s) => s,
        }
    })
}
