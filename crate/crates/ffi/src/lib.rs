//! C ABI for the antijam simulator.
//!
//! Conventions: constructors return null on failure and record a message
//! retrievable via `aj_last_error`; status-returning calls use the same codes
//! as the CLI (0 ok, 1 usage, 2 invalid config, 3 runtime). Handles are
//! opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::path::Path;
use std::str::FromStr;

use antijam::harness::{self, AgentKind, HarnessError, MetricsRow, Scenario};

pub const AJ_OK: c_int = 0;
pub const AJ_ERR_USAGE: c_int = 1;
pub const AJ_ERR_INVALID: c_int = 2;
pub const AJ_ERR_RUNTIME: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(code: c_int, msg: &str) -> c_int {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
    code
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn harness_code(e: &HarnessError) -> c_int {
    match e {
        HarnessError::Invalid(_) => AJ_ERR_INVALID,
        HarnessError::Io { .. } => AJ_ERR_RUNTIME,
    }
}

/// An owned scenario configuration.
pub struct AjScenario {
    inner: Scenario,
}

/// Per-slot metrics of one finished episode.
pub struct AjMetrics {
    rows: Vec<MetricsRow>,
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn aj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(c) => c.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn aj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, c_int> {
    if p.is_null() {
        return Err(set_error(AJ_ERR_USAGE, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| set_error(AJ_ERR_USAGE, "string is not valid UTF-8"))
}

fn boxed_scenario(res: Result<Scenario, HarnessError>) -> *mut AjScenario {
    match res {
        Ok(inner) => {
            clear_error();
            Box::into_raw(Box::new(AjScenario { inner }))
        }
        Err(e) => {
            set_error(harness_code(&e), &e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Builds a built-in scenario ("apartment" or "office"); null if unknown.
///
/// # Safety
/// `name` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_builtin(name: *const c_char) -> *mut AjScenario {
    let name = match cstr(name) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    match Scenario::builtin(name) {
        Some(sc) => boxed_scenario(Ok(sc)),
        None => {
            set_error(AJ_ERR_USAGE, &format!("unknown built-in scenario '{name}'"));
            std::ptr::null_mut()
        }
    }
}

/// Loads and validates a scenario file; null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_load(path: *const c_char) -> *mut AjScenario {
    let path = match cstr(path) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    boxed_scenario(Scenario::load(Path::new(path)))
}

/// Parses a scenario from TOML text; null on failure.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_from_toml(text: *const c_char) -> *mut AjScenario {
    let text = match cstr(text) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    boxed_scenario(Scenario::from_toml_str(text))
}

/// # Safety
/// `sc` must come from an `aj_scenario_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_free(sc: *mut AjScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_set_seed(sc: *mut AjScenario, seed: u64) -> c_int {
    if sc.is_null() {
        return set_error(AJ_ERR_USAGE, "null scenario handle");
    }
    (*sc).inner.seed = seed;
    AJ_OK
}

/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_set_slots(sc: *mut AjScenario, slots: usize) -> c_int {
    if sc.is_null() {
        return set_error(AJ_ERR_USAGE, "null scenario handle");
    }
    if slots == 0 {
        return set_error(AJ_ERR_INVALID, "slots_per_episode: must be >= 1");
    }
    let s = &mut (*sc).inner;
    s.slots_per_episode = slots;
    s.summary_slots = s.summary_slots.min(slots);
    AJ_OK
}

/// Selects the defender: "greedy", "qlearn", "dqn", or "fastdqn".
///
/// # Safety
/// `sc` must be a live scenario handle; `agent` a valid string.
#[no_mangle]
pub unsafe extern "C" fn aj_scenario_set_agent(
    sc: *mut AjScenario,
    agent: *const c_char,
) -> c_int {
    if sc.is_null() {
        return set_error(AJ_ERR_USAGE, "null scenario handle");
    }
    let name = match cstr(agent) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match AgentKind::from_str(name) {
        Ok(kind) => {
            (*sc).inner.agent = kind;
            AJ_OK
        }
        Err(e) => set_error(AJ_ERR_USAGE, &e),
    }
}

/// Runs one episode with the scenario's agent and seed; null on failure.
/// The fast DQN is hotbooted first when the scenario enables it.
///
/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn aj_run_episode(sc: *const AjScenario) -> *mut AjMetrics {
    if sc.is_null() {
        set_error(AJ_ERR_USAGE, "null scenario handle");
        return std::ptr::null_mut();
    }
    let sc = &(*sc).inner;
    let pretrained = if sc.agent == AgentKind::Fastdqn {
        match harness::hotboot_network(sc) {
            Ok(net) => net,
            Err(e) => {
                set_error(harness_code(&e), &e.to_string());
                return std::ptr::null_mut();
            }
        }
    } else {
        None
    };
    match harness::run_episode(sc, sc.agent, sc.seed, pretrained.as_ref()) {
        Ok(rows) => {
            clear_error();
            Box::into_raw(Box::new(AjMetrics { rows }))
        }
        Err(e) => {
            set_error(harness_code(&e), &e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// # Safety
/// `m` must come from `aj_run_episode` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_free(m: *mut AjMetrics) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of recorded slots (one row per slot).
///
/// # Safety
/// `m` must be a live metrics handle.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_len(m: *const AjMetrics) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).rows.len()
}

unsafe fn row<'a>(m: *const AjMetrics, i: usize) -> Option<&'a MetricsRow> {
    if m.is_null() {
        return None;
    }
    let m = &*m;
    m.rows.get(i)
}

/// SINR at slot `i` (NaN when out of range).
///
/// # Safety
/// `m` must be a live metrics handle.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_sinr(m: *const AjMetrics, i: usize) -> c_double {
    row(m, i).map_or(f64::NAN, |r| r.sinr)
}

/// Utility at slot `i` (NaN when out of range).
///
/// # Safety
/// `m` must be a live metrics handle.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_utility(m: *const AjMetrics, i: usize) -> c_double {
    row(m, i).map_or(f64::NAN, |r| r.utility)
}

/// Strategy index taken at slot `i` (-1 when out of range).
///
/// # Safety
/// `m` must be a live metrics handle.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_action(m: *const AjMetrics, i: usize) -> c_int {
    row(m, i).map_or(-1, |r| r.action as c_int)
}

/// 1 when the device moved at slot `i`, 0 otherwise (-1 out of range).
///
/// # Safety
/// `m` must be a live metrics handle.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_moved(m: *const AjMetrics, i: usize) -> c_int {
    row(m, i).map_or(-1, |r| r.moved as c_int)
}

/// 1 when the device stayed silent at slot `i`, 0 otherwise (-1 out of range).
///
/// # Safety
/// `m` must be a live metrics handle.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_silent(m: *const AjMetrics, i: usize) -> c_int {
    row(m, i).map_or(-1, |r| r.silent as c_int)
}

/// Mean SINR and utility over the last `last` slots; returns a status code.
///
/// # Safety
/// `m` must be a live metrics handle; out pointers must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn aj_metrics_summary(
    m: *const AjMetrics,
    last: usize,
    sinr_mean: *mut c_double,
    utility_mean: *mut c_double,
) -> c_int {
    if m.is_null() {
        return set_error(AJ_ERR_USAGE, "null metrics handle");
    }
    let rows = &(*m).rows;
    if rows.is_empty() || last == 0 {
        return set_error(AJ_ERR_USAGE, "empty metrics or zero window");
    }
    let tail = &rows[rows.len().saturating_sub(last)..];
    let n = tail.len() as f64;
    if !sinr_mean.is_null() {
        *sinr_mean = tail.iter().map(|r| r.sinr).sum::<f64>() / n;
    }
    if !utility_mean.is_null() {
        *utility_mean = tail.iter().map(|r| r.utility).sum::<f64>() / n;
    }
    AJ_OK
}
