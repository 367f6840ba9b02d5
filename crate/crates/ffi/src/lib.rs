//! C interface to the swarmstore simulator.
//!
//! A simulation is created from scenario TOML text and driven one step at a
//! time through an opaque `SwarmSim` handle. Every function returns a
//! `SwarmStatus`; on failure `swarm_last_error_message` describes the error
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use swarmstore::geometry::Point;
use swarmstore::risk::{RadiationSource, RiskField};
use swarmstore::scenario::parse_scenario_str;
use swarmstore::storage::fitness;
use swarmstore::{Error, PolicyKind, Simulation, StepRow};

/// Result of every call. Codes 2 to 4 match the command line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmStatus {
    Ok = 0,
    /// The simulation already ran all of its steps.
    Finished = 1,
    Config = 2,
    Io = 3,
    Invariant = 4,
    NullArgument = 5,
    /// No step has run yet.
    Empty = 6,
    /// Invalid UTF-8 in an input string.
    Utf8 = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmPolicy {
    Rass = 0,
    Hopcount = 1,
    Stigmergy = 2,
}

fn policy_kind(code: u32) -> Option<PolicyKind> {
    match code {
        c if c == SwarmPolicy::Rass as u32 => Some(PolicyKind::Rass),
        c if c == SwarmPolicy::Hopcount as u32 => Some(PolicyKind::HopCount),
        c if c == SwarmPolicy::Stigmergy as u32 => Some(PolicyKind::Stigmergy),
        _ => None,
    }
}

/// Per-step metrics, one row of the series CSV.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwarmStepRow {
    pub step: u64,
    pub n_g: u64,
    pub n_l: u64,
    pub reliability_step: f64,
    pub reliability_cum: f64,
    pub items_on_agents: u64,
    pub items_at_base: u64,
    pub total_stored: u64,
    pub mean_memory_pct: f64,
}

impl From<&StepRow> for SwarmStepRow {
    fn from(r: &StepRow) -> Self {
        Self {
            step: r.step,
            n_g: r.n_g,
            n_l: r.n_l,
            reliability_step: r.reliability_step,
            reliability_cum: r.reliability_cum,
            items_on_agents: r.items_on_agents,
            items_at_base: r.items_at_base,
            total_stored: r.total_stored,
            mean_memory_pct: r.mean_memory_pct,
        }
    }
}

/// A radiation point source.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwarmSource {
    pub x: f64,
    pub y: f64,
    /// In `[0, 1]`.
    pub intensity: f64,
}

/// Opaque simulation handle.
pub struct SwarmSim {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: SwarmStatus, message: impl Into<String>) -> SwarmStatus {
    set_error(message);
    status
}

fn from_error(err: &Error) -> SwarmStatus {
    let status = match err {
        Error::Config(_) => SwarmStatus::Config,
        Error::Io { .. } | Error::Csv { .. } => SwarmStatus::Io,
        Error::Invariant(_) => SwarmStatus::Invariant,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> SwarmStatus) -> SwarmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(SwarmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// Message for the last failed call on this thread, or NULL after a
/// successful call. The pointer is valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn swarm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Build a simulation from scenario TOML text for one seed and a
/// `SwarmPolicy` value. On success `*out` receives a handle to release
/// with `swarm_sim_free`.
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_new(
    scenario_toml: *const c_char,
    seed: u64,
    policy: u32,
    out: *mut *mut SwarmSim,
) -> SwarmStatus {
    guard(|| {
        if scenario_toml.is_null() || out.is_null() {
            return fail(SwarmStatus::NullArgument, "null argument to swarm_sim_new");
        }
        *out = std::ptr::null_mut();
        let text = match CStr::from_ptr(scenario_toml).to_str() {
            Ok(t) => t,
            Err(e) => return fail(SwarmStatus::Utf8, format!("scenario text: {e}")),
        };
        let Some(policy) = policy_kind(policy) else {
            return fail(SwarmStatus::Config, format!("unknown policy code {policy}"));
        };
        let scenario = match parse_scenario_str(text, "<ffi>") {
            Ok(s) => s,
            Err(e) => return from_error(&e.into()),
        };
        match Simulation::new(scenario.run_config(policy, seed)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SwarmSim { inner }));
                SwarmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `sim` must come from `swarm_sim_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_free(sim: *mut SwarmSim) {
    if !sim.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(sim))));
    }
}

/// Advance one step. If `row` is not NULL it receives the step's metrics.
/// Returns `SWARM_STATUS_FINISHED` once every configured step has run.
///
/// # Safety
/// `sim` must be a live handle; `row` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_step(sim: *mut SwarmSim, row: *mut SwarmStepRow) -> SwarmStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(SwarmStatus::NullArgument, "null simulation handle");
        };
        if sim.inner.is_finished() {
            return SwarmStatus::Finished;
        }
        match sim.inner.step() {
            Ok(r) => {
                if !row.is_null() {
                    *row = r.into();
                }
                SwarmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Run all remaining steps.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_run_to_end(sim: *mut SwarmSim) -> SwarmStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(SwarmStatus::NullArgument, "null simulation handle");
        };
        match sim.inner.run_to_end() {
            Ok(()) => SwarmStatus::Ok,
            Err(e) => from_error(&e),
        }
    })
}

/// Metrics of the most recent step.
///
/// # Safety
/// `sim` must be a live handle and `row` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_last_row(sim: *const SwarmSim, row: *mut SwarmStepRow) -> SwarmStatus {
    guard(|| {
        let (Some(sim), false) = (sim.as_ref(), row.is_null()) else {
            return fail(SwarmStatus::NullArgument, "null argument to swarm_sim_last_row");
        };
        match sim.inner.metrics().final_row() {
            Some(r) => {
                *row = r.into();
                SwarmStatus::Ok
            }
            None => fail(SwarmStatus::Empty, "no step has run"),
        }
    })
}

/// Steps run so far.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_current_step(sim: *const SwarmSim, out: *mut u64) -> SwarmStatus {
    guard(|| {
        let (Some(sim), false) = (sim.as_ref(), out.is_null()) else {
            return fail(
                SwarmStatus::NullArgument,
                "null argument to swarm_sim_current_step",
            );
        };
        *out = sim.inner.current_step();
        SwarmStatus::Ok
    })
}

/// Number of data delivered to the base so far.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_sim_delivery_count(sim: *const SwarmSim, out: *mut u64) -> SwarmStatus {
    guard(|| {
        let (Some(sim), false) = (sim.as_ref(), out.is_null()) else {
            return fail(
                SwarmStatus::NullArgument,
                "null argument to swarm_sim_delivery_count",
            );
        };
        *out = sim.inner.metrics().deliveries.len() as u64;
        SwarmStatus::Ok
    })
}

/// Storage fitness `1 / (alpha * hops + beta * risk)`; zero when
/// `available_memory` is zero and infinite for a zero cost.
#[no_mangle]
pub extern "C" fn swarm_fitness(
    available_memory: usize,
    hop_count: u32,
    risk: f64,
    alpha: f64,
    beta: f64,
) -> f64 {
    fitness(available_memory, hop_count, risk, alpha, beta)
}

/// Per-step corruption probability of a datum stored at `(x, y)`.
///
/// # Safety
/// `sources` must point to `count` elements (it may be NULL when `count` is
/// zero) and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn swarm_corruption_probability(
    sources: *const SwarmSource,
    count: usize,
    x: f64,
    y: f64,
    decay: f64,
    corruption_scale: f64,
    out: *mut f64,
) -> SwarmStatus {
    guard(|| {
        if out.is_null() || (sources.is_null() && count > 0) {
            return fail(
                SwarmStatus::NullArgument,
                "null argument to swarm_corruption_probability",
            );
        }
        let raw = if count == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(sources, count)
        };
        let field = RiskField {
            sources: raw
                .iter()
                .map(|s| RadiationSource::fixed(Point::new(s.x, s.y), s.intensity))
                .collect(),
            decay,
            corruption_scale,
            ..RiskField::default()
        };
        if let Err(e) = field.validate() {
            return from_error(&e.into());
        }
        *out = field.corruption_probability(Point::new(x, y));
        SwarmStatus::Ok
    })
}
