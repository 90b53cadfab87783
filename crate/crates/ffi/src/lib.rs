//! C ABI over `capex-core`.
//!
//! Objects cross the boundary as opaque handles created by a `*_load`,
//! `*_from_*` or `*_create` function and released with the matching
//! `*_free`. Every fallible function returns a [`CapexStatus`]; on failure
//! a description is available from [`capex_last_error_message`] on the same
//! thread until the next failing call. Panics never unwind into C: they are
//! reported as [`CapexStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use capex_core::dqn::PolicyArtifact;
use capex_core::env::{CapacityEnv, Decision, EnvParams, EnvState, EpisodicEnv};
use capex_core::oracle::two_stage_threshold;
use capex_core::{Error, RunConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapexStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numeric = 3,
    Checkpoint = 4,
    Infeasible = 5,
    Io = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

/// A state of the capacity-expansion process. `demand` is NaN for the
/// price-only variant.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapexState {
    pub stage: u32,
    pub price: f64,
    pub demand: f64,
    pub installed: u32,
}

/// Trained policy loaded from a checkpoint.
pub struct CapexArtifact {
    inner: PolicyArtifact,
}

/// Simulation environment with its current state.
pub struct CapexEnv {
    env: CapacityEnv,
    state: EnvState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn status_of(err: &Error) -> CapexStatus {
    match err {
        Error::Config { .. } | Error::Degenerate(_) | Error::Shape { .. } => CapexStatus::Config,
        Error::NonFinite(_) | Error::Diverged { .. } => CapexStatus::Numeric,
        Error::Checkpoint(_) => CapexStatus::Checkpoint,
        Error::Infeasible { .. } => CapexStatus::Infeasible,
        Error::Io(_) => CapexStatus::Io,
    }
}

struct Failure(CapexStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CapexStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CapexStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CapexStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CapexStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller guarantees a NUL-terminated string.
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Failure(CapexStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the caller contract, valid for writes.
    unsafe { ptr.write(value) };
    Ok(())
}

fn to_c_state(s: &EnvState) -> CapexState {
    CapexState {
        stage: s.t as u32,
        price: s.price,
        demand: s.demand.unwrap_or(f64::NAN),
        installed: s.installed as u32,
    }
}

fn from_c_state(s: &CapexState, params: &EnvParams) -> Result<EnvState, Failure> {
    let bad = |m: &str| Failure(CapexStatus::Config, m.to_string());
    let t = s.stage as usize;
    if t == 0 || t > params.horizon {
        return Err(bad("stage out of range"));
    }
    if s.installed as usize > params.max_capacity {
        return Err(bad("installed capacity exceeds the budget"));
    }
    if !(s.price.is_finite() && s.price > 0.0) {
        return Err(bad("price must be positive and finite"));
    }
    let demand = if params.has_demand() {
        if !(s.demand.is_finite() && s.demand > 0.0) {
            return Err(bad("demand must be positive and finite"));
        }
        Some(s.demand)
    } else {
        None
    };
    Ok(EnvState { t, price: s.price, demand, installed: s.installed as usize })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn capex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn capex_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_artifact_load(path: *const c_char, out: *mut *mut CapexArtifact) -> CapexStatus {
    guard(|| {
        let path = unsafe { read_str(path, "path") }?;
        let inner = PolicyArtifact::load(Path::new(path))?;
        unsafe { write_out(out, Box::into_raw(Box::new(CapexArtifact { inner })), "out") }
    })
}

/// Parses checkpoint text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_artifact_from_json(text: *const c_char, out: *mut *mut CapexArtifact) -> CapexStatus {
    guard(|| {
        let text = unsafe { read_str(text, "text") }?;
        let inner = PolicyArtifact::from_checkpoint_str(text)?;
        unsafe { write_out(out, Box::into_raw(Box::new(CapexArtifact { inner })), "out") }
    })
}

/// Number of decision heads (`K + 1`).
///
/// # Safety
/// `artifact` must come from a `capex_artifact_*` constructor; `out` valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_artifact_num_decisions(artifact: *const CapexArtifact, out: *mut u32) -> CapexStatus {
    guard(|| {
        let a = unsafe { artifact.as_ref() }.ok_or_else(|| null("artifact"))?;
        unsafe { write_out(out, (a.inner.env.max_capacity + 1) as u32, "out") }
    })
}

/// Greedy feasible decision (units to add) at `state`.
///
/// # Safety
/// `artifact` must come from a `capex_artifact_*` constructor, `state` must
/// point to a valid state and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_artifact_greedy_decision(
    artifact: *const CapexArtifact,
    state: *const CapexState,
    out: *mut u32,
) -> CapexStatus {
    guard(|| {
        let a = unsafe { artifact.as_ref() }.ok_or_else(|| null("artifact"))?;
        let s = unsafe { state.as_ref() }.ok_or_else(|| null("state"))?;
        let s = from_c_state(s, &a.inner.env)?;
        unsafe { write_out(out, a.inner.greedy_decision(&s).0 as u32, "out") }
    })
}

/// Writes all `K + 1` Q-values at `state` into `out[0..len]`.
///
/// # Safety
/// `artifact` and `state` as for [`capex_artifact_greedy_decision`]; `out`
/// must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn capex_artifact_q_values(
    artifact: *const CapexArtifact,
    state: *const CapexState,
    out: *mut f64,
    len: usize,
) -> CapexStatus {
    guard(|| {
        let a = unsafe { artifact.as_ref() }.ok_or_else(|| null("artifact"))?;
        let s = unsafe { state.as_ref() }.ok_or_else(|| null("state"))?;
        let s = from_c_state(s, &a.inner.env)?;
        let q = a.inner.q_values(&s)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < q.len() {
            return Err(Failure(CapexStatus::Config, format!("buffer holds {len} values, need {}", q.len())));
        }
        // SAFETY: `out` is non-null and valid for `len >= q.len()` writes.
        unsafe { std::ptr::copy_nonoverlapping(q.as_ptr(), out, q.len()) };
        Ok(())
    })
}

/// Releases an artifact; null is ignored.
///
/// # Safety
/// `artifact` must be null or come from a `capex_artifact_*` constructor
/// and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn capex_artifact_free(artifact: *mut CapexArtifact) {
    if !artifact.is_null() {
        // SAFETY: produced by Box::into_raw in a constructor.
        drop(unsafe { Box::from_raw(artifact) });
    }
}

/// Creates an environment from configuration text and a root seed. The
/// environment starts in its initial state.
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_env_create(config_text: *const c_char, seed: u64, out: *mut *mut CapexEnv) -> CapexStatus {
    guard(|| {
        let text = unsafe { read_str(config_text, "config_text") }?;
        let cfg = RunConfig::parse(text)?;
        let mut env = CapacityEnv::new(cfg.env, seed)?;
        let state = env.reset();
        unsafe { write_out(out, Box::into_raw(Box::new(CapexEnv { env, state })), "out") }
    })
}

/// Starts a new episode and reports its initial state.
///
/// # Safety
/// `env` must come from [`capex_env_create`]; `out_state` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_env_reset(env: *mut CapexEnv, out_state: *mut CapexState) -> CapexStatus {
    guard(|| {
        let e = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        e.state = e.env.reset();
        unsafe { write_out(out_state, to_c_state(&e.state), "out_state") }
    })
}

/// Current state without advancing.
///
/// # Safety
/// `env` must come from [`capex_env_create`]; `out_state` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_env_state(env: *const CapexEnv, out_state: *mut CapexState) -> CapexStatus {
    guard(|| {
        let e = unsafe { env.as_ref() }.ok_or_else(|| null("env"))?;
        unsafe { write_out(out_state, to_c_state(&e.state), "out_state") }
    })
}

/// Adds `decision` units at the current state. Infeasible decisions and
/// steps after the final stage leave the environment unchanged.
///
/// # Safety
/// `env` must come from [`capex_env_create`]; the output pointers must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_env_step(
    env: *mut CapexEnv,
    decision: u32,
    out_reward: *mut f64,
    out_state: *mut CapexState,
    out_terminal: *mut bool,
) -> CapexStatus {
    guard(|| {
        let e = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        if out_reward.is_null() || out_state.is_null() || out_terminal.is_null() {
            return Err(null("output pointer"));
        }
        let outcome = e.env.step_state(&e.state, Decision(decision as usize))?;
        e.state = outcome.next_state;
        unsafe {
            write_out(out_reward, outcome.reward, "out_reward")?;
            write_out(out_state, to_c_state(&e.state), "out_state")?;
            write_out(out_terminal, outcome.terminal, "out_terminal")
        }
    })
}

/// Releases an environment; null is ignored.
///
/// # Safety
/// `env` must be null or come from [`capex_env_create`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn capex_env_free(env: *mut CapexEnv) {
    if !env.is_null() {
        // SAFETY: produced by Box::into_raw in capex_env_create.
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Last-stage investment threshold `(c_om + c_inv) / u` of a price-only
/// configuration.
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn capex_two_stage_threshold(config_text: *const c_char, out: *mut f64) -> CapexStatus {
    guard(|| {
        let text = unsafe { read_str(config_text, "config_text") }?;
        let cfg = RunConfig::parse(text)?;
        let value = two_stage_threshold(&cfg.env)?;
        unsafe { write_out(out, value, "out") }
    })
}
