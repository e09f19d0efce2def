//! C ABI over `gatecap`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`GatecapStatus`]; on failure `gatecap_last_error` describes what went
//! wrong on the calling thread. Complex arrays are passed as separate real and
//! imaginary `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gatecap::annealer::{optimize, AnnealConfig, CapacityKind, OptProblem, OptResult, SigmaScheme};
use gatecap::gates::{CanonicalParams, EmbeddedGate, FamilyTag, GateFamily};
use gatecap::objectives::{entanglement_gain, final_entanglement, ProductInput};
use gatecap::tensor::{entropy_from_eigenvalues, StateVector, SubsystemLayout};
use gatecap::Error;
use num_complex::Complex64 as C64;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GatecapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    InvalidState = 4,
    Optimizer = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GatecapFamily {
    U1 = 1,
    U2 = 2,
    U3 = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GatecapKind {
    E = 0,
    DeltaE = 1,
    Chi = 2,
    DeltaChi = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GatecapScheme {
    Stall = 0,
    Rate20 = 1,
}

/// Annealing schedule. Obtain defaults with `gatecap_config_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatecapConfig {
    pub sigma0: f64,
    pub sigma_min: f64,
    pub stall_window: u64,
    pub tau0: f64,
    pub tau_check_every: u64,
    pub tau_down: f64,
    pub tau_up: f64,
    /// A `GatecapScheme` value.
    pub scheme: u32,
    pub warmup_steps: u64,
    pub max_steps: u64,
    pub restarts: u32,
    pub seed: u64,
}

/// Opaque gate handle.
pub struct GatecapGate {
    inner: EmbeddedGate,
}

/// Opaque optimization result handle.
pub struct GatecapResult {
    inner: OptResult,
    witness_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> GatecapStatus {
    match e {
        Error::Dimension(_) | Error::UnsupportedDimension(_) | Error::Layout(_) => GatecapStatus::Dimension,
        Error::InvalidState(_) | Error::Degenerate(_) => GatecapStatus::InvalidState,
        Error::Optimizer(_) => GatecapStatus::Optimizer,
        _ => GatecapStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GatecapStatus, String)>) -> GatecapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GatecapStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            GatecapStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (GatecapStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GatecapStatus, String) {
    (GatecapStatus::NullPointer, format!("{what} is null"))
}

fn family_tag(f: u32) -> Result<FamilyTag, (GatecapStatus, String)> {
    match f {
        x if x == GatecapFamily::U1 as u32 => Ok(FamilyTag::U1),
        x if x == GatecapFamily::U2 as u32 => Ok(FamilyTag::U2),
        x if x == GatecapFamily::U3 as u32 => Ok(FamilyTag::U3),
        other => Err((GatecapStatus::InvalidArgument, format!("unknown family {other}"))),
    }
}

fn capacity_kind(k: u32) -> Result<CapacityKind, (GatecapStatus, String)> {
    match k {
        x if x == GatecapKind::E as u32 => Ok(CapacityKind::E),
        x if x == GatecapKind::DeltaE as u32 => Ok(CapacityKind::DeltaE),
        x if x == GatecapKind::Chi as u32 => Ok(CapacityKind::Chi),
        x if x == GatecapKind::DeltaChi as u32 => Ok(CapacityKind::DeltaChi),
        other => Err((GatecapStatus::InvalidArgument, format!("unknown capacity kind {other}"))),
    }
}

fn to_config(c: &GatecapConfig) -> Result<AnnealConfig, (GatecapStatus, String)> {
    Ok(AnnealConfig {
        sigma0: c.sigma0,
        sigma_min: c.sigma_min,
        stall_window: c.stall_window,
        tau0: c.tau0,
        tau_check_every: c.tau_check_every,
        tau_down: c.tau_down,
        tau_up: c.tau_up,
        sigma_scheme: match c.scheme {
            x if x == GatecapScheme::Stall as u32 => SigmaScheme::StallHalving,
            x if x == GatecapScheme::Rate20 as u32 => SigmaScheme::AcceptanceRate20,
            other => return Err((GatecapStatus::InvalidArgument, format!("unknown scheme {other}"))),
        },
        warmup_steps: c.warmup_steps,
        max_steps: c.max_steps,
        restarts: c.restarts as usize,
        seed: c.seed,
        trace_stride: None,
    })
}

fn from_config(c: &AnnealConfig) -> GatecapConfig {
    GatecapConfig {
        sigma0: c.sigma0,
        sigma_min: c.sigma_min,
        stall_window: c.stall_window,
        tau0: c.tau0,
        tau_check_every: c.tau_check_every,
        tau_down: c.tau_down,
        tau_up: c.tau_up,
        scheme: match c.sigma_scheme {
            SigmaScheme::StallHalving => GatecapScheme::Stall as u32,
            SigmaScheme::AcceptanceRate20 => GatecapScheme::Rate20 as u32,
        },
        warmup_steps: c.warmup_steps,
        max_steps: c.max_steps,
        restarts: c.restarts as u32,
        seed: c.seed,
    }
}

/// Reads `len` complex amplitudes from split real/imaginary arrays.
unsafe fn read_complex(re: *const f64, im: *const f64, len: usize) -> Result<Vec<C64>, (GatecapStatus, String)> {
    if re.is_null() || im.is_null() {
        return Err(null("amplitude array"));
    }
    let (re, im) = (std::slice::from_raw_parts(re, len), std::slice::from_raw_parts(im, len));
    Ok(re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect())
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn gatecap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gatecap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default schedule for `kind`, a `GatecapKind` value.
///
/// # Safety
/// `out` must be null or point to writable memory for one `GatecapConfig`.
#[no_mangle]
pub unsafe extern "C" fn gatecap_config_default(kind: u32, out: *mut GatecapConfig) -> GatecapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = from_config(&AnnealConfig::for_kind(capacity_kind(kind)?));
        Ok(())
    })
}

/// Gate of a family (a `GatecapFamily` value) at `alpha`, with ancillas of dimension `d_anc` on both sides.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gatecap_gate_family(
    family: u32,
    alpha: f64,
    d_anc: usize,
    out: *mut *mut GatecapGate,
) -> GatecapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let layout = SubsystemLayout::qubits(d_anc).map_err(lib_err)?;
        let inner = EmbeddedGate::family(GateFamily::new(family_tag(family)?, alpha), layout).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GatecapGate { inner }));
        Ok(())
    })
}

/// Canonical gate `exp(-i Σ α_k σ_k⊗σ_k)` with ancillas of dimension `d_anc`.
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gatecap_gate_canonical(
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    d_anc: usize,
    out: *mut *mut GatecapGate,
) -> GatecapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let layout = SubsystemLayout::qubits(d_anc).map_err(lib_err)?;
        let inner = EmbeddedGate::canonical(CanonicalParams::new(alpha1, alpha2, alpha3), layout).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(GatecapGate { inner }));
        Ok(())
    })
}

/// Releases a gate. Null is ignored.
///
/// # Safety
/// `gate` must be null or a handle from a `gatecap_gate_*` constructor not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gatecap_gate_free(gate: *mut GatecapGate) {
    if !gate.is_null() {
        drop(Box::from_raw(gate));
    }
}

/// Dimension of the joint space the gate acts on; 0 for a null handle.
///
/// # Safety
/// `gate` must be null or a live gate handle.
#[no_mangle]
pub unsafe extern "C" fn gatecap_gate_dim(gate: *const GatecapGate) -> usize {
    gate.as_ref().map_or(0, |g| g.inner.layout().total())
}

/// Copies the dense operator, row major, into `re` and `im` (each `len` long).
///
/// # Safety
/// `gate` must be a live handle; `re` and `im` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gatecap_gate_matrix(
    gate: *const GatecapGate,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> GatecapStatus {
    guard(|| {
        let g = gate.as_ref().ok_or_else(|| null("gate"))?;
        if re.is_null() || im.is_null() {
            return Err(null("output array"));
        }
        let m = g.inner.dense().as_slice();
        if len < m.len() {
            return Err((GatecapStatus::BufferTooSmall, format!("need {} entries, got {len}", m.len())));
        }
        for (k, z) in m.iter().enumerate() {
            *re.add(k) = z.re;
            *im.add(k) = z.im;
        }
        Ok(())
    })
}

/// Entanglement of `U(|φ⟩⊗|χ⟩)` in ebits. `φ` lives on Alice's side
/// (qubit ⊗ ancilla), `χ` on Bob's.
///
/// # Safety
/// `gate` must be a live handle; each array must hold its stated length.
#[no_mangle]
pub unsafe extern "C" fn gatecap_final_entanglement(
    gate: *const GatecapGate,
    phi_re: *const f64,
    phi_im: *const f64,
    phi_len: usize,
    chi_re: *const f64,
    chi_im: *const f64,
    chi_len: usize,
    out: *mut f64,
) -> GatecapStatus {
    guard(|| {
        let g = gate.as_ref().ok_or_else(|| null("gate"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let l = g.inner.layout();
        let phi = StateVector::new(SubsystemLayout::alice_only(l.d_au, l.d_aanc), read_complex(phi_re, phi_im, phi_len)?)
            .map_err(lib_err)?;
        let chi = StateVector::new(SubsystemLayout::bob_only(l.d_bu, l.d_banc), read_complex(chi_re, chi_im, chi_len)?)
            .map_err(lib_err)?;
        let input = ProductInput::new(phi, chi).map_err(lib_err)?;
        *out = final_entanglement(&g.inner, &input).map_err(lib_err)?;
        Ok(())
    })
}

/// Entanglement gained by applying the gate to a joint pure state, in ebits.
///
/// # Safety
/// `gate` must be a live handle; `re` and `im` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gatecap_entanglement_gain(
    gate: *const GatecapGate,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut f64,
) -> GatecapStatus {
    guard(|| {
        let g = gate.as_ref().ok_or_else(|| null("gate"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let psi = StateVector::new(g.inner.layout(), read_complex(re, im, len)?).map_err(lib_err)?;
        *out = entanglement_gain(&g.inner, &psi).map_err(lib_err)?;
        Ok(())
    })
}

/// Shannon entropy in bits of a spectrum, `0 log 0 = 0`.
///
/// # Safety
/// `eigenvalues` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gatecap_entropy(eigenvalues: *const f64, len: usize, out: *mut f64) -> GatecapStatus {
    guard(|| {
        if eigenvalues.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        *out = entropy_from_eigenvalues(std::slice::from_raw_parts(eigenvalues, len)).map_err(lib_err)?;
        Ok(())
    })
}

/// Maximizes a capacity (`GatecapKind`) of a family gate (`GatecapFamily`). `ensemble_size` is ignored for
/// E and dE; `config` may be null for the defaults of `kind`.
///
/// # Safety
/// `config` must be null or point to a valid `GatecapConfig`; `out` must
/// point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gatecap_optimize(
    family: u32,
    alpha: f64,
    kind: u32,
    ensemble_size: usize,
    d_anc: usize,
    equal_probs: bool,
    config: *const GatecapConfig,
    out: *mut *mut GatecapResult,
) -> GatecapStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = capacity_kind(kind)?;
        let cfg = match config.as_ref() {
            Some(c) => to_config(c)?,
            None => AnnealConfig::for_kind(kind),
        };
        let problem = OptProblem::for_family(kind, GateFamily::new(family_tag(family)?, alpha), d_anc)
            .map_err(lib_err)?
            .with_ensemble_size(if kind.is_holevo() { ensemble_size } else { 1 })
            .with_equal_probs(equal_probs);
        let inner = optimize(&problem, &cfg).map_err(lib_err)?;
        let json = serde_json::to_string(&inner.witness).map_err(|e| (GatecapStatus::InvalidState, e.to_string()))?;
        let witness_json = CString::new(json).map_err(|e| (GatecapStatus::InvalidState, e.to_string()))?;
        *out = Box::into_raw(Box::new(GatecapResult { inner, witness_json }));
        Ok(())
    })
}

/// Best value found; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn gatecap_result_value(result: *const GatecapResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.best_value)
}

/// Steps summed over all restarts; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn gatecap_result_total_steps(result: *const GatecapResult) -> u64 {
    result.as_ref().map_or(0, |r| r.inner.total_steps)
}

/// Witness as JSON, owned by the result handle; null for a null handle.
///
/// # Safety
/// `result` must be null or a live result handle. The string is freed with it.
#[no_mangle]
pub unsafe extern "C" fn gatecap_result_witness_json(result: *const GatecapResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.witness_json.as_ptr())
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` must be null or a handle from `gatecap_optimize` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gatecap_result_free(result: *mut GatecapResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
