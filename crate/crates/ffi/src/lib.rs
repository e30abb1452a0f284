//! C ABI over the `iqsense` library.
//!
//! Every fallible function returns an [`IqsStatus`]; results are written
//! through out-pointers only on success. After a failure,
//! [`iqs_last_error_message`] describes it for the calling thread. Handles
//! are opaque and must be released with their matching `_free` function.

use iqsense::detection::{
    conditional_matrix, detection_from, false_alarm_from, Convention, DecisionRule, DetectorMode,
};
use iqsense::montecarlo::{run_trials, ScenarioSpec, SeedSpec, SensingScenario};
use iqsense::numerics::{gamma_sf, GammaScale, GammaShape};
use iqsense::outage::{analytic_outage, OutageScenario};
use iqsense::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Detector family used when building a rule.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqsDetectorMode {
    FourLevel = 0,
    TwoLevelBayes = 1,
    TwoLevelCfar = 2,
}

/// How conditional probabilities combine into false-alarm and detection figures.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IqsConvention {
    UnweightedSum = 0,
    PriorWeighted = 1,
}

/// Primary-link outage parameters; see the library's `OutageScenario`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IqsOutageScenario {
    pub p_mk: f64,
    pub p0: f64,
    pub beta_sq_sec: f64,
    pub noise_p: f64,
    pub var_g: f64,
    pub var_h: f64,
    pub rate_p: f64,
}

/// Opaque sensing scenario.
pub struct IqsScenario(SensingScenario);

/// Opaque decision rule.
pub struct IqsRule(DecisionRule);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> IqsStatus {
    match e {
        Error::Domain(_) | Error::SymbolIndex { .. } | Error::LengthMismatch { .. } => IqsStatus::Domain,
        Error::Numerical(_) | Error::DegeneratePair(..) | Error::EmptyRow(_) => IqsStatus::Numerical,
        _ => IqsStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Status(IqsStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status and stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IqsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IqsStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer: {name}"));
            IqsStatus::NullPointer
        }
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            IqsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for reads.
    unsafe { p.as_ref() }.ok_or(Failure::Null(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller guarantees `p` is null or valid for writes.
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

fn shape(n: u32) -> Result<GammaShape, Failure> {
    Ok(GammaShape::new(n)?)
}

fn detector_mode(mode: IqsDetectorMode, target_pfa: f64) -> DetectorMode {
    match mode {
        IqsDetectorMode::FourLevel => DetectorMode::FourLevel,
        IqsDetectorMode::TwoLevelBayes => DetectorMode::TwoLevelBayes,
        IqsDetectorMode::TwoLevelCfar => DetectorMode::TwoLevelCfar { target_pfa },
    }
}

fn convention(c: IqsConvention) -> Convention {
    match c {
        IqsConvention::UnweightedSum => Convention::UnweightedSum,
        IqsConvention::PriorWeighted => Convention::PriorWeighted,
    }
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to fit. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            // SAFETY: `buf` holds at least `cap > n` bytes.
            unsafe {
                std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Upper tail `P(Z > threshold)` of the sum of `n` exponential packets
/// whose Gamma law has shape `n` and the given `scale`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_gamma_sf(n: u32, scale: f64, threshold: f64, out: *mut f64) -> IqsStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        *out = gamma_sf(shape(n)?, GammaScale::new(scale)?, threshold)?;
        Ok(())
    })
}

/// Builds a scenario from SNRs in dB, an optional transmitter IRR
/// (`has_irr == 0` means ideal) and the packet count.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_scenario_new(
    snr1_db: f64,
    snr2_db: f64,
    has_irr: bool,
    irr_db: f64,
    n_packets: u32,
    out: *mut *mut IqsScenario,
) -> IqsStatus {
    guard(|| {
        let out = unsafe { deref_mut(out, "out") }?;
        let sc = ScenarioSpec::new(snr1_db, snr2_db, has_irr.then_some(irr_db)).with_packets(n_packets).build()?;
        *out = Box::into_raw(Box::new(IqsScenario(sc)));
        Ok(())
    })
}

/// Builds a scenario from its JSON description.
///
/// # Safety
/// `json` must be null or a valid NUL-terminated string; `out` must be null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_scenario_from_json(json: *const c_char, out: *mut *mut IqsScenario) -> IqsStatus {
    guard(|| {
        if json.is_null() {
            return Err(Failure::Null("json"));
        }
        let out = unsafe { deref_mut(out, "out") }?;
        // SAFETY: checked non-null above; the caller guarantees termination.
        let text = unsafe { CStr::from_ptr(json) }
            .to_str()
            .map_err(|e| Failure::Status(IqsStatus::InvalidArgument, format!("json is not UTF-8: {e}")))?;
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(Error::from)?;
        *out = Box::into_raw(Box::new(IqsScenario(spec.build()?)));
        Ok(())
    })
}

/// Releases a scenario; null is ignored.
///
/// # Safety
/// `sc` must be null or a handle from `iqs_scenario_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iqs_scenario_free(sc: *mut IqsScenario) {
    if !sc.is_null() {
        // SAFETY: the handle was created by `Box::into_raw`.
        drop(unsafe { Box::from_raw(sc) });
    }
}

/// Writes the per-component variances under H0..H3 into `out[4]`.
///
/// # Safety
/// `sc` must be a live handle; `out` must be valid for 4 writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_scenario_variances(sc: *const IqsScenario, out: *mut f64) -> IqsStatus {
    guard(|| {
        let sc = unsafe { deref(sc, "sc") }?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let v = sc.0.variances()?.as_array();
        // SAFETY: `out` is valid for 4 writes.
        unsafe { std::ptr::copy_nonoverlapping(v.as_ptr(), out, 4) };
        Ok(())
    })
}

/// Builds the decision rule for `sc` under the given detector mode.
/// `target_pfa` is used only by the CFAR mode.
///
/// # Safety
/// `sc` must be a live handle; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_rule_new(
    sc: *const IqsScenario,
    mode: IqsDetectorMode,
    target_pfa: f64,
    out: *mut *mut IqsRule,
) -> IqsStatus {
    guard(|| {
        let sc = unsafe { deref(sc, "sc") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        let rule = sc.0.rule_for(detector_mode(mode, target_pfa))?;
        *out = Box::into_raw(Box::new(IqsRule(rule)));
        Ok(())
    })
}

/// Releases a rule; null is ignored.
///
/// # Safety
/// `rule` must be null or a handle from `iqs_rule_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn iqs_rule_free(rule: *mut IqsRule) {
    if !rule.is_null() {
        // SAFETY: the handle was created by `Box::into_raw`.
        drop(unsafe { Box::from_raw(rule) });
    }
}

/// Classifies a statistic value; writes the decided hypothesis index (0..=3).
///
/// # Safety
/// `rule` must be a live handle; `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_rule_classify(rule: *const IqsRule, z: f64, out: *mut u32) -> IqsStatus {
    guard(|| {
        let rule = unsafe { deref(rule, "rule") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        if z.is_nan() {
            return Err(Failure::Status(IqsStatus::Domain, "statistic is NaN".into()));
        }
        *out = rule.0.classify(z).index() as u32;
        Ok(())
    })
}

/// Copies the rule's increasing thresholds into `buf` and their count into
/// `len`. Fails with `BufferTooSmall` (still setting `len`) when `cap` is
/// insufficient; at most three thresholds exist.
///
/// # Safety
/// `rule` must be a live handle; `buf` must be valid for `cap` writes;
/// `len` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_rule_thresholds(
    rule: *const IqsRule,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> IqsStatus {
    guard(|| {
        let rule = unsafe { deref(rule, "rule") }?;
        let len = unsafe { deref_mut(len, "len") }?;
        let t = rule.0.thresholds();
        *len = t.len();
        if t.len() > cap {
            return Err(Failure::Status(IqsStatus::BufferTooSmall, format!("need {} slots, got {cap}", t.len())));
        }
        if !t.is_empty() {
            if buf.is_null() {
                return Err(Failure::Null("buf"));
            }
            // SAFETY: `buf` is valid for `cap >= t.len()` writes.
            unsafe { std::ptr::copy_nonoverlapping(t.as_ptr(), buf, t.len()) };
        }
        Ok(())
    })
}

/// Exact false-alarm and detection figures of `rule` on `sc`.
///
/// # Safety
/// Handles must be live; `p_fa` and `p_d` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_analytic_metrics(
    sc: *const IqsScenario,
    rule: *const IqsRule,
    conv: IqsConvention,
    p_fa: *mut f64,
    p_d: *mut f64,
) -> IqsStatus {
    guard(|| {
        let sc = unsafe { deref(sc, "sc") }?;
        let rule = unsafe { deref(rule, "rule") }?;
        let p_fa = unsafe { deref_mut(p_fa, "p_fa") }?;
        let p_d = unsafe { deref_mut(p_d, "p_d") }?;
        let m = conditional_matrix(&sc.0.exact_laws()?, &rule.0)?;
        *p_fa = false_alarm_from(&m, convention(conv));
        *p_d = detection_from(&m, convention(conv));
        Ok(())
    })
}

/// Monte Carlo confusion counts under the scenario's own detector mode
/// (four-level unless set in JSON): `counts[4*truth + decided]`.
/// Results depend only on the seed pair, not on threading.
///
/// # Safety
/// `sc` must be a live handle; `counts` must be valid for 16 writes.
#[no_mangle]
pub unsafe extern "C" fn iqs_run_trials(
    sc: *const IqsScenario,
    per_hypothesis: u64,
    master_seed: u64,
    stream_index: u32,
    counts: *mut u64,
) -> IqsStatus {
    guard(|| {
        let sc = unsafe { deref(sc, "sc") }?;
        if counts.is_null() {
            return Err(Failure::Null("counts"));
        }
        let tally = run_trials(&sc.0, per_hypothesis, SeedSpec::new(master_seed, stream_index))?;
        let flat: Vec<u64> = tally.counts().iter().flatten().copied().collect();
        // SAFETY: `counts` is valid for 16 writes.
        unsafe { std::ptr::copy_nonoverlapping(flat.as_ptr(), counts, 16) };
        Ok(())
    })
}

/// Closed-form outage probability of the primary link.
///
/// # Safety
/// `sc` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn iqs_outage_probability(sc: *const IqsOutageScenario, out: *mut f64) -> IqsStatus {
    guard(|| {
        let s = unsafe { deref(sc, "sc") }?;
        let out = unsafe { deref_mut(out, "out") }?;
        let sc = OutageScenario {
            p_mk: s.p_mk,
            p0: s.p0,
            beta_sq_sec: s.beta_sq_sec,
            noise_p: s.noise_p,
            var_g: s.var_g,
            var_h: s.var_h,
            rate_p: s.rate_p,
        };
        *out = analytic_outage(&sc)?;
        Ok(())
    })
}
