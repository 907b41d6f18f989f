//! C ABI over `shor-optics`.
//!
//! Objects are opaque handles created by `so_*_new` / producing calls and
//! released with the matching `so_*_free`. Every fallible call returns an
//! [`SoStatus`]; on failure `so_last_error()` yields a message for the
//! calling thread. Strings returned to C are released with
//! `so_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use shor_optics::interference::{render_state, FringeImage, ScreenGeometry};
use shor_optics::lgfield::LgBeamParams;
use shor_optics::modespace::{apply_dft, state_fidelity, BasisMap, ModeState, OamIndex, ShorProblem};
use shor_optics::shor::{run_pipeline, PipelineConfig, PipelineMode, PipelineRun};
use shor_optics::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Unsupported = 4,
    Resource = 5,
    Graph = 6,
    Config = 7,
    Io = 8,
    Json = 9,
    /// The requested value does not exist (no order, no factors).
    NoResult = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoMode {
    Abstract = 0,
    Circuit = 1,
    Physical = 2,
}

/// Validated factoring instance.
pub struct SoProblem(ShorProblem);
/// Completed pipeline run.
pub struct SoRun(PipelineRun);
/// Mode-space state.
pub struct SoState(ModeState);
/// Rendered interference image.
pub struct SoImage(FringeImage);

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> SoStatus {
    match e {
        Error::Domain(_) | Error::Precondition(_) => SoStatus::Domain,
        Error::Unsupported(_) => SoStatus::Unsupported,
        Error::Resource(_) => SoStatus::Resource,
        Error::Graph(_) => SoStatus::Graph,
        Error::Config(_) => SoStatus::Config,
        Error::Io(_) => SoStatus::Io,
        Error::Json(_) => SoStatus::Json,
    }
}

enum Failure {
    Status(SoStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null() -> Failure {
    Failure::Status(SoStatus::NullPointer, "null pointer argument".into())
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SoStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            SoStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(null)
}

fn c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::Status(SoStatus::InvalidArgument, "string contains a NUL byte".into()))
}

fn geometry(resolution: u32) -> ScreenGeometry {
    let g = ScreenGeometry::default();
    if resolution == 0 {
        g
    } else {
        g.with_resolution(resolution as usize)
    }
}

/// Message of the last failed call on this thread, or NULL. Free with
/// `so_string_free`.
#[no_mangle]
pub extern "C" fn so_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(m) => CString::new(m.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn so_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out_problem` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_problem_new(modulus: u64, base: u64, bits: u32, out_problem: *mut *mut SoProblem) -> SoStatus {
    guard(|| {
        let slot = out(out_problem)?;
        *slot = Box::into_raw(Box::new(SoProblem(ShorProblem::new(modulus, base, bits)?)));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from `so_problem_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn so_problem_free(p: *mut SoProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Runs the pipeline. `resolution` sets the screen side in pixels for
/// physical mode; 0 keeps the default.
///
/// # Safety
/// `problem` must be a live handle and `out_run` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_run_pipeline(problem: *const SoProblem, mode: SoMode, resolution: u32, out_run: *mut *mut SoRun) -> SoStatus {
    guard(|| {
        let problem = obj(problem)?;
        let slot = out(out_run)?;
        let mut config = PipelineConfig::new(match mode {
            SoMode::Abstract => PipelineMode::Abstract,
            SoMode::Circuit => PipelineMode::Circuit,
            SoMode::Physical => PipelineMode::Physical,
        });
        config.geometry = geometry(resolution);
        *slot = Box::into_raw(Box::new(SoRun(run_pipeline(&problem.0, &config)?)));
        Ok(())
    })
}

/// Extracted order; `NO_RESULT` when the readout produced none.
///
/// # Safety
/// `run` must be a live handle and `out_r` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_run_order(run: *const SoRun, out_r: *mut u64) -> SoStatus {
    guard(|| {
        let run = obj(run)?;
        let slot = out(out_r)?;
        let r = run.0.readout.r.ok_or_else(|| {
            Failure::Status(SoStatus::NoResult, run.0.readout.failure_reason.clone().unwrap_or_else(|| "no order".into()))
        })?;
        *slot = r;
        Ok(())
    })
}

/// Recovered factors `p ≤ q`; `NO_RESULT` when the run found none.
///
/// # Safety
/// `run` must be a live handle; `out_p`, `out_q` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn so_run_factors(run: *const SoRun, out_p: *mut u64, out_q: *mut u64) -> SoStatus {
    guard(|| {
        let run = obj(run)?;
        let (sp, sq) = (out(out_p)?, out(out_q)?);
        let (p, q) = run.0.readout.factors.ok_or_else(|| {
            Failure::Status(SoStatus::NoResult, run.0.readout.failure_reason.clone().unwrap_or_else(|| "no factors".into()))
        })?;
        *sp = p;
        *sq = q;
        Ok(())
    })
}

/// JSON report of the run. Free the string with `so_string_free`.
///
/// # Safety
/// `run` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_run_report_json(run: *const SoRun, out_json: *mut *mut c_char) -> SoStatus {
    guard(|| {
        let run = obj(run)?;
        let slot = out(out_json)?;
        *slot = c_string(run.0.report_json()?)?;
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a handle from `so_run_pipeline`, freed once.
#[no_mangle]
pub unsafe extern "C" fn so_run_free(r: *mut SoRun) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Parses a state from its JSON term list
/// (`[{"l": 1, "pol": "H", "re": 1.0, "im": 0.0}, ...]`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_state` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_state_from_json(json: *const c_char, out_state: *mut *mut SoState) -> SoStatus {
    guard(|| {
        if json.is_null() {
            return Err(null());
        }
        let slot = out(out_state)?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| Failure::Status(SoStatus::InvalidArgument, "state JSON is not UTF-8".into()))?;
        *slot = Box::into_raw(Box::new(SoState(ModeState::from_json(text)?)));
        Ok(())
    })
}

/// # Safety
/// `state` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_state_to_json(state: *const SoState, out_json: *mut *mut c_char) -> SoStatus {
    guard(|| {
        let state = obj(state)?;
        let slot = out(out_json)?;
        *slot = c_string(state.0.to_json()?)?;
        Ok(())
    })
}

/// DFT over `2^bits` control labels (`+1, −1, +2, −2, …`), per polarization.
///
/// # Safety
/// `state` must be a live handle and `out_state` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_state_apply_dft(state: *const SoState, bits: u32, out_state: *mut *mut SoState) -> SoStatus {
    guard(|| {
        let state = obj(state)?;
        let slot = out(out_state)?;
        let basis = BasisMap::alternating(bits)?;
        *slot = Box::into_raw(Box::new(SoState(apply_dft(&state.0, &basis)?)));
        Ok(())
    })
}

/// `|⟨a|b⟩|² / (⟨a|a⟩⟨b|b⟩)`.
///
/// # Safety
/// `a`, `b` must be live handles and `out_f` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_state_fidelity(a: *const SoState, b: *const SoState, out_f: *mut f64) -> SoStatus {
    guard(|| {
        let (a, b) = (obj(a)?, obj(b)?);
        let slot = out(out_f)?;
        *slot = state_fidelity(&a.0, &b.0)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a state handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn so_state_free(s: *mut SoState) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Renders the four-hole interference pattern of `state` on the default
/// screen; `resolution` 0 keeps the default side length.
///
/// # Safety
/// `state` must be a live handle and `out_image` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn so_render_state(state: *const SoState, resolution: u32, out_image: *mut *mut SoImage) -> SoStatus {
    guard(|| {
        let state = obj(state)?;
        let slot = out(out_image)?;
        let (_, img) = render_state(&state.0, &LgBeamParams::detection(OamIndex(1)), &geometry(resolution))?;
        *slot = Box::into_raw(Box::new(SoImage(img)));
        Ok(())
    })
}

/// # Safety
/// `image` must be a live handle; `out_width`, `out_height` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn so_image_dims(image: *const SoImage, out_width: *mut usize, out_height: *mut usize) -> SoStatus {
    guard(|| {
        let image = obj(image)?;
        let (w, h) = (out(out_width)?, out(out_height)?);
        *w = image.0.width();
        *h = image.0.height();
        Ok(())
    })
}

/// Copies the row-major intensities (row 0 at the top) into `buf`, which
/// must hold `width × height` values.
///
/// # Safety
/// `image` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn so_image_copy(image: *const SoImage, buf: *mut f64, len: usize) -> SoStatus {
    guard(|| {
        let image = obj(image)?;
        if buf.is_null() {
            return Err(null());
        }
        let data = &image.0.intensities;
        if len < data.len() {
            return Err(Failure::Status(
                SoStatus::BufferTooSmall,
                format!("buffer holds {len} values, image has {}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// # Safety
/// `i` must be NULL or a handle from `so_render_state`, freed once.
#[no_mangle]
pub unsafe extern "C" fn so_image_free(i: *mut SoImage) {
    if !i.is_null() {
        drop(Box::from_raw(i));
    }
}
