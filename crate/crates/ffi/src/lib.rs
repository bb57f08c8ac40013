//! C ABI over the endpointer, the latency model, the face recognizer and
//! the path planner.
//!
//! Every function returns a [`GreeterStatus`]. On failure a message is kept
//! per thread and can be copied out with [`greeter_last_error`]. Handles are
//! opaque; each `*_new`/`*_open` has a matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use greeter::asr::{simulate_latency, LatencyParams, UploadMode};
use greeter::endpointer::{AudioChunk, Decision, EndpointConfig, Endpointer};
use greeter::faces::{decide_identity, FaceError, FaceRecognizer, FaceService, Gallery, Identity, Image};
use greeter::geom::{OccupancyGrid, Pose2D};
use greeter::navigate::{inflate, plan_with, Costmap, Path as PlannedPath, PlanError, PlannerConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreeterStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NoFace = 3,
    Storage = 4,
    Unreachable = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: GreeterStatus, msg: impl Into<String>) -> GreeterStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guard(f: impl FnOnce() -> GreeterStatus) -> GreeterStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(GreeterStatus::Panic, "internal panic"),
    }
}

/// Copies the text into `buf` NUL-terminated. Reports the needed size
/// (with the NUL) through `needed` when it is non-null.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> GreeterStatus {
    if !needed.is_null() {
        *needed = text.len() + 1;
    }
    if buf.is_null() || len < text.len() + 1 {
        return fail(GreeterStatus::BufferTooSmall, format!("need {} bytes", text.len() + 1));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    GreeterStatus::Ok
}

unsafe fn c_str<'a>(s: *const c_char) -> Result<&'a str, GreeterStatus> {
    if s.is_null() {
        return Err(fail(GreeterStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(GreeterStatus::InvalidArgument, "string is not UTF-8"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(GreeterStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Latest error message on this thread. Writes at most `len` bytes.
///
/// # Safety
/// `buf` must be valid for `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn greeter_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> GreeterStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&msg, buf, len, needed)
}

// ---- endpointer

pub struct GreeterEndpointer(Endpointer);

/// Default timing (0.2 s calibration, 1 s window, 0.2 s shift) with the given
/// tolerance and recording cap.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn greeter_endpointer_new(
    epsilon: f64,
    max_duration: f64,
    out: *mut *mut GreeterEndpointer,
) -> GreeterStatus {
    non_null!(out);
    guard(|| {
        let cfg = EndpointConfig {
            epsilon,
            max_duration,
            ..EndpointConfig::default()
        };
        match Endpointer::new(cfg) {
            Ok(ep) => {
                *out = Box::into_raw(Box::new(GreeterEndpointer(ep)));
                GreeterStatus::Ok
            }
            Err(e) => fail(GreeterStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Feeds the next `n` samples. `stop_time` receives the stop time in
/// seconds once the speaker has stopped, and a negative value before that.
///
/// # Safety
/// `ep` must come from [`greeter_endpointer_new`]; `samples` must hold `n`
/// values.
#[no_mangle]
pub unsafe extern "C" fn greeter_endpointer_feed(
    ep: *mut GreeterEndpointer,
    samples: *const i16,
    n: usize,
    sample_rate: u32,
    stop_time: *mut f64,
) -> GreeterStatus {
    non_null!(ep, stop_time);
    if samples.is_null() && n > 0 {
        return fail(GreeterStatus::NullPointer, "samples is null");
    }
    guard(|| {
        let ep = &mut (*ep).0;
        let data = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(samples, n).to_vec() };
        match ep.feed(&AudioChunk::new(data, sample_rate, 0.0)) {
            Ok(Decision::Stop { stop_time: t }) => {
                *stop_time = t;
                GreeterStatus::Ok
            }
            Ok(Decision::Continue) => {
                *stop_time = ep.stopped().unwrap_or(-1.0);
                GreeterStatus::Ok
            }
            Err(e) => fail(GreeterStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `ep` must come from [`greeter_endpointer_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn greeter_endpointer_free(ep: *mut GreeterEndpointer) {
    if !ep.is_null() {
        drop(Box::from_raw(ep));
    }
}

// ---- latency model

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GreeterLatencyParams {
    pub recording_duration: f64,
    pub chunk_duration: f64,
    pub upload_rate: f64,
    pub per_message_overhead: f64,
    pub per_chunk_processing: f64,
    pub finalization: f64,
}

/// Completion time of recognition after recording starts, for streamed
/// (`streaming` != 0) or whole-file upload.
///
/// # Safety
/// `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_simulate_latency(
    params: *const GreeterLatencyParams,
    streaming: i32,
    out: *mut f64,
) -> GreeterStatus {
    non_null!(params, out);
    guard(|| {
        let p = &*params;
        let lp = LatencyParams {
            recording_duration: p.recording_duration,
            chunk_duration: p.chunk_duration,
            upload_rate: p.upload_rate,
            per_message_overhead: p.per_message_overhead,
            per_chunk_processing: p.per_chunk_processing,
            finalization: p.finalization,
        };
        if !lp.is_valid() {
            return fail(GreeterStatus::InvalidArgument, "latency parameters out of range");
        }
        let mode = if streaming != 0 { UploadMode::Streaming } else { UploadMode::WholeFile };
        *out = simulate_latency(&lp, mode);
        GreeterStatus::Ok
    })
}

// ---- faces

pub struct GreeterRecognizer(FaceRecognizer);

fn face_status(e: FaceError) -> GreeterStatus {
    let s = match e {
        FaceError::NoFace => GreeterStatus::NoFace,
        FaceError::InvalidInput(_) => GreeterStatus::InvalidArgument,
        FaceError::Storage(_) | FaceError::Transport(_) => GreeterStatus::Storage,
    };
    fail(s, e.to_string())
}

unsafe fn image(pixels: *const u8, width: u32, height: u32) -> Result<Image, GreeterStatus> {
    if pixels.is_null() {
        return Err(fail(GreeterStatus::NullPointer, "pixels is null"));
    }
    let n = width as usize * height as usize;
    Image::new(width, height, std::slice::from_raw_parts(pixels, n).to_vec()).map_err(face_status)
}

/// Recognizer with an empty in-memory gallery.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_new(out: *mut *mut GreeterRecognizer) -> GreeterStatus {
    non_null!(out);
    guard(|| {
        *out = Box::into_raw(Box::new(GreeterRecognizer(FaceRecognizer::in_memory(Gallery::new()))));
        GreeterStatus::Ok
    })
}

/// Recognizer backed by a gallery file; enrollments are written back to it.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_open(path: *const c_char, out: *mut *mut GreeterRecognizer) -> GreeterStatus {
    non_null!(out);
    let path = match c_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guard(|| match FaceRecognizer::open(Path::new(path)) {
        Ok(r) => {
            *out = Box::into_raw(Box::new(GreeterRecognizer(r)));
            GreeterStatus::Ok
        }
        Err(e) => face_status(e),
    })
}

/// Enrolls the biggest face in an 8-bit grayscale image; the new entry id is
/// copied to `entry_id`.
///
/// # Safety
/// `pixels` must hold `width * height` bytes; `label` must be NUL-terminated;
/// `entry_id` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_enroll(
    r: *mut GreeterRecognizer,
    pixels: *const u8,
    width: u32,
    height: u32,
    label: *const c_char,
    entry_id: *mut c_char,
    len: usize,
) -> GreeterStatus {
    non_null!(r);
    let label = match c_str(label) {
        Ok(l) => l,
        Err(s) => return s,
    };
    guard(|| {
        let img = match image(pixels, width, height) {
            Ok(i) => i,
            Err(s) => return s,
        };
        match (*r).0.enroll(&img, label) {
            Ok(id) => copy_out(&id, entry_id, len, ptr::null_mut()),
            Err(e) => face_status(e),
        }
    })
}

/// Identifies the biggest face. `known` is set to 1 when the best match
/// reaches `threshold`, in which case its label goes to `label`.
///
/// # Safety
/// As for [`greeter_recognizer_enroll`]; `known` and `confidence` must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_identify(
    r: *const GreeterRecognizer,
    pixels: *const u8,
    width: u32,
    height: u32,
    threshold: f64,
    known: *mut i32,
    confidence: *mut f64,
    label: *mut c_char,
    len: usize,
) -> GreeterStatus {
    non_null!(r, known, confidence);
    guard(|| {
        let img = match image(pixels, width, height) {
            Ok(i) => i,
            Err(s) => return s,
        };
        let scores = match (*r).0.query(&img) {
            Ok(s) => s,
            Err(e) => return face_status(e),
        };
        *confidence = scores.iter().map(|s| s.confidence).fold(0.0, f64::max);
        match decide_identity(&scores, threshold) {
            Identity::Known { label: l, .. } => {
                *known = 1;
                copy_out(&l, label, len, ptr::null_mut())
            }
            Identity::Unknown => {
                *known = 0;
                GreeterStatus::Ok
            }
        }
    })
}

/// Number of enrolled entries.
///
/// # Safety
/// `r` must be a live recognizer handle.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_len(r: *const GreeterRecognizer) -> usize {
    if r.is_null() {
        return 0;
    }
    (*r).0.snapshot().len()
}

/// Writes the gallery as JSON.
///
/// # Safety
/// `r` must be live; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_save(r: *const GreeterRecognizer, path: *const c_char) -> GreeterStatus {
    non_null!(r);
    let path = match c_str(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guard(|| match (*r).0.snapshot().save(Path::new(path)) {
        Ok(()) => GreeterStatus::Ok,
        Err(e) => face_status(e),
    })
}

/// # Safety
/// `r` must come from a recognizer constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn greeter_recognizer_free(r: *mut GreeterRecognizer) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

// ---- planning

pub struct GreeterCostmap(Costmap);
pub struct GreeterPath(PlannedPath);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreeterPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Inflated costmap from a row-major occupancy mask (row 0 at the bottom,
/// nonzero = occupied) with its origin at (0, 0).
///
/// # Safety
/// `occupied` must hold `width * height` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_costmap_new(
    occupied: *const u8,
    width: usize,
    height: usize,
    resolution: f64,
    inflation_radius: f64,
    decay: f64,
    out: *mut *mut GreeterCostmap,
) -> GreeterStatus {
    non_null!(occupied, out);
    if width == 0 || height == 0 || !(resolution > 0.0) || !(inflation_radius >= 0.0) || !(decay >= 0.0) {
        return fail(GreeterStatus::InvalidArgument, "bad map size, resolution or inflation");
    }
    guard(|| {
        let mask: Vec<bool> = std::slice::from_raw_parts(occupied, width * height).iter().map(|&v| v != 0).collect();
        let grid = OccupancyGrid::from_mask(width, height, resolution, &mask);
        *out = Box::into_raw(Box::new(GreeterCostmap(inflate(&grid, inflation_radius, decay))));
        GreeterStatus::Ok
    })
}

/// Cost of one cell (255 = lethal).
///
/// # Safety
/// `c` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_costmap_cost(c: *const GreeterCostmap, col: usize, row: usize, out: *mut u8) -> GreeterStatus {
    non_null!(c, out);
    let g = (*c).0.grid();
    if col >= g.width() || row >= g.height() {
        return fail(GreeterStatus::InvalidArgument, "cell outside the map");
    }
    *out = (*c).0.costs()[row * g.width() + col];
    GreeterStatus::Ok
}

/// Minimum-cost eight-connected path.
///
/// # Safety
/// `c` must be live; `start`, `goal`, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_plan(
    c: *const GreeterCostmap,
    start: *const GreeterPose,
    goal: *const GreeterPose,
    out: *mut *mut GreeterPath,
) -> GreeterStatus {
    non_null!(c, start, goal, out);
    guard(|| {
        let (s, g) = (&*start, &*goal);
        let s = Pose2D::new(s.x, s.y, s.theta);
        let g = Pose2D::new(g.x, g.y, g.theta);
        match plan_with(&(*c).0, &s, &g, &PlannerConfig::default(), None) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(GreeterPath(p)));
                GreeterStatus::Ok
            }
            Err(e @ PlanError::Unreachable) => fail(GreeterStatus::Unreachable, e.to_string()),
            Err(e) => fail(GreeterStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must be a live path handle.
#[no_mangle]
pub unsafe extern "C" fn greeter_path_len(p: *const GreeterPath) -> usize {
    if p.is_null() {
        return 0;
    }
    let p = &*p;
    p.0.waypoints.len()
}

/// Accumulated edge cost in cell units.
///
/// # Safety
/// `p` must be a live path handle.
#[no_mangle]
pub unsafe extern "C" fn greeter_path_cost(p: *const GreeterPath) -> f64 {
    if p.is_null() {
        return f64::NAN;
    }
    (*p).0.total_cost
}

/// # Safety
/// `p` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn greeter_path_waypoint(p: *const GreeterPath, i: usize, out: *mut GreeterPose) -> GreeterStatus {
    non_null!(p, out);
    let p = &*p;
    match p.0.waypoints.get(i) {
        Some(w) => {
            *out = GreeterPose {
                x: w.x,
                y: w.y,
                theta: w.theta,
            };
            GreeterStatus::Ok
        }
        None => fail(GreeterStatus::InvalidArgument, format!("waypoint {i} out of range")),
    }
}

/// # Safety
/// `p` must come from [`greeter_plan`] or be null.
#[no_mangle]
pub unsafe extern "C" fn greeter_path_free(p: *mut GreeterPath) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `c` must come from [`greeter_costmap_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn greeter_costmap_free(c: *mut GreeterCostmap) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
