use std::ffi::{CStr, CString};
use std::ptr;

use greeter::asr::{simulate_latency, LatencyParams, UploadMode};
use greeter::endpointer::{endpoint_samples, square_frame, EndpointConfig};
use greeter_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let mut needed = 0usize;
    unsafe {
        greeter_last_error(buf.as_mut_ptr(), buf.len(), &mut needed);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn speech_then_silence() -> Vec<i16> {
    let mut s = Vec::new();
    for level in [100, 3000, 3000, 3000, 3000, 3000, 100, 100, 100, 100, 100, 100, 100] {
        s.extend(square_frame(level, 3200));
    }
    s
}

#[test]
fn endpointer_matches_library_in_small_chunks() {
    let audio = speech_then_silence();
    let want = endpoint_samples(&audio, 16_000, &EndpointConfig::default()).unwrap().stop_time;
    unsafe {
        let mut ep = ptr::null_mut();
        assert_eq!(greeter_endpointer_new(0.1, 15.0, &mut ep), GreeterStatus::Ok);
        let mut t = -1.0;
        for chunk in audio.chunks(777) {
            assert_eq!(greeter_endpointer_feed(ep, chunk.as_ptr(), chunk.len(), 16_000, &mut t), GreeterStatus::Ok);
            if t >= 0.0 {
                break;
            }
        }
        assert_eq!(t, want);
        greeter_endpointer_free(ep);
    }
}

#[test]
fn bad_config_sets_last_error() {
    unsafe {
        let mut ep = ptr::null_mut();
        assert_eq!(greeter_endpointer_new(-1.0, 15.0, &mut ep), GreeterStatus::InvalidArgument);
        assert!(ep.is_null());
        assert!(last_error().contains("epsilon"), "{}", last_error());
        assert_eq!(greeter_endpointer_new(0.1, 15.0, ptr::null_mut()), GreeterStatus::NullPointer);
        greeter_endpointer_free(ptr::null_mut());
    }
}

#[test]
fn latency_model_through_c() {
    let p = GreeterLatencyParams {
        recording_duration: 4.0,
        chunk_duration: 0.5,
        upload_rate: 1.0,
        per_message_overhead: 0.0,
        per_chunk_processing: 0.0,
        finalization: 0.5,
    };
    let lp = LatencyParams {
        recording_duration: 4.0,
        chunk_duration: 0.5,
        upload_rate: 1.0,
        per_message_overhead: 0.0,
        per_chunk_processing: 0.0,
        finalization: 0.5,
    };
    let (mut s, mut w) = (0.0, 0.0);
    unsafe {
        assert_eq!(greeter_simulate_latency(&p, 1, &mut s), GreeterStatus::Ok);
        assert_eq!(greeter_simulate_latency(&p, 0, &mut w), GreeterStatus::Ok);
        let bad = GreeterLatencyParams { chunk_duration: 0.0, ..p };
        assert_eq!(greeter_simulate_latency(&bad, 1, &mut s), GreeterStatus::InvalidArgument);
    }
    assert_eq!(s, simulate_latency(&lp, UploadMode::Streaming));
    assert_eq!(w, simulate_latency(&lp, UploadMode::WholeFile));
}

fn face(w: u32, h: u32, x0: u32, y0: u32, seed: u32) -> Vec<u8> {
    let mut px = vec![20u8; (w * h) as usize];
    for y in 0..160u32 {
        for x in 0..160 {
            let cell = (y / 10) * 16 + x / 10;
            let v = 140 + (cell.wrapping_mul(2654435761u32.wrapping_add(seed)) >> 7) % 110;
            px[((y0 + y) * w + x0 + x) as usize] = v as u8;
        }
    }
    px
}

#[test]
fn recognizer_round_trip() {
    let (w, h) = (320, 240);
    let alice = face(w, h, 40, 30, 1);
    let bob = face(w, h, 60, 40, 99);
    let blank = vec![20u8; (w * h) as usize];
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("g.json").to_str().unwrap()).unwrap();
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(greeter_recognizer_new(&mut r), GreeterStatus::Ok);
        let label = CString::new("Alice").unwrap();
        let mut id = vec![0 as std::ffi::c_char; 64];
        assert_eq!(greeter_recognizer_enroll(r, alice.as_ptr(), w, h, label.as_ptr(), id.as_mut_ptr(), id.len()), GreeterStatus::Ok);
        assert_eq!(CStr::from_ptr(id.as_ptr()).to_str().unwrap(), "face-000001");
        assert_eq!(
            greeter_recognizer_enroll(r, blank.as_ptr(), w, h, label.as_ptr(), id.as_mut_ptr(), id.len()),
            GreeterStatus::NoFace
        );
        assert_eq!(greeter_recognizer_len(r), 1);

        let (mut known, mut conf) = (0, 0.0);
        let mut out = vec![0 as std::ffi::c_char; 64];
        assert_eq!(
            greeter_recognizer_identify(r, alice.as_ptr(), w, h, 0.8, &mut known, &mut conf, out.as_mut_ptr(), out.len()),
            GreeterStatus::Ok
        );
        assert_eq!(known, 1);
        assert!((conf - 1.0).abs() < 1e-9);
        assert_eq!(CStr::from_ptr(out.as_ptr()).to_str().unwrap(), "Alice");
        assert_eq!(
            greeter_recognizer_identify(r, bob.as_ptr(), w, h, 0.8, &mut known, &mut conf, out.as_mut_ptr(), out.len()),
            GreeterStatus::Ok
        );
        assert_eq!(known, 0);
        // too small a buffer for the label
        assert_eq!(
            greeter_recognizer_identify(r, alice.as_ptr(), w, h, 0.8, &mut known, &mut conf, out.as_mut_ptr(), 3),
            GreeterStatus::BufferTooSmall
        );

        assert_eq!(greeter_recognizer_save(r, path.as_ptr()), GreeterStatus::Ok);
        greeter_recognizer_free(r);
        let mut r2 = ptr::null_mut();
        assert_eq!(greeter_recognizer_open(path.as_ptr(), &mut r2), GreeterStatus::Ok);
        assert_eq!(greeter_recognizer_len(r2), 1);
        greeter_recognizer_free(r2);
    }
}

#[test]
fn planner_round_trip() {
    let (w, h) = (40usize, 20usize);
    let mut occ = vec![0u8; w * h];
    for r in 0..15 {
        occ[r * w + 20] = 1;
    }
    unsafe {
        let mut cm = ptr::null_mut();
        assert_eq!(greeter_costmap_new(occ.as_ptr(), w, h, 0.1, 0.3, 3.0, &mut cm), GreeterStatus::Ok);
        let mut c = 0u8;
        assert_eq!(greeter_costmap_cost(cm, 20, 0, &mut c), GreeterStatus::Ok);
        assert_eq!(c, 255);
        assert_eq!(greeter_costmap_cost(cm, 40, 0, &mut c), GreeterStatus::InvalidArgument);

        let start = GreeterPose { x: 0.5, y: 0.5, theta: 0.0 };
        let goal = GreeterPose { x: 3.5, y: 0.5, theta: 0.0 };
        let mut p = ptr::null_mut();
        assert_eq!(greeter_plan(cm, &start, &goal, &mut p), GreeterStatus::Ok);
        let n = greeter_path_len(p);
        assert!(n > 2);
        let mut wp = GreeterPose { x: 0.0, y: 0.0, theta: 0.0 };
        let mut top: f64 = 0.0;
        for i in 0..n {
            assert_eq!(greeter_path_waypoint(p, i, &mut wp), GreeterStatus::Ok);
            top = top.max(wp.y);
        }
        // went over the wall's end
        assert!(top > 1.5);
        assert!(greeter_path_cost(p) > 30.0);
        assert_eq!(greeter_path_waypoint(p, n, &mut wp), GreeterStatus::InvalidArgument);
        greeter_path_free(p);

        let inside = GreeterPose { x: 2.05, y: 0.5, theta: 0.0 };
        assert_eq!(greeter_plan(cm, &start, &inside, &mut p), GreeterStatus::InvalidArgument);
        greeter_costmap_free(cm);
    }
}
