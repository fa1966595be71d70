use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ptf_fedrec_ffi::*;

const CONFIG: &str = "dataset = planted(20,60,2)\nrounds = 2\ndim = 8\nalpha = 6\n";

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; ptf_last_error_length() + 1];
    let n = unsafe { ptf_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n >= 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn new_world(config: &str, seed: u64) -> (PtfStatus, *mut PtfWorld) {
    let text = CString::new(config).unwrap();
    let mut world = ptr::null_mut();
    let status = unsafe { ptf_world_new(text.as_ptr(), seed, &mut world) };
    (status, world)
}

fn run_to_end(seed: u64) -> (Vec<(u64, u64, u64)>, PtfMetrics) {
    let (status, world) = new_world(CONFIG, seed);
    assert_eq!(status, PtfStatus::Ok);
    let mut rounds = Vec::new();
    let mut stats = PtfRoundStats::default();
    while unsafe { ptf_world_run_round(world, &mut stats) } == PtfStatus::Ok {
        rounds.push((stats.uplink_bytes, stats.downlink_bytes, stats.client_loss.to_bits()));
    }
    assert_eq!(unsafe { ptf_world_rounds_completed(world) }, 2);
    let mut m = PtfMetrics::default();
    assert_eq!(unsafe { ptf_world_evaluate(world, &mut m) }, PtfStatus::Ok);
    unsafe { ptf_world_free(world) };
    (rounds, m)
}

#[test]
fn world_lifecycle_is_deterministic() {
    let (a, ma) = run_to_end(1);
    let (b, mb) = run_to_end(1);
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
    assert_eq!(ma.recall.to_bits(), mb.recall.to_bits());
    assert_eq!(ma.users, 20);
}

#[test]
fn finished_world_reports_finished() {
    let (_, world) = new_world(CONFIG, 0);
    for _ in 0..2 {
        assert_eq!(unsafe { ptf_world_run_round(world, ptr::null_mut()) }, PtfStatus::Ok);
    }
    assert_eq!(unsafe { ptf_world_run_round(world, ptr::null_mut()) }, PtfStatus::Finished);
    assert!(last_error().contains("2 rounds"));
    unsafe { ptf_world_free(world) };
}

#[test]
fn traffic_matches_wire_length() {
    let (_, world) = new_world(CONFIG, 2);
    unsafe { ptf_world_run_round(world, ptr::null_mut()) };
    let (mut up, mut down) = (0, 0);
    assert_eq!(unsafe { ptf_world_traffic(world, 0, 3, &mut up, &mut down) }, PtfStatus::Ok);
    assert_eq!(down as usize, ptf_encoded_len(6));
    assert_eq!((up as usize - 16) % 12, 0);
    unsafe { ptf_world_free(world) };
}

#[test]
fn bad_configs_map_to_config_status() {
    let (status, world) = new_world("rounds = 2\n", 0);
    assert_eq!(status, PtfStatus::Config);
    assert!(world.is_null());
    assert!(last_error().contains("dataset"));

    let (status, _) = new_world("dataset = planted(8,16,2)\nmu = 1.5\n", 0);
    assert_eq!(status, PtfStatus::Config);
    let (status, _) = new_world("dataset = planted(8,16,2)\nwidth = 3\n", 0);
    assert_eq!(status, PtfStatus::Config);
}

#[test]
fn null_pointers_are_rejected() {
    let mut world = ptr::null_mut();
    assert_eq!(unsafe { ptf_world_new(ptr::null(), 0, &mut world) }, PtfStatus::NullPointer);
    assert_eq!(unsafe { ptf_world_run_round(ptr::null_mut(), ptr::null_mut()) }, PtfStatus::NullPointer);
    assert_eq!(unsafe { ptf_world_n_users(ptr::null()) }, 0);
    unsafe { ptf_world_free(ptr::null_mut()) };
}

#[test]
fn upload_round_trips_through_caller_buffers() {
    let items = [3u32, 11, 40];
    let scores = [0.1, 0.5, 0.9];
    let mut written = 0;
    // Size query first.
    let status = unsafe { ptf_upload_encode(9, items.as_ptr(), scores.as_ptr(), 3, ptr::null_mut(), 0, &mut written) };
    assert_eq!(status, PtfStatus::BufferTooSmall);
    assert_eq!(written, 16 + 12 * 3);
    let mut buf = vec![0u8; written];
    let status = unsafe { ptf_upload_encode(9, items.as_ptr(), scores.as_ptr(), 3, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(status, PtfStatus::Ok);

    let (mut user, mut count) = (0u32, 0usize);
    let (mut oi, mut os) = ([0u32; 3], [0f64; 3]);
    let status = unsafe { ptf_upload_decode(buf.as_ptr(), buf.len(), &mut user, oi.as_mut_ptr(), os.as_mut_ptr(), 1, &mut count) };
    assert_eq!((status, count), (PtfStatus::BufferTooSmall, 3));
    let status = unsafe { ptf_upload_decode(buf.as_ptr(), buf.len(), &mut user, oi.as_mut_ptr(), os.as_mut_ptr(), 3, &mut count) };
    assert_eq!(status, PtfStatus::Ok);
    assert_eq!((user, oi, os), (9, items, scores));

    let status = unsafe { ptf_upload_decode(buf.as_ptr(), buf.len() - 1, &mut user, oi.as_mut_ptr(), os.as_mut_ptr(), 3, &mut count) };
    assert_eq!(status, PtfStatus::Wire);
    assert!(last_error().contains("truncated"));
}

#[test]
fn hints_and_uploads_are_not_interchangeable() {
    let (items, scores) = ([1u32], [0.5f64]);
    let mut buf = [0u8; 28];
    let mut written = 0;
    unsafe { ptf_hint_encode(2, items.as_ptr(), scores.as_ptr(), 1, buf.as_mut_ptr(), 28, &mut written) };
    let (mut user, mut count, mut oi, mut os) = (0u32, 0usize, [0u32], [0f64]);
    let decode_upload = unsafe { ptf_upload_decode(buf.as_ptr(), 28, &mut user, oi.as_mut_ptr(), os.as_mut_ptr(), 1, &mut count) };
    assert_eq!(decode_upload, PtfStatus::Wire);
    let decode_hint = unsafe { ptf_hint_decode(buf.as_ptr(), 28, &mut user, oi.as_mut_ptr(), os.as_mut_ptr(), 1, &mut count) };
    assert_eq!(decode_hint, PtfStatus::Ok);
    assert_eq!((user, oi[0]), (2, 1));
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(ptf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compile the C smoke program against the generated header and the static
/// library, then run it.
#[test]
fn c_program_links_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libptf_fedrec_ffi.a");
    if !lib.exists() {
        let status = Command::new(env!("CARGO"))
            .args(["build", "-p", "ptf-fedrec-ffi", "--lib"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert!(lib.exists(), "missing {}", lib.display());
    let out = tempfile_path("ptf_smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.starts_with("ok "));
    let _ = std::fs::remove_file(&out);
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("{stem}-{}", std::process::id()))
}
