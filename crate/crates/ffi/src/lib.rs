//! C ABI over the simulator.
//!
//! Every fallible call returns a [`PtfStatus`]; on failure the message is
//! kept per thread and read back with [`ptf_last_error_message`]. Worlds are
//! opaque handles created by [`ptf_world_new`] and released by
//! [`ptf_world_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ptf_fedrec::cli::config::{ConfigError, ExperimentConfig};
use ptf_fedrec::client::UploadPayload;
use ptf_fedrec::domain::{ItemId, UserId};
use ptf_fedrec::protocol::wire;
use ptf_fedrec::protocol::{FcfWorld, Protocol, ProtocolError, PtfWorld as ScoreWorld, Simulation};
use ptf_fedrec::server::HintDataset;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Protocol = 4,
    Wire = 5,
    BufferTooSmall = 6,
    Finished = 7,
    Panic = 8,
}

/// Outcome of one simulated round. Absent values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtfRoundStats {
    pub round: u32,
    pub participants: u32,
    pub client_loss: f64,
    pub server_loss: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub attack_f1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PtfMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub users: u32,
}

/// Opaque simulation handle.
pub struct PtfWorld {
    sim: Box<dyn Simulation>,
    next_round: usize,
    rounds: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg.into()));
}

fn fail(status: PtfStatus, msg: impl Into<String>) -> PtfStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PtfStatus) -> PtfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(PtfStatus::Panic, msg)
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ptf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, without the
/// terminating NUL. Zero when there is none.
#[no_mangle]
pub extern "C" fn ptf_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |m| m.len()))
}

/// Copy the last error message into `buf` with a terminating NUL.
///
/// Returns the number of bytes written excluding the NUL, 0 if there is no
/// error, or -1 if `buf` is null or shorter than the message plus one.
///
/// # Safety
/// `buf` must be valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn ptf_last_error_message(buf: *mut c_char, len: usize) -> isize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        if buf.is_null() || len < msg.len() + 1 {
            return -1;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast(), msg.len());
        *buf.add(msg.len()) = 0;
        msg.len() as isize
    })
}

/// Forget the last error on this thread.
#[no_mangle]
pub extern "C" fn ptf_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn build_world(document: &str, seed: u64) -> Result<PtfWorld, PtfStatus> {
    let config_err = |e: ConfigError| fail(PtfStatus::Config, e.to_string());
    let protocol_err = |e: ProtocolError| fail(PtfStatus::Protocol, e.to_string());
    let cfg = ExperimentConfig::parse_document(document).map_err(config_err)?;
    cfg.validate(true).map_err(config_err)?;
    let store = cfg.load_store(seed).map_err(config_err)?;
    let world_cfg = cfg.world_config(seed);
    let rounds = world_cfg.round.rounds;
    let sim: Box<dyn Simulation> = match cfg.protocol {
        Protocol::Ptf => Box::new(ScoreWorld::new(store, world_cfg).map_err(protocol_err)?),
        Protocol::Fcf => Box::new(FcfWorld::new(store, world_cfg).map_err(protocol_err)?),
    };
    Ok(PtfWorld {
        sim,
        next_round: 0,
        rounds,
    })
}

/// Build a world from a `key = value` configuration document and a seed.
///
/// # Safety
/// `config` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_new(config: *const c_char, seed: u64, out: *mut *mut PtfWorld) -> PtfStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(PtfStatus::NullPointer, "config and out must not be null");
        }
        *out = ptr::null_mut();
        let Ok(text) = CStr::from_ptr(config).to_str() else {
            return fail(PtfStatus::InvalidArgument, "config is not valid UTF-8");
        };
        match build_world(text, seed) {
            Ok(w) => {
                *out = Box::into_raw(Box::new(w));
                PtfStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Release a world. Null is ignored.
///
/// # Safety
/// `world` must come from [`ptf_world_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_free(world: *mut PtfWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Configured number of rounds.
///
/// # Safety
/// `world` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_rounds(world: *const PtfWorld) -> usize {
    world.as_ref().map_or(0, |w| w.rounds)
}

/// Rounds run so far.
///
/// # Safety
/// `world` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_rounds_completed(world: *const PtfWorld) -> usize {
    world.as_ref().map_or(0, |w| w.next_round)
}

/// Number of users (clients) in the world.
///
/// # Safety
/// `world` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_n_users(world: *const PtfWorld) -> usize {
    world.as_ref().map_or(0, |w| w.sim.store().n_users())
}

/// Number of catalogue items.
///
/// # Safety
/// `world` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_n_items(world: *const PtfWorld) -> usize {
    world.as_ref().map_or(0, |w| w.sim.store().n_items())
}

/// Run the next round. Returns `Finished` once every configured round ran.
///
/// # Safety
/// `world` must be a live handle; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_run_round(world: *mut PtfWorld, out: *mut PtfRoundStats) -> PtfStatus {
    guard(|| {
        let Some(w) = world.as_mut() else {
            return fail(PtfStatus::NullPointer, "world must not be null");
        };
        if w.next_round >= w.rounds {
            return fail(PtfStatus::Finished, format!("all {} rounds have run", w.rounds));
        }
        match w.sim.run_round(w.next_round) {
            Ok(r) => {
                w.next_round += 1;
                if let Some(out) = out.as_mut() {
                    *out = PtfRoundStats {
                        round: r.round as u32,
                        participants: r.participants as u32,
                        client_loss: r.client_loss,
                        server_loss: r.server_loss.unwrap_or(f64::NAN),
                        uplink_bytes: r.uplink_bytes,
                        downlink_bytes: r.downlink_bytes,
                        attack_f1: r.attack_f1.unwrap_or(f64::NAN),
                    };
                }
                PtfStatus::Ok
            }
            Err(e) => fail(PtfStatus::Protocol, e.to_string()),
        }
    })
}

/// Rank the test split with the current model.
///
/// # Safety
/// `world` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_evaluate(world: *const PtfWorld, out: *mut PtfMetrics) -> PtfStatus {
    guard(|| {
        let (Some(w), Some(out)) = (world.as_ref(), out.as_mut()) else {
            return fail(PtfStatus::NullPointer, "world and out must not be null");
        };
        match w.sim.evaluate() {
            Ok(m) => {
                *out = PtfMetrics {
                    recall: m.recall,
                    ndcg: m.ndcg,
                    users: m.users as u32,
                };
                PtfStatus::Ok
            }
            Err(e) => fail(PtfStatus::Protocol, e.to_string()),
        }
    })
}

/// Bytes a user sent and received in a round, zero if it was absent.
///
/// # Safety
/// `world`, `uplink` and `downlink` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ptf_world_traffic(
    world: *const PtfWorld,
    round: usize,
    user: u32,
    uplink: *mut u64,
    downlink: *mut u64,
) -> PtfStatus {
    let (Some(w), false, false) = (world.as_ref(), uplink.is_null(), downlink.is_null()) else {
        return fail(PtfStatus::NullPointer, "world, uplink and downlink must not be null");
    };
    let (up, down) = w.sim.ledger().traffic(round, UserId(user));
    *uplink = up;
    *downlink = down;
    PtfStatus::Ok
}

/// Encoded size of a score message carrying `count` triples.
#[no_mangle]
pub extern "C" fn ptf_encoded_len(count: usize) -> usize {
    wire::encoded_len(count)
}

unsafe fn entries_from(items: *const u32, scores: *const f64, count: usize) -> Option<Vec<(ItemId, f64)>> {
    if count == 0 {
        return Some(Vec::new());
    }
    if items.is_null() || scores.is_null() {
        return None;
    }
    let items = std::slice::from_raw_parts(items, count);
    let scores = std::slice::from_raw_parts(scores, count);
    Some(items.iter().zip(scores).map(|(&i, &s)| (ItemId(i), s)).collect())
}

unsafe fn write_bytes(bytes: &[u8], buf: *mut u8, cap: usize, written: *mut usize) -> PtfStatus {
    if written.is_null() {
        return fail(PtfStatus::NullPointer, "written must not be null");
    }
    *written = bytes.len();
    if buf.is_null() || cap < bytes.len() {
        return fail(
            PtfStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {cap}", bytes.len()),
        );
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
    PtfStatus::Ok
}

unsafe fn read_entries(
    decoded: Result<(UserId, Vec<(ItemId, f64)>), wire::WireError>,
    user: *mut u32,
    items: *mut u32,
    scores: *mut f64,
    cap: usize,
    count: *mut usize,
) -> PtfStatus {
    if user.is_null() || count.is_null() {
        return fail(PtfStatus::NullPointer, "user and count must not be null");
    }
    let (u, entries) = match decoded {
        Ok(d) => d,
        Err(e) => return fail(PtfStatus::Wire, e.to_string()),
    };
    *user = u.0;
    *count = entries.len();
    if entries.is_empty() {
        return PtfStatus::Ok;
    }
    if items.is_null() || scores.is_null() || cap < entries.len() {
        return fail(
            PtfStatus::BufferTooSmall,
            format!("need room for {} entries, have {cap}", entries.len()),
        );
    }
    for (k, (i, s)) in entries.into_iter().enumerate() {
        *items.add(k) = i.0;
        *scores.add(k) = s;
    }
    PtfStatus::Ok
}

/// Encode a client upload. On `BufferTooSmall`, `written` holds the size
/// needed.
///
/// # Safety
/// `items` and `scores` must hold `count` values; `buf` must be valid for
/// `cap` bytes; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptf_upload_encode(
    user: u32,
    items: *const u32,
    scores: *const f64,
    count: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> PtfStatus {
    guard(|| {
        let Some(entries) = entries_from(items, scores, count) else {
            return fail(PtfStatus::NullPointer, "items and scores must not be null");
        };
        let bytes = wire::encode_upload(&UploadPayload {
            user: UserId(user),
            entries,
        });
        write_bytes(&bytes, buf, cap, written)
    })
}

/// Decode a client upload into caller buffers of `cap` entries. `count`
/// always receives the number of entries in the message.
///
/// # Safety
/// `buf` must be valid for `len` bytes; `items` and `scores` for `cap`
/// values; `user` and `count` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ptf_upload_decode(
    buf: *const u8,
    len: usize,
    user: *mut u32,
    items: *mut u32,
    scores: *mut f64,
    cap: usize,
    count: *mut usize,
) -> PtfStatus {
    guard(|| {
        if buf.is_null() {
            return fail(PtfStatus::NullPointer, "buf must not be null");
        }
        let decoded = wire::decode_upload(std::slice::from_raw_parts(buf, len)).map(|p| (p.user, p.entries));
        read_entries(decoded, user, items, scores, cap, count)
    })
}

/// Encode a server hint. Same conventions as [`ptf_upload_encode`].
///
/// # Safety
/// As for [`ptf_upload_encode`].
#[no_mangle]
pub unsafe extern "C" fn ptf_hint_encode(
    user: u32,
    items: *const u32,
    scores: *const f64,
    count: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> PtfStatus {
    guard(|| {
        let Some(entries) = entries_from(items, scores, count) else {
            return fail(PtfStatus::NullPointer, "items and scores must not be null");
        };
        let bytes = wire::encode_hint(&HintDataset {
            user: UserId(user),
            entries,
        });
        write_bytes(&bytes, buf, cap, written)
    })
}

/// Decode a server hint. Same conventions as [`ptf_upload_decode`].
///
/// # Safety
/// As for [`ptf_upload_decode`].
#[no_mangle]
pub unsafe extern "C" fn ptf_hint_decode(
    buf: *const u8,
    len: usize,
    user: *mut u32,
    items: *mut u32,
    scores: *mut f64,
    cap: usize,
    count: *mut usize,
) -> PtfStatus {
    guard(|| {
        if buf.is_null() {
            return fail(PtfStatus::NullPointer, "buf must not be null");
        }
        let decoded = wire::decode_hint(std::slice::from_raw_parts(buf, len)).map(|h| (h.user, h.entries));
        read_entries(decoded, user, items, scores, cap, count)
    })
}
