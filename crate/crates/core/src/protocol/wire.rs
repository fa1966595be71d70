//! Bit-exact wire format for score triples.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PTFP"
//! 4       2     version (u16 LE)
//! 6       1     direction (0 = client→server, 1 = server→client)
//! 7       1     padding (0)
//! 8       4     user id (u32 LE)
//! 12      4     count (u32 LE)
//! 16      12·n  { item id u32 LE | score f64 LE }
//! ```
//!
//! The format carries nothing but `(item, score)` pairs for one user; there
//! is no field through which model parameters could travel.

use thiserror::Error;

use crate::client::UploadPayload;
use crate::domain::{ItemId, UserId};
use crate::server::HintDataset;

pub const MAGIC: &[u8; 4] = b"PTFP";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const ENTRY_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Direction {
    Uplink = 0,
    Downlink = 1,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported wire version {0}")]
    BadVersion(u16),
    #[error("unknown direction byte {0}")]
    BadDirection(u8),
    #[error("expected a {expected:?} message, got {got:?}")]
    WrongDirection { expected: Direction, got: Direction },
    #[error("truncated message: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
}

/// Decoded message before it is given a direction-specific type.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub direction: Direction,
    pub user: UserId,
    pub entries: Vec<(ItemId, f64)>,
}

pub const fn encoded_len(count: usize) -> usize {
    HEADER_LEN + ENTRY_LEN * count
}

pub fn encode_frame(direction: Direction, user: UserId, entries: &[(ItemId, f64)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(entries.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(direction as u8);
    out.push(0);
    out.extend_from_slice(&user.0.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for &(item, score) in entries {
        out.extend_from_slice(&item.0.to_le_bytes());
        out.extend_from_slice(&score.to_le_bytes());
    }
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(WireError::BadVersion(version));
    }
    let direction = match bytes[6] {
        0 => Direction::Uplink,
        1 => Direction::Downlink,
        other => return Err(WireError::BadDirection(other)),
    };
    let user = UserId(u32::from_le_bytes(bytes[8..12].try_into().unwrap()));
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let needed = encoded_len(count);
    if bytes.len() < needed {
        return Err(WireError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(WireError::TrailingBytes(bytes.len() - needed));
    }
    let entries = bytes[HEADER_LEN..]
        .chunks_exact(ENTRY_LEN)
        .map(|c| {
            (
                ItemId(u32::from_le_bytes(c[0..4].try_into().unwrap())),
                f64::from_le_bytes(c[4..12].try_into().unwrap()),
            )
        })
        .collect();
    Ok(Frame {
        direction,
        user,
        entries,
    })
}

fn expect(frame: &Frame, expected: Direction) -> Result<(), WireError> {
    if frame.direction != expected {
        return Err(WireError::WrongDirection {
            expected,
            got: frame.direction,
        });
    }
    Ok(())
}

pub fn encode_upload(p: &UploadPayload) -> Vec<u8> {
    encode_frame(Direction::Uplink, p.user, &p.entries)
}

pub fn decode_upload(bytes: &[u8]) -> Result<UploadPayload, WireError> {
    let f = decode_frame(bytes)?;
    expect(&f, Direction::Uplink)?;
    Ok(UploadPayload {
        user: f.user,
        entries: f.entries,
    })
}

pub fn encode_hint(h: &HintDataset) -> Vec<u8> {
    encode_frame(Direction::Downlink, h.user, &h.entries)
}

pub fn decode_hint(bytes: &[u8]) -> Result<HintDataset, WireError> {
    let f = decode_frame(bytes)?;
    expect(&f, Direction::Downlink)?;
    Ok(HintDataset {
        user: f.user,
        entries: f.entries,
    })
}

/// Raw little-endian f32 encoding used by the parameter-averaging baseline.
pub fn encode_f32_params(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_f32_params(bytes: &[u8]) -> Result<Vec<f64>, WireError> {
    if bytes.len() % 4 != 0 {
        return Err(WireError::Truncated {
            needed: bytes.len().next_multiple_of(4),
            have: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}
