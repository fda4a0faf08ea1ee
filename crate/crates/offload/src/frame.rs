//! Framed wire codec.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "UAVC"
//! 4       1     version (0x01)
//! 5       1     msg_type
//! 6       4     seq
//! 10      8     timestamp_us
//! 18      4     payload_len
//! 22      len   payload
//! 22+len  4     crc32 over bytes [0, 22+len)
//! ```
//!
//! A frame is therefore `22 + payload_len + 4` bytes; an empty-payload
//! heartbeat is exactly 26. The CRC is the reflected-polynomial CRC-32
//! (0xEDB88320), i.e. the common zlib/PNG checksum.

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"UAVC";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 22;
pub const TRAILER_LEN: usize = 4;

/// Upper bound on payload_len accepted by the decoder. A stereo pair is
/// under half a megabyte; anything past this is a corrupt length field,
/// and rejecting it keeps a flipped bit from stalling the stream forever.
pub const MAX_PAYLOAD: usize = 1 << 26;

/// Message type codes. Values 0..=6 are the protocol proper; `ERROR` is
/// the station's reply to a request it cannot interpret.
pub mod msg_type {
    pub const HEARTBEAT: u8 = 0;
    pub const IMAGE_PAIR: u8 = 1;
    pub const POSE_ESTIMATE: u8 = 2;
    pub const DETECT_REQUEST: u8 = 3;
    pub const DETECT_RESPONSE: u8 = 4;
    pub const TRACK_REQUEST: u8 = 5;
    pub const TRACK_RESPONSE: u8 = 6;
    pub const ERROR: u8 = 0x7F;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("format error: {0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    /// The buffer holds a valid prefix of a frame; decode again once more
    /// bytes arrive.
    #[error("need more bytes")]
    NeedMoreBytes,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    pub msg_type: u8,
    pub seq: u32,
    pub timestamp_us: u64,
    pub payload: Vec<u8>,
}

impl WireFrame {
    pub fn new(msg_type: u8, seq: u32, timestamp_us: u64, payload: Vec<u8>) -> Self {
        WireFrame {
            msg_type,
            seq,
            timestamp_us,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + TRAILER_LEN
    }
}

pub fn encode_frame(f: &WireFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(f.msg_type);
    out.extend_from_slice(&f.seq.to_le_bytes());
    out.extend_from_slice(&f.timestamp_us.to_le_bytes());
    out.extend_from_slice(&(f.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&f.payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decode one frame from the front of `buf`. On success returns the frame
/// and the number of bytes consumed. Checks run in a fixed order: magic,
/// version, length, CRC. An incomplete but so-far-valid prefix yields
/// [`WireError::NeedMoreBytes`].
pub fn decode_frame(buf: &[u8]) -> Result<(WireFrame, usize), WireError> {
    let probe = buf.len().min(MAGIC.len());
    if buf[..probe] != MAGIC[..probe] {
        return Err(WireError::Format(format!(
            "bad magic {:02x?}",
            &buf[..probe]
        )));
    }
    if buf.len() < HEADER_LEN {
        return Err(WireError::NeedMoreBytes);
    }
    if buf[4] != VERSION {
        return Err(WireError::Format(format!(
            "unsupported version {:#04x}",
            buf[4]
        )));
    }
    let payload_len = u32::from_le_bytes(buf[18..22].try_into().unwrap()) as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(WireError::Format(format!(
            "payload_len {payload_len} exceeds cap {MAX_PAYLOAD}"
        )));
    }
    let total = HEADER_LEN + payload_len + TRAILER_LEN;
    if buf.len() < total {
        return Err(WireError::NeedMoreBytes);
    }
    let body = HEADER_LEN + payload_len;
    let computed = crc32fast::hash(&buf[..body]);
    let stored = u32::from_le_bytes(buf[body..total].try_into().unwrap());
    if stored != computed {
        return Err(WireError::Checksum { stored, computed });
    }
    let frame = WireFrame {
        msg_type: buf[5],
        seq: u32::from_le_bytes(buf[6..10].try_into().unwrap()),
        timestamp_us: u64::from_le_bytes(buf[10..18].try_into().unwrap()),
        payload: buf[HEADER_LEN..body].to_vec(),
    };
    Ok((frame, total))
}

/// Incremental decoder over a byte stream cut at arbitrary boundaries.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn new() -> Self {
        FrameReader::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Pop the next complete frame, `Ok(None)` if more bytes are needed.
    /// Hard errors (bad magic, bad CRC) are not recoverable: the caller
    /// should drop the connection rather than resynchronize.
    pub fn next_frame(&mut self) -> Result<Option<WireFrame>, WireError> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        match decode_frame(&self.buf) {
            Ok((frame, used)) => {
                self.buf.drain(..used);
                Ok(Some(frame))
            }
            Err(WireError::NeedMoreBytes) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn pending_bytes(&self) -> usize {
        self.buf.len()
    }
}
