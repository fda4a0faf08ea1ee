//! Computation offload between the vehicle and a ground station.
//!
//! Three layers, each usable on its own:
//!
//! * [`frame`]: the framed wire codec. Every message travels as a
//!   fixed 22-byte header, a payload, and a trailing CRC-32. Decoding is
//!   resumable, so a TCP byte stream can be cut at arbitrary boundaries.
//! * [`link`]: a deterministic radio-link emulator. A frame costs its
//!   serialization time at the configured bandwidth plus a fixed base
//!   latency, with FIFO ordering and optional random drops.
//! * [`server`]: a thread-per-connection base station that answers
//!   detection, tracking, and pose requests over the wire protocol.
//!
//! [`messages`] holds the typed payload encodings shared by the vehicle
//! and the station; [`rle`] is the run-length mask codec they use.

pub mod frame;
pub mod link;
pub mod messages;
pub mod rle;
pub mod server;

pub use frame::{
    decode_frame, encode_frame, msg_type, FrameReader, WireError, WireFrame, HEADER_LEN,
    MAGIC, MAX_PAYLOAD, TRAILER_LEN, VERSION,
};
pub use link::{link_transmit, LinkEmulator, LinkSpec};
pub use messages::{
    decode_detect_request, decode_detections, decode_error_info, decode_image,
    decode_image_pair, decode_pose, decode_track_request, decode_track_response,
    encode_detect_request, encode_detections, encode_error_info, encode_image,
    encode_image_pair, encode_pose, encode_track_request, encode_track_response, ErrorInfo,
    Image, ImagePair, PoseEstimate, TrackReply, FLAG_COMPRESSED,
};
pub use rle::{decode_bytes_rle, decode_mask, encode_bytes_rle, encode_mask};
pub use server::{error_code, request_pose, respond, serve_base, BaseConfig, Client};
