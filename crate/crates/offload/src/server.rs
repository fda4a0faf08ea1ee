//! Base-station server and the matching vehicle-side client.
//!
//! One OS thread per connection; requests on a connection are answered
//! strictly in order, and a response reuses the request's `seq` and
//! `timestamp_us` so the vehicle can pair them without a table. The seq
//! discipline is strict: after the first frame, each frame must carry the
//! previous seq plus one, and a violation tears the connection down, as
//! does any frame the codec rejects. An unknown `msg_type` is answered
//! with an [`msg_type::ERROR`] frame and the connection stays up.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use skyhook_nn::Tensor;
use skyhook_perception::{BinMask, UnifiedModel};

use crate::frame::{encode_frame, msg_type, FrameReader, WireFrame};
use crate::messages::{
    decode_detect_request, decode_image_pair, decode_track_request, encode_detections,
    encode_error_info, encode_pose, encode_track_response, ErrorInfo, Image, PoseEstimate,
    TrackReply,
};

/// Error codes carried by [`msg_type::ERROR`] payloads.
pub mod error_code {
    pub const UNKNOWN_MSG_TYPE: u8 = 1;
    pub const BAD_PAYLOAD: u8 = 2;
    pub const MODEL_FAILURE: u8 = 3;
}

#[derive(Clone, Default)]
pub struct BaseConfig {
    /// Perception model answering detect/track requests. Without one the
    /// station still speaks the protocol and returns empty results.
    pub model: Option<Arc<UnifiedModel>>,
    /// Standard deviation of the noise the pose surrogate adds per axis.
    pub slam_sigma: f64,
    /// Seed for the surrogate's noise stream.
    pub seed: u64,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn image_to_tensor(img: &Image) -> Tensor {
    let plane = img.w * img.h;
    let mut data = vec![0f32; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = img.rgb[i * 3 + c] as f32 / 255.0;
        }
    }
    Tensor::new(&[1, 3, img.h, img.w], data).expect("image tensor dims")
}

fn error_frame(req: &WireFrame, code: u8, message: String) -> WireFrame {
    WireFrame::new(
        msg_type::ERROR,
        req.seq,
        req.timestamp_us,
        encode_error_info(&ErrorInfo { code, message }),
    )
}

/// Build the response for one request frame. Pure protocol logic, shared
/// by the TCP path and tests.
pub fn respond(cfg: &BaseConfig, rng: &mut ChaCha8Rng, req: &WireFrame) -> WireFrame {
    let reply = |t: u8, payload: Vec<u8>| WireFrame::new(t, req.seq, req.timestamp_us, payload);
    match req.msg_type {
        msg_type::HEARTBEAT => reply(msg_type::HEARTBEAT, vec![]),
        msg_type::IMAGE_PAIR => match decode_image_pair(&req.payload) {
            Ok(pair) => {
                let mut pose = pair.pose_hint;
                if cfg.slam_sigma > 0.0 {
                    for v in pose.position.iter_mut().chain(pose.attitude.iter_mut()) {
                        *v += cfg.slam_sigma * gauss(rng);
                    }
                }
                reply(msg_type::POSE_ESTIMATE, encode_pose(&pose))
            }
            Err(e) => error_frame(req, error_code::BAD_PAYLOAD, e.to_string()),
        },
        msg_type::DETECT_REQUEST => match decode_detect_request(&req.payload) {
            Ok(img) => {
                let dets = match &cfg.model {
                    Some(m) => match m.detect(&image_to_tensor(&img)) {
                        Ok(d) => d,
                        Err(e) => {
                            return error_frame(req, error_code::MODEL_FAILURE, e.to_string())
                        }
                    },
                    None => vec![],
                };
                reply(msg_type::DETECT_RESPONSE, encode_detections(&dets))
            }
            Err(e) => error_frame(req, error_code::BAD_PAYLOAD, e.to_string()),
        },
        msg_type::TRACK_REQUEST => match decode_track_request(&req.payload) {
            Ok((cur, prev, support)) => {
                let out = match &cfg.model {
                    Some(m) => {
                        let outcome = m.track(
                            &image_to_tensor(&cur),
                            &image_to_tensor(&prev),
                            &support,
                        );
                        match outcome {
                            Ok(o) => TrackReply {
                                t: o.mask.t,
                                lost: o.lost,
                                mask: o.mask.mask,
                            },
                            Err(e) => {
                                return error_frame(req, error_code::MODEL_FAILURE, e.to_string())
                            }
                        }
                    }
                    None => TrackReply {
                        t: support.t + 1,
                        lost: true,
                        mask: BinMask::zeros(cur.w, cur.h),
                    },
                };
                reply(msg_type::TRACK_RESPONSE, encode_track_response(&out))
            }
            Err(e) => error_frame(req, error_code::BAD_PAYLOAD, e.to_string()),
        },
        other => error_frame(
            req,
            error_code::UNKNOWN_MSG_TYPE,
            format!("unknown msg_type {other:#04x}"),
        ),
    }
}

fn handle_connection(mut stream: TcpStream, cfg: BaseConfig, conn_id: u64) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    let mut rng =
        ChaCha8Rng::seed_from_u64(cfg.seed ^ conn_id.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut reader = FrameReader::new();
    let mut expected_seq: Option<u32> = None;
    let mut chunk = vec![0u8; 64 * 1024];
    loop {
        let n = match stream.read(&mut chunk) {
            Ok(0) => return,
            Ok(n) => n,
            Err(e) => {
                log::warn!("[{peer}] read failed: {e}");
                return;
            }
        };
        reader.push(&chunk[..n]);
        loop {
            let frame = match reader.next_frame() {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(e) => {
                    log::warn!("[{peer}] malformed frame, resetting connection: {e}");
                    let _ = stream.shutdown(std::net::Shutdown::Both);
                    return;
                }
            };
            if let Some(want) = expected_seq {
                if frame.seq != want {
                    log::warn!(
                        "[{peer}] out-of-order seq {} (expected {want}), resetting",
                        frame.seq
                    );
                    let _ = stream.shutdown(std::net::Shutdown::Both);
                    return;
                }
            }
            expected_seq = Some(frame.seq.wrapping_add(1));
            let response = respond(&cfg, &mut rng, &frame);
            if let Err(e) = stream.write_all(&encode_frame(&response)) {
                log::warn!("[{peer}] write failed: {e}");
                return;
            }
        }
    }
}

/// Accept and serve connections until `max_conns` have been handled, or
/// forever with `None`. Each connection gets its own thread; per-thread
/// noise streams derive from `cfg.seed` and the connection index.
pub fn serve_base(
    listener: TcpListener,
    cfg: BaseConfig,
    max_conns: Option<usize>,
) -> std::io::Result<()> {
    let mut handles = Vec::new();
    let mut accepted = 0usize;
    for incoming in listener.incoming() {
        let stream = incoming?;
        let cfg = cfg.clone();
        let id = accepted as u64;
        handles.push(std::thread::spawn(move || {
            handle_connection(stream, cfg, id)
        }));
        accepted += 1;
        if let Some(max) = max_conns {
            if accepted >= max {
                break;
            }
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

/// Vehicle-side request/response client. Sends one request at a time and
/// blocks for its response, which keeps exactly one request in flight per
/// connection.
pub struct Client {
    stream: TcpStream,
    reader: FrameReader,
    next_seq: u32,
}

impl Client {
    pub fn connect(addr: impl std::net::ToSocketAddrs) -> std::io::Result<Self> {
        Ok(Client {
            stream: TcpStream::connect(addr)?,
            reader: FrameReader::new(),
            next_seq: 0,
        })
    }

    /// Send a raw pre-encoded byte string, bypassing seq bookkeeping.
    /// Exists for fault-injection tests.
    pub fn send_raw(&mut self, bytes: &[u8]) -> std::io::Result<()> {
        self.stream.write_all(bytes)
    }

    pub fn recv(&mut self) -> std::io::Result<WireFrame> {
        let mut chunk = vec![0u8; 64 * 1024];
        loop {
            if let Some(f) = self
                .reader
                .next_frame()
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?
            {
                return Ok(f);
            }
            let n = self.stream.read(&mut chunk)?;
            if n == 0 {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    "connection closed by station",
                ));
            }
            self.reader.push(&chunk[..n]);
        }
    }

    pub fn request(
        &mut self,
        msg_type: u8,
        timestamp_us: u64,
        payload: Vec<u8>,
    ) -> std::io::Result<WireFrame> {
        let frame = WireFrame::new(msg_type, self.next_seq, timestamp_us, payload);
        self.next_seq = self.next_seq.wrapping_add(1);
        self.stream.write_all(&encode_frame(&frame))?;
        self.recv()
    }
}

/// Convenience: pose estimate for a stereo pair, as the vehicle calls it.
pub fn request_pose(client: &mut Client, pair_payload: Vec<u8>, t_us: u64) -> std::io::Result<PoseEstimate> {
    let resp = client.request(msg_type::IMAGE_PAIR, t_us, pair_payload)?;
    if resp.msg_type != msg_type::POSE_ESTIMATE {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("expected POSE_ESTIMATE, got {:#04x}", resp.msg_type),
        ));
    }
    crate::messages::decode_pose(&resp.payload)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}
