//! Typed payload encodings for each message type.
//!
//! Image-bearing payloads start with a flags byte; bit 0 selects the
//! optional lossless byte-RLE compression (raw RGB is the default, and is
//! what every latency figure in [`crate::link`] assumes). Responses carry
//! no flags byte. All integers are little-endian; floats are IEEE-754 bit
//! patterns, so a round trip is exact.

use crate::frame::WireError;
use crate::rle::{
    decode_bytes_rle, decode_mask, encode_bytes_rle, encode_mask, read_f32, read_f64, read_u16,
    read_u32, read_u64, take,
};
use skyhook_perception::{BinMask, BoxF, BrickClass, InstanceDetection, SupportMask};

pub const FLAG_COMPRESSED: u8 = 0x01;

fn fmt_err(msg: impl Into<String>) -> WireError {
    WireError::Format(msg.into())
}

fn expect_consumed(buf: &[u8], at: usize) -> Result<(), WireError> {
    if at != buf.len() {
        return Err(fmt_err(format!(
            "{} trailing payload bytes",
            buf.len() - at
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub w: usize,
    pub h: usize,
    /// Row-major RGB, 3 bytes per pixel.
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(w: usize, h: usize, rgb: Vec<u8>) -> Self {
        assert_eq!(rgb.len(), w * h * 3, "rgb length must be w*h*3");
        Image { w, h, rgb }
    }

    pub fn blank(w: usize, h: usize) -> Self {
        Image::new(w, h, vec![0; w * h * 3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub position: [f64; 3],
    pub attitude: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub pose_hint: PoseEstimate,
    pub left: Image,
    pub right: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReply {
    pub t: u64,
    pub lost: bool,
    pub mask: BinMask,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorInfo {
    pub code: u8,
    pub message: String,
}

pub fn encode_image(img: &Image, compressed: bool, out: &mut Vec<u8>) {
    out.extend_from_slice(&(img.w as u16).to_le_bytes());
    out.extend_from_slice(&(img.h as u16).to_le_bytes());
    if compressed {
        let rle = encode_bytes_rle(&img.rgb);
        out.extend_from_slice(&(rle.len() as u32).to_le_bytes());
        out.extend_from_slice(&rle);
    } else {
        out.extend_from_slice(&img.rgb);
    }
}

pub fn decode_image(buf: &[u8], at: &mut usize, compressed: bool) -> Result<Image, WireError> {
    let w = read_u16(buf, at)? as usize;
    let h = read_u16(buf, at)? as usize;
    let raw_len = w * h * 3;
    let rgb = if compressed {
        let rle_len = read_u32(buf, at)? as usize;
        decode_bytes_rle(take(buf, at, rle_len)?, raw_len)?
    } else {
        take(buf, at, raw_len)?.to_vec()
    };
    Ok(Image { w, h, rgb })
}

fn encode_pose_fields(pose: &PoseEstimate, out: &mut Vec<u8>) {
    for v in pose.position.iter().chain(pose.attitude.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn decode_pose_fields(buf: &[u8], at: &mut usize) -> Result<PoseEstimate, WireError> {
    let mut vals = [0f64; 6];
    for v in &mut vals {
        *v = read_f64(buf, at)?;
    }
    Ok(PoseEstimate {
        position: [vals[0], vals[1], vals[2]],
        attitude: [vals[3], vals[4], vals[5]],
    })
}

pub fn encode_pose(pose: &PoseEstimate) -> Vec<u8> {
    let mut out = Vec::with_capacity(48);
    encode_pose_fields(pose, &mut out);
    out
}

pub fn decode_pose(buf: &[u8]) -> Result<PoseEstimate, WireError> {
    let mut at = 0;
    let pose = decode_pose_fields(buf, &mut at)?;
    expect_consumed(buf, at)?;
    Ok(pose)
}

pub fn encode_image_pair(pair: &ImagePair, compressed: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(if compressed { FLAG_COMPRESSED } else { 0 });
    encode_pose_fields(&pair.pose_hint, &mut out);
    encode_image(&pair.left, compressed, &mut out);
    encode_image(&pair.right, compressed, &mut out);
    out
}

pub fn decode_image_pair(buf: &[u8]) -> Result<ImagePair, WireError> {
    let mut at = 0;
    let flags = take(buf, &mut at, 1)?[0];
    let compressed = flags & FLAG_COMPRESSED != 0;
    let pose_hint = decode_pose_fields(buf, &mut at)?;
    let left = decode_image(buf, &mut at, compressed)?;
    let right = decode_image(buf, &mut at, compressed)?;
    expect_consumed(buf, at)?;
    Ok(ImagePair {
        pose_hint,
        left,
        right,
    })
}

pub fn encode_detect_request(img: &Image, compressed: bool) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(if compressed { FLAG_COMPRESSED } else { 0 });
    encode_image(img, compressed, &mut out);
    out
}

pub fn decode_detect_request(buf: &[u8]) -> Result<Image, WireError> {
    let mut at = 0;
    let flags = take(buf, &mut at, 1)?[0];
    let img = decode_image(buf, &mut at, flags & FLAG_COMPRESSED != 0)?;
    expect_consumed(buf, at)?;
    Ok(img)
}

pub fn encode_detections(dets: &[InstanceDetection]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(dets.len() as u16).to_le_bytes());
    for d in dets {
        out.push(d.class.id() as u8);
        out.extend_from_slice(&d.score.to_le_bytes());
        for v in [d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        encode_mask(&d.mask, &mut out);
        encode_mask(&d.part_mask, &mut out);
    }
    out
}

pub fn decode_detections(buf: &[u8]) -> Result<Vec<InstanceDetection>, WireError> {
    let mut at = 0;
    let count = read_u16(buf, &mut at)? as usize;
    let mut dets = Vec::with_capacity(count);
    for _ in 0..count {
        let class_id = take(buf, &mut at, 1)?[0] as usize;
        let class = BrickClass::from_id(class_id)
            .ok_or_else(|| fmt_err(format!("bad class id {class_id}")))?;
        let score = read_f32(buf, &mut at)?;
        let x0 = read_f64(buf, &mut at)?;
        let y0 = read_f64(buf, &mut at)?;
        let x1 = read_f64(buf, &mut at)?;
        let y1 = read_f64(buf, &mut at)?;
        let mask = decode_mask(buf, &mut at)?;
        let part_mask = decode_mask(buf, &mut at)?;
        dets.push(InstanceDetection {
            class,
            score,
            bbox: BoxF::new(x0, y0, x1, y1),
            mask,
            part_mask,
        });
    }
    expect_consumed(buf, at)?;
    Ok(dets)
}

pub fn encode_track_request(
    cur: &Image,
    prev: &Image,
    support: &SupportMask,
    compressed: bool,
) -> Vec<u8> {
    let mut out = Vec::new();
    out.push(if compressed { FLAG_COMPRESSED } else { 0 });
    encode_image(cur, compressed, &mut out);
    encode_image(prev, compressed, &mut out);
    out.extend_from_slice(&support.t.to_le_bytes());
    encode_mask(&support.mask, &mut out);
    out
}

pub fn decode_track_request(buf: &[u8]) -> Result<(Image, Image, SupportMask), WireError> {
    let mut at = 0;
    let flags = take(buf, &mut at, 1)?[0];
    let compressed = flags & FLAG_COMPRESSED != 0;
    let cur = decode_image(buf, &mut at, compressed)?;
    let prev = decode_image(buf, &mut at, compressed)?;
    let t = read_u64(buf, &mut at)?;
    let mask = decode_mask(buf, &mut at)?;
    expect_consumed(buf, at)?;
    Ok((cur, prev, SupportMask::new(mask, t)))
}

pub fn encode_track_response(reply: &TrackReply) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&reply.t.to_le_bytes());
    out.push(reply.lost as u8);
    encode_mask(&reply.mask, &mut out);
    out
}

pub fn decode_track_response(buf: &[u8]) -> Result<TrackReply, WireError> {
    let mut at = 0;
    let t = read_u64(buf, &mut at)?;
    let lost = take(buf, &mut at, 1)?[0] != 0;
    let mask = decode_mask(buf, &mut at)?;
    expect_consumed(buf, at)?;
    Ok(TrackReply { t, lost, mask })
}

pub fn encode_error_info(info: &ErrorInfo) -> Vec<u8> {
    let mut out = vec![info.code];
    out.extend_from_slice(info.message.as_bytes());
    out
}

pub fn decode_error_info(buf: &[u8]) -> Result<ErrorInfo, WireError> {
    let mut at = 0;
    let code = take(buf, &mut at, 1)?[0];
    let message = String::from_utf8(buf[at..].to_vec())
        .map_err(|_| fmt_err("error message is not UTF-8"))?;
    Ok(ErrorInfo { code, message })
}
