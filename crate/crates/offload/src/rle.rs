//! Run-length codecs: binary masks for the wire protocol and a byte-level
//! variant behind the optional image compression flag.

use crate::frame::WireError;
use skyhook_perception::BinMask;

fn fmt_err(msg: impl Into<String>) -> WireError {
    WireError::Format(msg.into())
}

pub(crate) fn take<'a>(buf: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8], WireError> {
    let end = at.checked_add(n).ok_or_else(|| fmt_err("length overflow"))?;
    if end > buf.len() {
        return Err(fmt_err("truncated payload"));
    }
    let s = &buf[*at..end];
    *at = end;
    Ok(s)
}

pub(crate) fn read_u16(buf: &[u8], at: &mut usize) -> Result<u16, WireError> {
    Ok(u16::from_le_bytes(take(buf, at, 2)?.try_into().unwrap()))
}

pub(crate) fn read_u32(buf: &[u8], at: &mut usize) -> Result<u32, WireError> {
    Ok(u32::from_le_bytes(take(buf, at, 4)?.try_into().unwrap()))
}

pub(crate) fn read_u64(buf: &[u8], at: &mut usize) -> Result<u64, WireError> {
    Ok(u64::from_le_bytes(take(buf, at, 8)?.try_into().unwrap()))
}

pub(crate) fn read_f32(buf: &[u8], at: &mut usize) -> Result<f32, WireError> {
    Ok(f32::from_le_bytes(take(buf, at, 4)?.try_into().unwrap()))
}

pub(crate) fn read_f64(buf: &[u8], at: &mut usize) -> Result<f64, WireError> {
    Ok(f64::from_le_bytes(take(buf, at, 8)?.try_into().unwrap()))
}

/// Encode a mask as `[w u16][h u16][nruns u32][run u32 ...]` where runs
/// alternate zero-pixels then one-pixels, starting with zeros, in row-major
/// order. Runs sum to `w*h`; the leading zero run may be empty only via an
/// explicit 0 when the mask starts with a one-pixel.
pub fn encode_mask(mask: &BinMask, out: &mut Vec<u8>) {
    out.extend_from_slice(&(mask.w as u16).to_le_bytes());
    out.extend_from_slice(&(mask.h as u16).to_le_bytes());
    let mut runs: Vec<u32> = Vec::new();
    let mut value = 0u8;
    let mut run = 0u32;
    for &px in &mask.data {
        let px = (px != 0) as u8;
        if px == value {
            run += 1;
        } else {
            runs.push(run);
            value = px;
            run = 1;
        }
    }
    if !mask.data.is_empty() {
        runs.push(run);
    }
    out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
    for r in runs {
        out.extend_from_slice(&r.to_le_bytes());
    }
}

pub fn decode_mask(buf: &[u8], at: &mut usize) -> Result<BinMask, WireError> {
    let w = read_u16(buf, at)? as usize;
    let h = read_u16(buf, at)? as usize;
    let nruns = read_u32(buf, at)? as usize;
    let mut mask = BinMask::zeros(w, h);
    let total = w * h;
    let mut filled = 0usize;
    let mut value = 0u8;
    for _ in 0..nruns {
        let run = read_u32(buf, at)? as usize;
        if filled + run > total {
            return Err(fmt_err("mask runs exceed w*h"));
        }
        if value == 1 {
            mask.data[filled..filled + run].fill(1);
        }
        filled += run;
        value ^= 1;
    }
    if filled != total {
        return Err(fmt_err(format!("mask runs cover {filled} of {total} px")));
    }
    Ok(mask)
}

/// Byte-level RLE as `(count u8 >= 1, value u8)` pairs. Used for the
/// optional lossless image compression mode; raw transfer is the default.
pub fn encode_bytes_rle(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut it = data.iter().copied();
    let Some(mut value) = it.next() else {
        return out;
    };
    let mut count = 1u8;
    for b in it {
        if b == value && count < u8::MAX {
            count += 1;
        } else {
            out.push(count);
            out.push(value);
            value = b;
            count = 1;
        }
    }
    out.push(count);
    out.push(value);
    out
}

pub fn decode_bytes_rle(data: &[u8], expect_len: usize) -> Result<Vec<u8>, WireError> {
    if data.len() % 2 != 0 {
        return Err(fmt_err("odd RLE byte stream"));
    }
    let mut out = Vec::with_capacity(expect_len);
    for pair in data.chunks_exact(2) {
        let (count, value) = (pair[0] as usize, pair[1]);
        if count == 0 {
            return Err(fmt_err("zero-length RLE run"));
        }
        if out.len() + count > expect_len {
            return Err(fmt_err("RLE output exceeds expected length"));
        }
        out.resize(out.len() + count, value);
    }
    if out.len() != expect_len {
        return Err(fmt_err(format!(
            "RLE output {} != expected {}",
            out.len(),
            expect_len
        )));
    }
    Ok(out)
}
