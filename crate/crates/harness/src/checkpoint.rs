//! Binary model checkpoints.
//!
//! Layout: magic `UMTP`, version byte 0x01, u32 tensor count, then per
//! tensor a u16 name length, the UTF-8 name, u8 dtype (0 = FP32, 1 = FP16),
//! u8 rank, one u32 per dimension, and the raw little-endian values (4 bytes
//! each for FP32, 2 for FP16). A CRC-32 of everything before it closes the
//! file. A scalar `meta.arch` tensor records the architecture variant so a
//! checkpoint is self-describing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use half::f16;
use skyhook_nn::{Precision, Tensor};
use skyhook_perception::{Arch, UnifiedModel};

use crate::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"UMTP";
pub const VERSION: u8 = 0x01;

const META_ARCH: &str = "meta.arch";

fn fmt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Format(msg.into()))
}

fn push_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    let dtype = match t.precision() {
        Precision::Fp32 => 0u8,
        Precision::Fp16 => 1u8,
    };
    buf.push(dtype);
    buf.push(t.dims().len() as u8);
    for &d in t.dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match t.precision() {
        Precision::Fp32 => {
            for &v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Precision::Fp16 => {
            for &v in t.data() {
                buf.extend_from_slice(&f16::from_f32(v).to_le_bytes());
            }
        }
    }
}

pub fn encode_checkpoint(model: &UnifiedModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    let count = model.params.len() + 1;
    buf.extend_from_slice(&(count as u32).to_le_bytes());
    let arch_tag = match model.arch {
        Arch::Arch1 => 1.0f32,
        Arch::Arch2 => 2.0,
        Arch::Arch3 => 3.0,
    };
    let meta = Tensor::new(&[1], vec![arch_tag]).expect("meta tensor");
    push_tensor(&mut buf, META_ARCH, &meta);
    for (name, t) in &model.params {
        push_tensor(&mut buf, name, t);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_checkpoint(model: &UnifiedModel, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return fmt_err("checkpoint truncated");
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<UnifiedModel> {
    if bytes.len() < MAGIC.len() + 1 {
        return fmt_err("checkpoint truncated");
    }
    if &bytes[..4] != MAGIC {
        return fmt_err("bad checkpoint magic");
    }
    if bytes[4] != VERSION {
        return fmt_err(format!("unsupported checkpoint version {}", bytes[4]));
    }
    if bytes.len() < MAGIC.len() + 1 + 4 + 4 {
        return fmt_err("checkpoint truncated");
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return fmt_err("checkpoint checksum mismatch");
    }

    let mut r = Reader { bytes: body, pos: 5 };
    let count = r.u32()? as usize;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = match std::str::from_utf8(r.take(name_len)?) {
            Ok(s) => s.to_string(),
            Err(_) => return fmt_err("tensor name is not UTF-8"),
        };
        let dtype = r.u8()?;
        let rank = r.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let d = r.u32()? as usize;
            len = len.saturating_mul(d);
            dims.push(d);
        }
        if len > 1 << 28 {
            return fmt_err(format!("tensor `{name}` is implausibly large"));
        }
        let (data, precision) = match dtype {
            0 => {
                let raw = r.take(len * 4)?;
                let mut v = Vec::with_capacity(len);
                for c in raw.chunks_exact(4) {
                    v.push(f32::from_le_bytes(c.try_into().unwrap()));
                }
                (v, Precision::Fp32)
            }
            1 => {
                let raw = r.take(len * 2)?;
                let mut v = Vec::with_capacity(len);
                for c in raw.chunks_exact(2) {
                    v.push(f16::from_le_bytes(c.try_into().unwrap()).to_f32());
                }
                (v, Precision::Fp16)
            }
            other => return fmt_err(format!("unknown dtype {other}")),
        };
        let t = match Tensor::new(&dims, data) {
            Ok(t) => t.with_precision(precision),
            Err(e) => return fmt_err(format!("tensor `{name}`: {e}")),
        };
        if tensors.insert(name.clone(), t).is_some() {
            return fmt_err(format!("duplicate tensor `{name}`"));
        }
    }
    if r.pos != body.len() {
        return fmt_err("trailing bytes after last tensor");
    }

    let meta = match tensors.remove(META_ARCH) {
        Some(t) => t,
        None => return fmt_err("missing meta.arch tensor"),
    };
    let arch = match meta.data().first().copied() {
        Some(v) if v == 1.0 => Arch::Arch1,
        Some(v) if v == 2.0 => Arch::Arch2,
        Some(v) if v == 3.0 => Arch::Arch3,
        _ => return fmt_err("invalid meta.arch value"),
    };

    let mut model = UnifiedModel::new(arch, 0);
    if tensors.len() != model.params.len() {
        return fmt_err(format!(
            "checkpoint has {} parameters, model expects {}",
            tensors.len(),
            model.params.len()
        ));
    }
    let mut precision = Precision::Fp32;
    for (name, t) in tensors {
        let slot = match model.params.get_mut(&name) {
            Some(s) => s,
            None => return fmt_err(format!("unknown parameter `{name}`")),
        };
        if slot.dims() != t.dims() {
            return fmt_err(format!(
                "parameter `{name}` has dims {:?}, model expects {:?}",
                t.dims(),
                slot.dims()
            ));
        }
        precision = t.precision();
        *slot = t;
    }
    if model.params.values().any(|t| t.precision() != precision) {
        return fmt_err("mixed parameter precisions");
    }
    model.precision = precision;
    model.mark_ready();
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<UnifiedModel> {
    decode_checkpoint(&fs::read(path)?)
}
