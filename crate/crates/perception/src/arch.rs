//! Architecture scaling.
//!
//! Arch1 is the base channel table. Arch2 and Arch3 scale every channel
//! count by a single multiplier (rounded up per layer), where the multiplier
//! is calibrated so the unified model's total parameter count lands at
//! 1.25x / 1.5x the Arch1 count within +-2%. Calibration scans a fine grid
//! against the real parameter-count function, so rounding effects are
//! accounted for exactly.

use crate::model::ModelDesc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Arch1,
    Arch2,
    Arch3,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Arch1, Arch::Arch2, Arch::Arch3];

    pub fn index(self) -> u8 {
        match self {
            Arch::Arch1 => 1,
            Arch::Arch2 => 2,
            Arch::Arch3 => 3,
        }
    }

    pub fn from_index(i: u8) -> Option<Arch> {
        match i {
            1 => Some(Arch::Arch1),
            2 => Some(Arch::Arch2),
            3 => Some(Arch::Arch3),
            _ => None,
        }
    }

    /// Target parameter ratio relative to Arch1.
    pub fn param_ratio(self) -> f64 {
        match self {
            Arch::Arch1 => 1.0,
            Arch::Arch2 => 1.25,
            Arch::Arch3 => 1.5,
        }
    }
}

/// Per-network channel widths: five backbone stages each for the scene
/// backbone (c1), the mask backbone (c2) and the gripper backbone (c3),
/// plus head widths (detector FPN, tracker FPN, grasp head).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTable {
    pub c1: [usize; 5],
    pub c2: [usize; 5],
    pub c3: [usize; 5],
    pub det_width: usize,
    pub trk_width: usize,
    pub grasp_width: usize,
}

pub const ARCH1_TABLE: ChannelTable = ChannelTable {
    c1: [4, 8, 16, 32, 32],
    c2: [2, 4, 4, 8, 16],
    c3: [2, 4, 8, 8, 16],
    det_width: 12,
    trk_width: 4,
    grasp_width: 8,
};

fn scale_up(v: usize, m: f64) -> usize {
    (v as f64 * m).ceil() as usize
}

impl ChannelTable {
    pub fn scaled(&self, m: f64) -> ChannelTable {
        let s5 = |a: &[usize; 5]| {
            let mut out = [0usize; 5];
            for (o, &v) in out.iter_mut().zip(a) {
                *o = scale_up(v, m);
            }
            out
        };
        ChannelTable {
            c1: s5(&self.c1),
            c2: s5(&self.c2),
            c3: s5(&self.c3),
            det_width: scale_up(self.det_width, m),
            trk_width: scale_up(self.trk_width, m),
            grasp_width: scale_up(self.grasp_width, m),
        }
    }

    fn to_flat(&self) -> [usize; 18] {
        let mut f = [0usize; 18];
        f[..5].copy_from_slice(&self.c1);
        f[5..10].copy_from_slice(&self.c2);
        f[10..15].copy_from_slice(&self.c3);
        f[15] = self.det_width;
        f[16] = self.trk_width;
        f[17] = self.grasp_width;
        f
    }

    fn from_flat(f: &[usize; 18]) -> ChannelTable {
        ChannelTable {
            c1: f[..5].try_into().unwrap(),
            c2: f[5..10].try_into().unwrap(),
            c3: f[10..15].try_into().unwrap(),
            det_width: f[15],
            trk_width: f[16],
            grasp_width: f[17],
        }
    }
}

/// Resolve the channel table for an architecture.
///
/// Layer parameters are roughly quadratic in channel width, so Arch2/Arch3
/// start from sqrt(target-ratio) uniform scaling (rounded up per layer) and
/// a greedy single-channel refinement then walks the real parameter count
/// onto the target: at each step it applies the +-1 channel change that
/// brings the total closest to target * Arch1, never shrinking any layer
/// below its Arch1 width. The search is deterministic and cheap (counts walk
/// layer descriptors only, no tensors are allocated).
pub fn channel_table(arch: Arch) -> ChannelTable {
    match arch {
        Arch::Arch1 => ARCH1_TABLE,
        other => {
            let count = |t: &ChannelTable| ModelDesc::with_table(t.clone()).param_count() as f64;
            let target = count(&ARCH1_TABLE) * other.param_ratio();
            let floor = ARCH1_TABLE.to_flat();
            let mut flat = ARCH1_TABLE.scaled(other.param_ratio().sqrt()).to_flat();
            let mut err = (count(&ChannelTable::from_flat(&flat)) - target).abs();
            loop {
                let mut best: Option<(f64, [usize; 18])> = None;
                for i in 0..18 {
                    for delta in [-1isize, 1] {
                        let v = flat[i] as isize + delta;
                        if v < floor[i] as isize {
                            continue;
                        }
                        let mut cand = flat;
                        cand[i] = v as usize;
                        let e = (count(&ChannelTable::from_flat(&cand)) - target).abs();
                        if e < err && best.as_ref().map_or(true, |(b, _)| e < *b) {
                            best = Some((e, cand));
                        }
                    }
                }
                match best {
                    Some((e, cand)) => {
                        flat = cand;
                        err = e;
                    }
                    None => break,
                }
            }
            ChannelTable::from_flat(&flat)
        }
    }
}
