//! Shared perception vocabulary: brick classes, masks, boxes, detections.

use skyhook_nn::Tensor;

/// The four brick classes, in class-id order (background is id 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BrickClass {
    Red,
    Green,
    Blue,
    Orange,
}

impl BrickClass {
    pub const ALL: [BrickClass; 4] = [
        BrickClass::Red,
        BrickClass::Green,
        BrickClass::Blue,
        BrickClass::Orange,
    ];

    /// Class id as used by the detector head (1..=4; 0 is background).
    pub fn id(self) -> usize {
        match self {
            BrickClass::Red => 1,
            BrickClass::Green => 2,
            BrickClass::Blue => 3,
            BrickClass::Orange => 4,
        }
    }

    pub fn from_id(id: usize) -> Option<BrickClass> {
        match id {
            1 => Some(BrickClass::Red),
            2 => Some(BrickClass::Green),
            3 => Some(BrickClass::Blue),
            4 => Some(BrickClass::Orange),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BrickClass::Red => "red",
            BrickClass::Green => "green",
            BrickClass::Blue => "blue",
            BrickClass::Orange => "orange",
        }
    }
}

/// Dense binary mask over an image grid. `data[y * w + x]` is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinMask {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
}

impl BinMask {
    pub fn zeros(w: usize, h: usize) -> Self {
        BinMask {
            w,
            h,
            data: vec![0; w * h],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.w + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.w + x] = v as u8;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Mean of set pixel centers, or None for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0f64, 0.0f64);
        for y in 0..self.h {
            for x in 0..self.w {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some((sx / n as f64, sy / n as f64))
        }
    }

    /// Pixel-set intersection over union; 1.0 when both masks are empty.
    pub fn iou(&self, other: &BinMask) -> f64 {
        assert_eq!((self.w, self.h), (other.w, other.h), "mask size mismatch");
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(&other.data) {
            let a = *a != 0;
            let b = *b != 0;
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Does every set pixel of `self` lie inside `other`?
    pub fn subset_of(&self, other: &BinMask) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .all(|(a, b)| *a == 0 || *b != 0)
    }

    /// As a `[1, 1, h, w]` float tensor with values 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        let data: Vec<f32> = self.data.iter().map(|&v| (v != 0) as u8 as f32).collect();
        Tensor::new(&[1, 1, self.h, self.w], data).expect("mask tensor")
    }
}

/// Binary tracking mask plus the tick it belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    pub mask: BinMask,
    pub t: u64,
}

impl SupportMask {
    pub fn new(mask: BinMask, t: u64) -> Self {
        SupportMask { mask, t }
    }
}

/// Continuous box, exclusive convention: covers `[x0, x1) x [y0, y1)` in
/// pixel coordinates. Integer annotation boxes are inclusive; convert by
/// adding one to the max corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxF {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxF {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BoxF { x0, y0, x1, y1 }
    }

    /// From an inclusive integer box (x_min, y_min, x_max, y_max).
    pub fn from_inclusive(b: (usize, usize, usize, usize)) -> Self {
        BoxF {
            x0: b.0 as f64,
            y0: b.1 as f64,
            x1: b.2 as f64 + 1.0,
            y1: b.3 as f64 + 1.0,
        }
    }

    pub fn w(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn h(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.w() * self.h()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    pub fn clip(&self, w: f64, h: f64) -> BoxF {
        BoxF {
            x0: self.x0.clamp(0.0, w),
            y0: self.y0.clamp(0.0, h),
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
        }
    }
}

/// One detected brick instance at full image resolution.
#[derive(Debug, Clone)]
pub struct InstanceDetection {
    pub class: BrickClass,
    pub score: f32,
    pub bbox: BoxF,
    pub mask: BinMask,
    pub part_mask: BinMask,
}

/// Score thresholds for the detection pipeline.
#[derive(Debug, Clone, Copy)]
pub struct DetectThresholds {
    pub objectness: f32,
    pub class_score: f32,
    pub nms_iou: f64,
}

impl Default for DetectThresholds {
    fn default() -> Self {
        DetectThresholds {
            objectness: 0.5,
            class_score: 0.5,
            nms_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoamState {
    Uncompressed,
    Compressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachState {
    NotAttached,
    Attached,
}

/// Gripper-state classification: two independent 2-way softmax heads.
/// Index 1 is the positive state (compressed / attached).
#[derive(Debug, Clone, Copy)]
pub struct GraspStateReading {
    pub foam_probs: [f32; 2],
    pub attach_probs: [f32; 2],
}

impl GraspStateReading {
    pub fn foam(&self) -> FoamState {
        if self.foam_probs[1] > self.foam_probs[0] {
            FoamState::Compressed
        } else {
            FoamState::Uncompressed
        }
    }

    pub fn attach(&self) -> AttachState {
        if self.attach_probs[1] > self.attach_probs[0] {
            AttachState::Attached
        } else {
            AttachState::NotAttached
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_of_single_pixel_is_its_center() {
        let mut m = BinMask::zeros(8, 8);
        m.set(3, 5, true);
        assert_eq!(m.centroid(), Some((3.5, 5.5)));
    }

    #[test]
    fn empty_mask_has_no_centroid() {
        assert_eq!(BinMask::zeros(4, 4).centroid(), None);
    }

    #[test]
    fn mask_iou_counts_pixels() {
        let mut a = BinMask::zeros(4, 1);
        let mut b = BinMask::zeros(4, 1);
        a.set(0, 0, true);
        a.set(1, 0, true);
        b.set(1, 0, true);
        b.set(2, 0, true);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert!((BinMask::zeros(4, 1).iou(&BinMask::zeros(4, 1)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inclusive_box_conversion_adds_one() {
        let b = BoxF::from_inclusive((7, 3, 7, 3));
        assert_eq!((b.x0, b.y0, b.x1, b.y1), (7.0, 3.0, 8.0, 4.0));
        assert!((b.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_ids_round_trip() {
        for c in BrickClass::ALL {
            assert_eq!(BrickClass::from_id(c.id()), Some(c));
        }
        assert_eq!(BrickClass::from_id(0), None);
        assert_eq!(BrickClass::from_id(5), None);
    }
}
