//! The six training-time augmentations.
//!
//! Geometric ops transform image and annotation together: masks are
//! resampled nearest-neighbour with the exact same mapping as the image, and
//! boxes are recomputed from the transformed masks, so the
//! "boxes derivable from masks" invariant survives every op. The
//! synthetic-scenes op replaces the sample with a freshly composed scene.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use skyhook_nn::Tensor;
use skyhook_perception::BinMask;

use crate::raster::{gaussian_blur, hsv_to_rgb, quantize_u8, rgb_to_hsv, sample_bilinear};
use crate::scene::{bbox_from_mask, synth_scene_cfg, wide_cfg, SceneAnnotation, SceneInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugOp {
    Colour,
    Scale,
    Mirror,
    Blur,
    Rotate,
    SyntheticScenes,
}

impl AugOp {
    /// Cumulative ablation order.
    pub const ALL: [AugOp; 6] = [
        AugOp::Colour,
        AugOp::Scale,
        AugOp::Mirror,
        AugOp::Blur,
        AugOp::Rotate,
        AugOp::SyntheticScenes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugOp::Colour => "colour",
            AugOp::Scale => "scale",
            AugOp::Mirror => "mirror",
            AugOp::Blur => "blur",
            AugOp::Rotate => "rotate",
            AugOp::SyntheticScenes => "synthetic_scenes",
        }
    }

    pub fn from_name(name: &str) -> Option<AugOp> {
        AugOp::ALL.iter().copied().find(|o| o.name() == name)
    }
}

/// HSV jitter. Zero magnitudes return the input untouched.
pub fn colour_jitter(img: &Tensor, dh: f32, ds: f32, dv: f32) -> Tensor {
    if dh == 0.0 && ds == 0.0 && dv == 0.0 {
        return img.clone();
    }
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let plane = h * w;
    let src = img.data();
    let mut out = vec![0.0f32; plane * 3];
    for i in 0..plane {
        let (r, g, b) = (src[i], src[plane + i], src[2 * plane + i]);
        let (mut hh, mut ss, mut vv) = rgb_to_hsv(r, g, b);
        hh = (hh + dh).rem_euclid(1.0);
        ss = (ss * (1.0 + ds)).clamp(0.0, 1.0);
        vv = (vv * (1.0 + dv)).clamp(0.0, 1.0);
        let (r2, g2, b2) = hsv_to_rgb(hh, ss, vv);
        out[i] = r2;
        out[plane + i] = g2;
        out[2 * plane + i] = b2;
    }
    Tensor::new(&[1, 3, h, w], out).expect("image dims")
}

/// Horizontal flip: `x' = w - 1 - x`.
pub fn mirror_img(img: &Tensor) -> Tensor {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let plane = h * w;
    let src = img.data();
    let mut out = vec![0.0f32; plane * 3];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                out[c * plane + y * w + x] = src[c * plane + y * w + (w - 1 - x)];
            }
        }
    }
    Tensor::new(&[1, 3, h, w], out).expect("image dims")
}

fn mirror_mask(m: &BinMask) -> BinMask {
    let mut out = BinMask::zeros(m.w, m.h);
    for y in 0..m.h {
        for x in 0..m.w {
            if m.get(x, y) {
                out.set(m.w - 1 - x, y, true);
            }
        }
    }
    out
}

pub fn mirror_annotation(ann: &SceneAnnotation) -> SceneAnnotation {
    let w = ann.w as u32;
    SceneAnnotation {
        w: ann.w,
        h: ann.h,
        instances: ann
            .instances
            .iter()
            .map(|i| SceneInstance {
                class: i.class,
                mask: mirror_mask(&i.mask),
                part_mask: mirror_mask(&i.part_mask),
                bbox: [w - 1 - i.bbox[2], i.bbox[1], w - 1 - i.bbox[0], i.bbox[3]],
                occlusion_index: i.occlusion_index,
            })
            .collect(),
    }
}

/// Gaussian blur of the image only; masks and boxes are untouched.
pub fn blur_img(img: &Tensor, sigma: f64) -> Tensor {
    gaussian_blur(img, sigma)
}

fn mean_color(img: &Tensor) -> [f32; 3] {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let plane = h * w;
    let d = img.data();
    let mut out = [0.0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = d[c * plane..(c + 1) * plane].iter().sum::<f32>() / plane as f32;
    }
    out
}

/// Resample image and annotation through the inverse map `q -> src(q)`,
/// bilinear for the image (out-of-bounds becomes the mean colour) and
/// nearest for masks. Instances whose masks vanish are dropped.
fn warp_sample(
    img: &Tensor,
    ann: &SceneAnnotation,
    src_of: impl Fn(f64, f64) -> (f64, f64),
) -> (Tensor, SceneAnnotation) {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let fill = mean_color(img);
    let plane = h * w;
    let mut out = vec![0.0f32; plane * 3];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = src_of(x as f64 + 0.5, y as f64 + 0.5);
            let inside = sx >= 0.0 && sy >= 0.0 && sx <= w as f64 && sy <= h as f64;
            for c in 0..3 {
                out[c * plane + y * w + x] = if inside {
                    sample_bilinear(img, c, sx - 0.5, sy - 0.5)
                } else {
                    fill[c]
                };
            }
        }
    }
    let image = Tensor::new(&[1, 3, h, w], out).expect("image dims");

    let warp_mask = |m: &BinMask| -> BinMask {
        let mut o = BinMask::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = src_of(x as f64 + 0.5, y as f64 + 0.5);
                let (ix, iy) = (sx.floor() as i64, sy.floor() as i64);
                if ix >= 0 && iy >= 0 && (ix as usize) < w && (iy as usize) < h {
                    o.set(x, y, m.get(ix as usize, iy as usize));
                }
            }
        }
        o
    };
    let mut instances = Vec::new();
    for inst in &ann.instances {
        let mask = warp_mask(&inst.mask);
        if mask.area() == 0 {
            continue;
        }
        let part_mask = warp_mask(&inst.part_mask);
        let bbox = bbox_from_mask(&mask).expect("non-empty mask");
        instances.push(SceneInstance {
            class: inst.class,
            mask,
            part_mask,
            bbox,
            occlusion_index: inst.occlusion_index,
        });
    }
    (
        image,
        SceneAnnotation {
            w: ann.w,
            h: ann.h,
            instances,
        },
    )
}

/// Zoom about the canvas centre by `factor`, keeping the canvas size.
pub fn scale_sample(
    img: &Tensor,
    ann: &SceneAnnotation,
    factor: f64,
) -> (Tensor, SceneAnnotation) {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    warp_sample(img, ann, move |x, y| {
        (cx + (x - cx) / factor, cy + (y - cy) / factor)
    })
}

/// Rotate about the canvas centre by `degrees`, keeping the canvas size.
pub fn rotate_sample(
    img: &Tensor,
    ann: &SceneAnnotation,
    degrees: f64,
) -> (Tensor, SceneAnnotation) {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp_sample(img, ann, move |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
    })
}

/// Apply the requested ops with freshly drawn magnitudes. Output images are
/// snapped back onto the 8-bit grid.
pub fn augment(
    img: &Tensor,
    ann: &SceneAnnotation,
    ops: &[AugOp],
    rng: &mut ChaCha8Rng,
) -> (Tensor, SceneAnnotation) {
    let mut image = img.clone();
    let mut annotation = ann.clone();
    if ops.contains(&AugOp::SyntheticScenes) && rng.gen_bool(0.5) {
        let mut cfg = wide_cfg();
        cfg.resolution = annotation.w.max(annotation.h).max(32);
        let (i, a) = synth_scene_cfg(rng.gen::<u64>(), &cfg);
        image = i;
        annotation = a;
    }
    if ops.contains(&AugOp::Colour) {
        let dh = rng.gen_range(-0.06f32..0.06);
        let ds = rng.gen_range(-0.25f32..0.25);
        let dv = rng.gen_range(-0.25f32..0.25);
        image = colour_jitter(&image, dh, ds, dv);
    }
    if ops.contains(&AugOp::Scale) {
        let s = rng.gen_range(0.7f64..1.3);
        let (i, a) = scale_sample(&image, &annotation, s);
        image = i;
        annotation = a;
    }
    if ops.contains(&AugOp::Mirror) && rng.gen_bool(0.5) {
        image = mirror_img(&image);
        annotation = mirror_annotation(&annotation);
    }
    if ops.contains(&AugOp::Blur) {
        let sigma = rng.gen_range(0.0f64..1.5);
        if sigma > 0.01 {
            image = blur_img(&image, sigma);
        }
    }
    if ops.contains(&AugOp::Rotate) {
        let deg = rng.gen_range(-15.0f64..15.0);
        let (i, a) = rotate_sample(&image, &annotation, deg);
        image = i;
        annotation = a;
    }
    quantize_u8(&mut image);
    (image, annotation)
}
