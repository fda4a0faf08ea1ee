//! Pixel-level helpers shared by scene, augmentation and gripper rendering.
//!
//! Images are `[1, 3, h, w]` tensors with values on the `k/255` grid.

use skyhook_nn::Tensor;

pub fn px(img: &Tensor, c: usize, x: usize, y: usize) -> f32 {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    debug_assert!(x < w && y < h);
    img.data()[(c * h + y) * w + x]
}

pub fn set_px(img: &mut Tensor, c: usize, x: usize, y: usize, v: f32) {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    debug_assert!(x < w && y < h);
    img.data_mut()[(c * h + y) * w + x] = v;
}

/// Snap every value onto the 8-bit grid (`round(clamp(v) * 255) / 255`).
pub fn quantize_u8(img: &mut Tensor) {
    for v in img.data_mut() {
        let q = (v.clamp(0.0, 1.0) * 255.0).round();
        *v = q / 255.0;
    }
}

/// Planar float image to interleaved RGB bytes.
pub fn to_rgb8(img: &Tensor) -> Vec<u8> {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let d = img.data();
    let plane = h * w;
    let mut out = Vec::with_capacity(plane * 3);
    for i in 0..plane {
        for c in 0..3 {
            out.push((d[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

/// Interleaved RGB bytes to a planar float image on the `k/255` grid.
pub fn from_rgb8(w: usize, h: usize, bytes: &[u8]) -> Tensor {
    assert_eq!(bytes.len(), w * h * 3, "byte count");
    let plane = w * h;
    let mut data = vec![0.0f32; plane * 3];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = bytes[i * 3 + c] as f32 / 255.0;
        }
    }
    Tensor::new(&[1, 3, h, w], data).expect("image dims")
}

/// Bilinear sample with edge clamping; `x`/`y` are pixel-center coordinates.
pub fn sample_bilinear(img: &Tensor, c: usize, x: f64, y: f64) -> f32 {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (xc - x0 as f64) as f32;
    let fy = (yc - y0 as f64) as f32;
    let v00 = px(img, c, x0, y0);
    let v01 = px(img, c, x1, y0);
    let v10 = px(img, c, x0, y1);
    let v11 = px(img, c, x1, y1);
    (v00 * (1.0 - fx) + v01 * fx) * (1.0 - fy) + (v10 * (1.0 - fx) + v11 * fx) * fy
}

/// Separable Gaussian blur with edge clamping; `sigma` in pixels.
pub fn gaussian_blur(img: &Tensor, sigma: f64) -> Tensor {
    let (_, _, h, w) = img.rank4().expect("image tensor");
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0f64;
    for i in -radius..=radius {
        let v = (-(i * i) as f64 / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }

    let src = img.data();
    let plane = h * w;
    let mut tmp = vec![0.0f32; plane * 3];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                    acc += src[c * plane + y * w + sx] as f64 * kv;
                }
                tmp[c * plane + y * w + x] = acc as f32;
            }
        }
    }
    let mut out = vec![0.0f32; plane * 3];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f64;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                    acc += tmp[c * plane + sy * w + x] as f64 * kv;
                }
                out[c * plane + y * w + x] = acc as f32;
            }
        }
    }
    Tensor::new(&[1, 3, h, w], out).expect("image dims")
}

pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

pub fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}
