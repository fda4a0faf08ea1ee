//! Bilinear resize with half-pixel source centers: a destination pixel `o`
//! samples source coordinate `(o + 0.5) * in/out - 0.5`, clamped to the
//! valid range. Same-size resize is therefore an exact copy.

use crate::tensor::Tensor;
use crate::{shape_err, Result};

#[derive(Clone, Copy)]
struct AxisTap {
    lo: usize,
    hi: usize,
    t: f32,
}

fn axis_taps(in_extent: usize, out_extent: usize) -> Vec<AxisTap> {
    let scale = in_extent as f64 / out_extent as f64;
    (0..out_extent)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_extent - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_extent - 1);
            AxisTap {
                lo,
                hi,
                t: (src - lo as f64) as f32,
            }
        })
        .collect()
}

pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return shape_err("resize target extents must be >= 1");
    }
    let (n, c, h, w) = input.rank4()?;
    let precision = input.precision();
    let ys = axis_taps(h, out_h);
    let xs = axis_taps(w, out_w);

    let mut out = Tensor::zeros(&[n, c, out_h, out_w]).with_precision(precision);
    let x = input.data();
    let od = out.data_mut();
    for plane in 0..n * c {
        let ip = &x[plane * h * w..][..h * w];
        let op = &mut od[plane * out_h * out_w..][..out_h * out_w];
        for (oy, yt) in ys.iter().enumerate() {
            let row_lo = &ip[yt.lo * w..][..w];
            let row_hi = &ip[yt.hi * w..][..w];
            let orow = &mut op[oy * out_w..][..out_w];
            for (ox, xt) in xs.iter().enumerate() {
                let top = row_lo[xt.lo] + xt.t * (row_lo[xt.hi] - row_lo[xt.lo]);
                let bot = row_hi[xt.lo] + xt.t * (row_hi[xt.hi] - row_hi[xt.lo]);
                orow[ox] = precision.quantize(top + yt.t * (bot - top));
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`resize_bilinear`]: scatters each output gradient back onto
/// the four source taps with the same weights the forward pass used.
pub fn resize_bilinear_backward(in_h: usize, in_w: usize, grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, oh, ow) = grad_out.rank4()?;
    let ys = axis_taps(in_h, oh);
    let xs = axis_taps(in_w, ow);

    let mut d_input = Tensor::zeros(&[n, c, in_h, in_w]);
    let g = grad_out.data();
    let di = d_input.data_mut();
    for plane in 0..n * c {
        let gp = &g[plane * oh * ow..][..oh * ow];
        let ip = &mut di[plane * in_h * in_w..][..in_h * in_w];
        for (oy, yt) in ys.iter().enumerate() {
            let grow = &gp[oy * ow..][..ow];
            for (ox, xt) in xs.iter().enumerate() {
                let gv = grow[ox];
                let w00 = (1.0 - yt.t) * (1.0 - xt.t);
                let w01 = (1.0 - yt.t) * xt.t;
                let w10 = yt.t * (1.0 - xt.t);
                let w11 = yt.t * xt.t;
                ip[yt.lo * in_w + xt.lo] += w00 * gv;
                ip[yt.lo * in_w + xt.hi] += w01 * gv;
                ip[yt.hi * in_w + xt.lo] += w10 * gv;
                ip[yt.hi * in_w + xt.hi] += w11 * gv;
            }
        }
    }
    Ok(d_input)
}
