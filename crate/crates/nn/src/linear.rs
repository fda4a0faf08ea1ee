//! Fully connected layers for the box/class heads and the grasp classifier:
//! `y = x W^T + b` with `x: [n, in]`, `W: [out, in]`.

use crate::tensor::{Precision, Tensor};
use crate::{dot4, shape_err, Result};

pub fn linear(input: &Tensor, weights: &Tensor, bias: &[f32]) -> Result<Tensor> {
    let (n, in_f) = input.rank2()?;
    let (out_f, w_in) = weights.rank2()?;
    if w_in != in_f {
        return shape_err(format!("linear input {in_f} features, weights expect {w_in}"));
    }
    if bias.len() != out_f {
        return shape_err(format!("bias len {} != out features {out_f}", bias.len()));
    }
    let precision = input.precision();
    let mut out = Tensor::zeros(&[n, out_f]).with_precision(precision);
    let x = input.data();
    let w = weights.data();
    let od = out.data_mut();
    for i in 0..n {
        let xrow = &x[i * in_f..][..in_f];
        let orow = &mut od[i * out_f..][..out_f];
        for o in 0..out_f {
            let wrow = &w[o * in_f..][..in_f];
            orow[o] = precision.quantize(bias[o] + dot4(xrow, wrow));
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub struct LinearGrads {
    pub d_input: Tensor,
    pub d_weights: Tensor,
    pub d_bias: Vec<f32>,
}

pub fn linear_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<LinearGrads> {
    if input.precision() != Precision::Fp32 {
        return Err(crate::NnError::Precision(
            "backward passes require FP32 tensors".into(),
        ));
    }
    let (n, in_f) = input.rank2()?;
    let (out_f, _) = weights.rank2()?;
    let (gn, go) = grad_out.rank2()?;
    if (gn, go) != (n, out_f) {
        return shape_err(format!(
            "grad_out dims {:?} do not match output [{n}, {out_f}]",
            grad_out.dims()
        ));
    }
    let mut d_input = Tensor::zeros(&[n, in_f]);
    let mut d_weights = Tensor::zeros(&[out_f, in_f]);
    let mut d_bias = vec![0.0f32; out_f];
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let di = d_input.data_mut();
    let dw = d_weights.data_mut();
    for i in 0..n {
        let xrow = &x[i * in_f..][..in_f];
        let grow = &g[i * out_f..][..out_f];
        let dirow = &mut di[i * in_f..][..in_f];
        for o in 0..out_f {
            let gv = grow[o];
            d_bias[o] += gv;
            let wrow = &w[o * in_f..][..in_f];
            let dwrow = &mut dw[o * in_f..][..in_f];
            for j in 0..in_f {
                dirow[j] += gv * wrow[j];
                dwrow[j] += gv * xrow[j];
            }
        }
    }
    Ok(LinearGrads {
        d_input,
        d_weights,
        d_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_evaluated_product() {
        let x = Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let w = Tensor::new(&[2, 3], vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]).unwrap();
        let y = linear(&x, &w, &[0.0, 1.0]).unwrap();
        assert_eq!(y.data(), &[-2.0, 4.0]);
    }

    #[test]
    fn batch_rows_are_independent() {
        let x = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w = Tensor::new(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = linear(&x, &w, &[0.0, 0.0]).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0, 4.0, 6.0]);
    }
}
