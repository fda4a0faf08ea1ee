//! Training losses. Each returns `(scalar, gradient)` where the scalar is
//! the mean over elements. `bce_loss` takes post-sigmoid probabilities but
//! reports the gradient with respect to the pre-sigmoid logits (the sigmoid
//! derivative is folded in, which is both exact and numerically stable).

use crate::tensor::Tensor;
use crate::{shape_err, Result};

pub const BCE_EPS: f32 = 1e-7;

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place stable softmax over a slice.
pub fn softmax(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean binary cross entropy. Probabilities are clamped to
/// `[BCE_EPS, 1 - BCE_EPS]` inside the logs; the returned gradient is
/// `(p - y) / N` per element, w.r.t. pre-sigmoid logits.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.dims() != target.dims() {
        return shape_err(format!(
            "bce pred {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        ));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros_like(pred);
    let g = grad.data_mut();
    for (i, (&p, &y)) in pred.data().iter().zip(target.data().iter()).enumerate() {
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS) as f64;
        let yd = y as f64;
        loss -= yd * pc.ln() + (1.0 - yd) * (1.0 - pc).ln();
        g[i] = ((p - y) as f64 / n) as f32;
    }
    Ok(((loss / n) as f32, grad))
}

/// Mean smooth-L1: `0.5 d^2` for `|d| < 1`, else `|d| - 0.5`.
pub fn smooth_l1_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.dims() != target.dims() {
        return shape_err(format!(
            "smooth_l1 pred {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        ));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros_like(pred);
    let g = grad.data_mut();
    for (i, (&p, &y)) in pred.data().iter().zip(target.data().iter()).enumerate() {
        let d = (p - y) as f64;
        if d.abs() < 1.0 {
            loss += 0.5 * d * d;
        } else {
            loss += d.abs() - 0.5;
        }
        g[i] = (d.clamp(-1.0, 1.0) / n) as f32;
    }
    Ok(((loss / n) as f32, grad))
}

/// Mean cross entropy over rows of `[n, classes]` logits; gradient is
/// `(softmax - onehot) / n` w.r.t. the logits.
pub fn softmax_ce_loss(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let (n, k) = logits.rank2()?;
    if labels.len() != n {
        return shape_err(format!("{} labels for {n} rows", labels.len()));
    }
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(&[n, k]);
    let g = grad.data_mut();
    for i in 0..n {
        if labels[i] >= k {
            return shape_err(format!("label {} out of range {k}", labels[i]));
        }
        let mut probs: Vec<f32> = logits.data()[i * k..][..k].to_vec();
        softmax(&mut probs);
        loss -= (probs[labels[i]].max(BCE_EPS) as f64).ln();
        for j in 0..k {
            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
            g[i * k + j] = (probs[j] - onehot) / n as f32;
        }
    }
    Ok(((loss / n as f64) as f32, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let p = Tensor::new(&[4], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let y = p.clone();
        let (loss, _) = bce_loss(&p, &y).unwrap();
        assert!(loss <= 1e-6, "loss {loss}");
    }

    #[test]
    fn bce_half_probability_is_ln_two() {
        let p = Tensor::new(&[1], vec![0.5]).unwrap();
        let y = Tensor::new(&[1], vec![1.0]).unwrap();
        let (loss, grad) = bce_loss(&p, &y).unwrap();
        assert!((loss - std::f32::consts::LN_2).abs() < 1e-6, "loss {loss}");
        assert!((grad.data()[0] + 0.5).abs() < 1e-7);
    }

    #[test]
    fn bce_shape_mismatch_is_an_error() {
        let p = Tensor::zeros(&[2]);
        let y = Tensor::zeros(&[3]);
        assert!(bce_loss(&p, &y).is_err());
    }

    /// Finite-difference check of the BCE logit gradient using an exact f64
    /// reference of loss(sigmoid(z)).
    #[test]
    fn bce_logit_gradient_matches_finite_differences() {
        let loss_of = |z: &[f64], y: &[f64]| -> f64 {
            let n = z.len() as f64;
            z.iter()
                .zip(y)
                .map(|(&zi, &yi)| {
                    let p = 1.0 / (1.0 + (-zi).exp());
                    -(yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..12).map(|_| f64::from(rng.gen_range(0..2))).collect();
        let p = Tensor::new(
            &[12],
            z.iter().map(|&v| sigmoid(v as f32)).collect(),
        )
        .unwrap();
        let t = Tensor::new(&[12], y.iter().map(|&v| v as f32).collect()).unwrap();
        let (_, grad) = bce_loss(&p, &t).unwrap();
        let h = 1e-3;
        for i in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (loss_of(&zp, &y) - loss_of(&zm, &y)) / (2.0 * h);
            let a = grad.data()[i] as f64;
            let rel = (a - fd).abs() / fd.abs().max(a.abs()).max(1e-6);
            assert!(rel < 1e-4, "elem {i}: analytic {a} fd {fd}");
        }
    }

    #[test]
    fn smooth_l1_closed_forms() {
        let zero = smooth_l1_loss(
            &Tensor::new(&[2], vec![1.0, -2.0]).unwrap(),
            &Tensor::new(&[2], vec![1.0, -2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(zero.0, 0.0);

        let small = smooth_l1_loss(
            &Tensor::new(&[1], vec![0.5]).unwrap(),
            &Tensor::new(&[1], vec![0.0]).unwrap(),
        )
        .unwrap();
        assert!((small.0 - 0.125).abs() < 1e-7);

        let large = smooth_l1_loss(
            &Tensor::new(&[1], vec![2.0]).unwrap(),
            &Tensor::new(&[1], vec![0.0]).unwrap(),
        )
        .unwrap();
        assert!((large.0 - 1.5).abs() < 1e-7);
    }

    #[test]
    fn smooth_l1_gradient_matches_finite_differences() {
        let loss_of = |p: &[f64], t: &[f64]| -> f64 {
            p.iter()
                .zip(t)
                .map(|(&pi, &ti)| {
                    let d = (pi - ti).abs();
                    if d < 1.0 {
                        0.5 * d * d
                    } else {
                        d - 0.5
                    }
                })
                .sum::<f64>()
                / p.len() as f64
        };
        let p: Vec<f64> = vec![0.3, -2.5, 0.9, 4.0, -0.2];
        let t: Vec<f64> = vec![0.0, 0.0, 0.5, 1.0, 0.4];
        let pt = Tensor::new(&[5], p.iter().map(|&v| v as f32).collect()).unwrap();
        let tt = Tensor::new(&[5], t.iter().map(|&v| v as f32).collect()).unwrap();
        let (_, grad) = smooth_l1_loss(&pt, &tt).unwrap();
        let h = 1e-4;
        for i in 0..p.len() {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[i] += h;
            pm[i] -= h;
            let fd = (loss_of(&pp, &t) - loss_of(&pm, &t)) / (2.0 * h);
            let a = grad.data()[i] as f64;
            assert!((a - fd).abs() < 1e-5, "elem {i}: analytic {a} fd {fd}");
        }
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let loss_of = |z: &[f64], labels: &[usize], k: usize| -> f64 {
            let n = z.len() / k;
            let mut total = 0.0;
            for i in 0..n {
                let row = &z[i * k..][..k];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
                total -= row[labels[i]] - max - sum.ln();
            }
            total / n as f64
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 5;
        let z: Vec<f64> = (0..3 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels = vec![0usize, 3, 2];
        let zt = Tensor::new(&[3, k], z.iter().map(|&v| v as f32).collect()).unwrap();
        let (_, grad) = softmax_ce_loss(&zt, &labels).unwrap();
        let h = 1e-4;
        for i in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (loss_of(&zp, &labels, k) - loss_of(&zm, &labels, k)) / (2.0 * h);
            let a = grad.data()[i] as f64;
            assert!((a - fd).abs() < 1e-5, "elem {i}: analytic {a} fd {fd}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![3.0f32, -1.0, 0.5, 100.0];
        softmax(&mut row);
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|v| v.is_finite()));
    }
}
