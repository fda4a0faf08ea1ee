//! Row-major run-length encoding for binary masks.
//!
//! Runs alternate zero/one and always start with the zero run (possibly of
//! length 0), matching the usual counts convention.

use skyhook_perception::BinMask;

use crate::{Result, SceneError};

pub fn rle_encode(mask: &BinMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for y in 0..mask.h {
        for x in 0..mask.w {
            let v = mask.get(x, y);
            if v == current {
                run += 1;
            } else {
                runs.push(run);
                current = v;
                run = 1;
            }
        }
    }
    runs.push(run);
    runs
}

pub fn rle_decode(w: usize, h: usize, runs: &[u32]) -> Result<BinMask> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != (w * h) as u64 {
        return Err(SceneError::Format(format!(
            "rle covers {total} pixels, mask is {}",
            w * h
        )));
    }
    let mut mask = BinMask::zeros(w, h);
    let mut idx = 0usize;
    let mut value = false;
    for &r in runs {
        if value {
            for k in idx..idx + r as usize {
                mask.set(k % w, k / w, true);
            }
        }
        idx += r as usize;
        value = !value;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_mask_is_one_run() {
        let m = BinMask::zeros(4, 2);
        assert_eq!(rle_encode(&m), vec![8]);
    }

    #[test]
    fn leading_one_starts_with_zero_run() {
        let mut m = BinMask::zeros(3, 1);
        m.set(0, 0, true);
        assert_eq!(rle_encode(&m), vec![0, 1, 2]);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(matches!(
            rle_decode(4, 4, &[3]),
            Err(SceneError::Format(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trips(seed in 0u64..500, w in 1usize..24, h in 1usize..24) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = BinMask::zeros(w, h);
            for y in 0..h {
                for x in 0..w {
                    if rng.gen_bool(0.4) {
                        m.set(x, y, true);
                    }
                }
            }
            let rt = rle_decode(w, h, &rle_encode(&m)).unwrap();
            prop_assert_eq!(rt, m);
        }
    }
}
