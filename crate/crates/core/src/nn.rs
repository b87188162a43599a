//! Shared neural-network primitives for the toy forward passes.
//!
//! Everything here is plain f32 arithmetic in a fixed evaluation order, so
//! outputs are reproducible bit-for-bit given the same weights and input.

use crate::tensor::FeatureTensor;

/// 2D convolution with a square `k x k` kernel, zero padding `k/2`, and the
/// given stride. Weights are `[out_c][in_c][ky][kx]`, flattened.
pub fn conv2d(
    input: &FeatureTensor,
    weights: &[f32],
    bias: &[f32],
    out_channels: usize,
    kernel: usize,
    stride: usize,
) -> FeatureTensor {
    let (h, w, in_c) = (input.height(), input.width(), input.channels());
    assert_eq!(weights.len(), out_channels * in_c * kernel * kernel);
    assert_eq!(bias.len(), out_channels);
    assert!(kernel % 2 == 1 && stride >= 1);
    let pad = (kernel / 2) as isize;
    let out_h = (h + stride - 1) / stride;
    let out_w = (w + stride - 1) / stride;

    let mut out = FeatureTensor::zeros(out_h, out_w, out_channels);
    let in_data = input.data();
    for oy in 0..out_h {
        for ox in 0..out_w {
            let base_y = (oy * stride) as isize - pad;
            let base_x = (ox * stride) as isize - pad;
            for oc in 0..out_channels {
                let mut acc = bias[oc];
                let w_base = oc * in_c * kernel * kernel;
                for ky in 0..kernel {
                    let iy = base_y + ky as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = base_x + kx as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let px = (iy as usize * w + ix as usize) * in_c;
                        for ic in 0..in_c {
                            acc += in_data[px + ic]
                                * weights[w_base + (ic * kernel + ky) * kernel + kx];
                        }
                    }
                }
                out.set(oy, ox, oc, acc);
            }
        }
    }
    out
}

/// Single-kernel 3D convolution over the `(H, W, C)` volume with zero
/// same-padding in all three axes. Kernel is `3x3x3` indexed `[dy][dx][dc]`.
pub fn conv3d_single(input: &FeatureTensor, kernel: &[f32; 27]) -> FeatureTensor {
    let (h, w, c) = (input.height(), input.width(), input.channels());
    let mut out = FeatureTensor::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for dy in 0..3usize {
                    let iy = y as isize + dy as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..3usize {
                        let ix = x as isize + dx as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        for dc in 0..3usize {
                            let ic = ch as isize + dc as isize - 1;
                            if ic < 0 || ic >= c as isize {
                                continue;
                            }
                            acc += input.get(iy as usize, ix as usize, ic as usize)
                                * kernel[(dy * 3 + dx) * 3 + dc];
                        }
                    }
                }
                out.set(y, x, ch, acc);
            }
        }
    }
    out
}

pub fn relu_inplace(t: &mut FeatureTensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Dense layer: `y = W x + b` with `W` stored `[out][in]`, flattened.
pub fn linear(x: &[f32], weights: &[f32], bias: &[f32]) -> Vec<f32> {
    let out_dim = bias.len();
    assert_eq!(weights.len(), out_dim * x.len());
    (0..out_dim)
        .map(|o| {
            let row = &weights[o * x.len()..(o + 1) * x.len()];
            let mut acc = bias[o];
            for (xi, wi) in x.iter().zip(row) {
                acc += xi * wi;
            }
            acc
        })
        .collect()
}

/// Numerically stable row softmax, computed in f64.
pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv2d_identity_kernel() {
        // A 3x3 kernel with a single center 1 copies the input.
        let input = FeatureTensor::from_data(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let mut weights = vec![0.0f32; 9];
        weights[4] = 1.0;
        let out = conv2d(&input, &weights, &[0.0], 1, 3, 1);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv2d_stride_halves_dims() {
        let input = FeatureTensor::zeros(5, 6, 2);
        let weights = vec![0.0f32; 3 * 2 * 9];
        let out = conv2d(&input, &weights, &[0.0; 3], 3, 3, 2);
        assert_eq!((out.height(), out.width(), out.channels()), (3, 3, 3));
    }

    #[test]
    fn conv3d_zero_kernel_is_zero() {
        let input = FeatureTensor::from_data(2, 2, 2, vec![1.0; 8]);
        let out = conv3d_single(&input, &[0.0; 27]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv3d_center_tap_copies() {
        let input = FeatureTensor::from_data(2, 3, 4, (0..24).map(|v| v as f32).collect());
        let mut kernel = [0.0f32; 27];
        kernel[(1 * 3 + 1) * 3 + 1] = 1.0;
        let out = conv3d_single(&input, &kernel);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn linear_matches_hand_multiply() {
        // W = [[1,2],[3,4],[5,6]], x = [10, 100], b = [0.5, 0, -1]
        let y = linear(
            &[10.0, 100.0],
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            &[0.5, 0.0, -1.0],
        );
        assert_eq!(y, vec![210.5, 430.0, 649.0]);
    }

    #[test]
    fn softmax_sums_to_one_and_is_stable() {
        let probs = softmax_row(&[1e4, 1e4 + 1.0, 0.0]);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn sigmoid_anchors() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-4.0) - 0.01798621).abs() < 1e-6);
    }
}
