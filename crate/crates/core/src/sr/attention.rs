//! Layer attention and channel-spatial attention.
//!
//! Both modules add their contribution as a residual scaled by a learnable
//! coefficient, so a zero coefficient is an exact identity. That gives the
//! attention-free pipeline for free as a test baseline.

use super::SrError;
use crate::nn::{conv3d_single, sigmoid, softmax_row};
use crate::tensor::{FeatureStack, FeatureTensor};

/// Row-softmaxed correlation (Gram) matrix between the stacked layers.
///
/// Each layer is flattened to a vector of length `H*W*C`; entry `(i, j)`
/// of the Gram matrix is their dot product. Rows sum to 1 after softmax.
pub fn layer_attention_matrix(features: &FeatureStack) -> Result<Vec<Vec<f64>>, SrError> {
    if !features.all_finite() {
        return Err(SrError::NonFinite("layer attention input"));
    }
    let n = features.layer_count();
    let mut gram = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = features
                .layer(i)
                .data()
                .iter()
                .zip(features.layer(j).data())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            gram[i][j] = dot;
            gram[j][i] = dot;
        }
    }
    Ok(gram.iter().map(|row| softmax_row(row)).collect())
}

/// Layer attention: `out_i = alpha * sum_j softmax(G)_ij * feature_j + feature_i`.
///
/// `alpha == 0` returns the input unchanged (exact identity).
pub fn layer_attention(features: &FeatureStack, alpha: f32) -> Result<FeatureStack, SrError> {
    if !features.all_finite() {
        return Err(SrError::NonFinite("layer attention input"));
    }
    if alpha == 0.0 {
        return Ok(features.clone());
    }
    let weights = layer_attention_matrix(features)?;
    let n = features.layer_count();
    let len = features.layer(0).len();
    let mut out_layers = Vec::with_capacity(n);
    for i in 0..n {
        let mut mixed = vec![0.0f32; len];
        for j in 0..n {
            let w = weights[i][j] as f32;
            for (m, v) in mixed.iter_mut().zip(features.layer(j).data()) {
                *m += w * v;
            }
        }
        let base = features.layer(i);
        let data = base
            .data()
            .iter()
            .zip(&mixed)
            .map(|(&f, &m)| f + alpha * m)
            .collect();
        out_layers.push(FeatureTensor::from_data(
            base.height(),
            base.width(),
            base.channels(),
            data,
        ));
    }
    Ok(FeatureStack::new(out_layers))
}

/// Channel-spatial attention map: sigmoid of a single 3x3x3 convolution
/// over the `(H, W, C)` feature volume. Values lie strictly in (0, 1) for
/// finite inputs.
pub fn channel_spatial_attention_map(
    features: &FeatureTensor,
    kernel: &[f32; 27],
) -> Result<FeatureTensor, SrError> {
    if !features.all_finite() {
        return Err(SrError::NonFinite("channel-spatial attention input"));
    }
    let mut map = conv3d_single(features, kernel);
    for v in map.data_mut() {
        *v = sigmoid(*v);
    }
    Ok(map)
}

/// Channel-spatial attention: `out = beta * (map ⊙ features) + features`.
///
/// `beta == 0` returns the input unchanged (exact identity).
pub fn channel_spatial_attention(
    features: &FeatureTensor,
    beta: f32,
    kernel: &[f32; 27],
) -> Result<FeatureTensor, SrError> {
    if !features.all_finite() {
        return Err(SrError::NonFinite("channel-spatial attention input"));
    }
    if beta == 0.0 {
        return Ok(features.clone());
    }
    let map = channel_spatial_attention_map(features, kernel)?;
    let data = features
        .data()
        .iter()
        .zip(map.data())
        .map(|(&f, &a)| f + beta * (a * f))
        .collect();
    Ok(FeatureTensor::from_data(
        features.height(),
        features.width(),
        features.channels(),
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f32) -> FeatureTensor {
        FeatureTensor::from_data(h, w, c, (0..h * w * c).map(f).collect())
    }

    #[test]
    fn singleton_stack_softmax_is_one() {
        let stack = FeatureStack::new(vec![tensor(2, 2, 2, |i| i as f32)]);
        let m = layer_attention_matrix(&stack).unwrap();
        assert_eq!(m, vec![vec![1.0]]);
        // with N = 1 the mixed layer equals the layer itself:
        // out = (1 + alpha) * feature
        let out = layer_attention(&stack, 0.5).unwrap();
        for (o, f) in out.layer(0).data().iter().zip(stack.layer(0).data()) {
            assert!((o - 1.5 * f).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_zero_is_exact_identity() {
        let stack = FeatureStack::new(vec![
            tensor(3, 3, 2, |i| (i as f32).sin()),
            tensor(3, 3, 2, |i| (i as f32).cos()),
        ]);
        let out = layer_attention(&stack, 0.0).unwrap();
        assert_eq!(&out, &stack);
    }

    #[test]
    fn orthogonal_equal_norm_layers_give_bisymmetric_matrix() {
        // layer a: energy in the first half; layer b: in the second half;
        // equal norms, zero dot product.
        let a = FeatureTensor::from_data(1, 4, 1, vec![2.0, 2.0, 0.0, 0.0]);
        let b = FeatureTensor::from_data(1, 4, 1, vec![0.0, 0.0, 2.0, 2.0]);
        let m = layer_attention_matrix(&FeatureStack::new(vec![a, b])).unwrap();
        // Gram = [[8, 0], [0, 8]]: softmax rows mirror each other and the
        // matrix is symmetric with equal diagonal entries.
        assert!((m[0][1] - m[1][0]).abs() < 1e-12);
        assert!((m[0][0] - m[1][1]).abs() < 1e-12);
        assert_eq!(m[0][0], m[1][1]);
        let by_hand = 8.0f64.exp() / (8.0f64.exp() + 1.0);
        assert!((m[0][0] - by_hand).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let stack = FeatureStack::new(vec![
            tensor(4, 4, 3, |i| ((i * 7 % 13) as f32) * 0.1),
            tensor(4, 4, 3, |i| ((i * 5 % 11) as f32) * -0.2),
            tensor(4, 4, 3, |i| ((i * 3 % 7) as f32) * 0.3),
        ]);
        let m = layer_attention_matrix(&stack).unwrap();
        for row in m {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let bad = FeatureTensor::from_data(1, 2, 1, vec![1.0, f32::NAN]);
        assert!(layer_attention(&FeatureStack::new(vec![bad.clone()]), 0.5).is_err());
        assert!(channel_spatial_attention(&bad, 0.5, &[0.0; 27]).is_err());
    }

    #[test]
    fn beta_zero_is_exact_identity() {
        let t = tensor(3, 2, 4, |i| (i as f32) * 0.37 - 1.0);
        let mut kernel = [0.0f32; 27];
        kernel[13] = 0.8;
        let out = channel_spatial_attention(&t, 0.0, &kernel).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn zero_kernel_scales_by_half_beta() {
        // sigmoid(0) = 0.5 everywhere, so out = input * (1 + 0.5 * beta)
        let t = tensor(2, 2, 3, |i| i as f32 - 5.0);
        let beta = 0.4f32;
        let out = channel_spatial_attention(&t, beta, &[0.0; 27]).unwrap();
        for (o, f) in out.data().iter().zip(t.data()) {
            assert!((o - f * (1.0 + 0.5 * beta)).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_map_strictly_inside_unit_interval() {
        let t = tensor(5, 4, 3, |i| ((i * 31 % 17) as f32 - 8.0) * 0.9);
        let mut kernel = [0.0f32; 27];
        for (i, k) in kernel.iter_mut().enumerate() {
            *k = ((i as f32) - 13.0) * 0.11;
        }
        let map = channel_spatial_attention_map(&t, &kernel).unwrap();
        assert!(map.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
