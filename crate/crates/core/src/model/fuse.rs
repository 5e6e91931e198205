//! Multiplicative feature fusion and the answer-pool classifier.
//!
//! Both features are projected to the common fusion dimension and squashed
//! with tanh before the elementwise product:
//! `fused = tanh(W_v F_v) * tanh(W_t F_t)`.

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Cached projections of one fusion.
#[derive(Debug, Clone)]
pub struct FuseTrace {
    /// tanh-projected visual feature.
    a: Vec<f64>,
    /// tanh-projected textual feature.
    b: Vec<f64>,
    pub fused: Vec<f64>,
}

fn project_tanh(weight: &[f64], in_dim: usize, out_dim: usize, input: &[f64]) -> Vec<f64> {
    (0..out_dim)
        .map(|o| {
            weight[o * in_dim..(o + 1) * in_dim]
                .iter()
                .zip(input)
                .map(|(w, x)| w * x)
                .sum::<f64>()
                .tanh()
        })
        .collect()
}

/// Fuses a visual and a textual feature, keeping the projections.
pub fn fuse_traced(params: &ModelParams, f_v: &[f64], f_t: &[f64]) -> Result<FuseTrace> {
    let dims = &params.dims;
    if f_v.len() != dims.d_v || f_t.len() != dims.d_t {
        return Err(Error::Shape {
            expected: format!("f_v of dim {} and f_t of dim {}", dims.d_v, dims.d_t),
            got: format!("f_v of dim {} and f_t of dim {}", f_v.len(), f_t.len()),
        });
    }
    let a = project_tanh(&params.fuse_v, dims.d_v, dims.d_f, f_v);
    let b = project_tanh(&params.fuse_t, dims.d_t, dims.d_f, f_t);
    let fused = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    Ok(FuseTrace { a, b, fused })
}

/// The fused feature of one sample.
pub fn fuse(params: &ModelParams, f_v: &[f64], f_t: &[f64]) -> Result<Vec<f64>> {
    fuse_traced(params, f_v, f_t).map(|t| t.fused)
}

/// Backpropagates `d_fused`, returning gradients w.r.t. both input
/// features and accumulating the projection gradients.
#[allow(clippy::needless_range_loop)]
pub fn fuse_backward(
    params: &ModelParams,
    f_v: &[f64],
    f_t: &[f64],
    trace: &FuseTrace,
    d_fused: &[f64],
    grads: &mut ModelParams,
) -> (Vec<f64>, Vec<f64>) {
    let dims = &params.dims;
    let mut d_fv = vec![0.0; dims.d_v];
    let mut d_ft = vec![0.0; dims.d_t];
    for o in 0..dims.d_f {
        let (a, b) = (trace.a[o], trace.b[o]);
        let d_pre_a = d_fused[o] * b * (1.0 - a * a);
        let d_pre_b = d_fused[o] * a * (1.0 - b * b);
        for k in 0..dims.d_v {
            grads.fuse_v[o * dims.d_v + k] += d_pre_a * f_v[k];
            d_fv[k] += d_pre_a * params.fuse_v[o * dims.d_v + k];
        }
        for k in 0..dims.d_t {
            grads.fuse_t[o * dims.d_t + k] += d_pre_b * f_t[k];
            d_ft[k] += d_pre_b * params.fuse_t[o * dims.d_t + k];
        }
    }
    (d_fv, d_ft)
}

/// Linear map from the fused feature to answer-pool logits.
pub fn classify(params: &ModelParams, fused: &[f64]) -> Vec<f64> {
    crate::model::cnn::linear_forward(&params.classifier, fused)
}

/// Backpropagates `d_logits`, returning the gradient w.r.t. the fused
/// feature.
#[allow(clippy::needless_range_loop)]
pub fn classify_backward(
    params: &ModelParams,
    fused: &[f64],
    d_logits: &[f64],
    grads: &mut ModelParams,
) -> Vec<f64> {
    let layer = &params.classifier;
    let mut d_fused = vec![0.0; layer.in_dim];
    for o in 0..layer.out_dim {
        let g = d_logits[o];
        grads.classifier.bias[o] += g;
        for k in 0..layer.in_dim {
            grads.classifier.weight[o * layer.in_dim + k] += g * fused[k];
            d_fused[k] += g * layer.weight[o * layer.in_dim + k];
        }
    }
    d_fused
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn dims() -> ModelDims {
        ModelDims {
            image_size: 8,
            image_channels: 2,
            conv_channels: [2, 3, 3],
            d_v: 4,
            d_e: 3,
            d_t: 4,
            d_f: 4,
            max_question_len: 8,
        }
    }

    #[test]
    fn zero_text_projection_annihilates_fusion() {
        let mut params = ModelParams::init(&dims(), 6, 3, 7);
        params.fuse_t.iter_mut().for_each(|w| *w = 0.0);
        let fused = fuse(&params, &[0.3, -0.1, 0.9, 0.2], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(fused.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_case_matches_hand_evaluation() {
        let one = ModelDims {
            image_size: 8,
            image_channels: 1,
            conv_channels: [1, 1, 1],
            d_v: 1,
            d_e: 1,
            d_t: 1,
            d_f: 1,
            max_question_len: 4,
        };
        let mut params = ModelParams::init(&one, 3, 2, 1);
        params.fuse_v = vec![1.0];
        params.fuse_t = vec![1.0];
        let fused = fuse(&params, &[0.5], &[0.5]).unwrap();
        let expected = 0.5f64.tanh() * 0.5f64.tanh();
        assert!((fused[0] - expected).abs() < 1e-15);
        assert!((fused[0] - 0.2135).abs() < 1e-4);
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let params = ModelParams::init(&dims(), 6, 3, 7);
        assert!(matches!(
            fuse(&params, &[0.0; 3], &[0.0; 4]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_classifier_weights_leave_only_bias() {
        let mut params = ModelParams::init(&dims(), 6, 3, 7);
        params.classifier.weight.iter_mut().for_each(|w| *w = 0.0);
        params.classifier.bias = vec![0.5, -1.0, 2.0];
        assert_eq!(classify(&params, &[0.4, 0.1, -0.2, 0.9]), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn constant_logit_shift_keeps_argmax() {
        let params = ModelParams::init(&dims(), 6, 3, 7);
        let logits = classify(&params, &[0.4, 0.1, -0.2, 0.9]);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        let shifted: Vec<f64> = logits.iter().map(|v| v + 3.7).collect();
        assert_eq!(argmax(&logits), argmax(&shifted));
    }
}
