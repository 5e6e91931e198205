//! Convolutional image encoder: three 3x3 same-padding conv layers with
//! tanh activations and 2x2 average pooling, followed by a linear
//! projection of the flattened maps to the visual feature.

use crate::corpus::ImageArray;
use crate::error::{Error, Result};
use crate::model::{Conv2d, Linear, ModelParams};

/// Cached activations of one image forward pass.
#[derive(Debug, Clone)]
pub struct CnnTrace {
    /// Input to each conv layer (the image, then the pooled maps).
    inputs: Vec<ImageArray>,
    /// Tanh activations of each conv layer, pre-pooling.
    acts: Vec<ImageArray>,
    flat: Vec<f64>,
    pub f_v: Vec<f64>,
}

fn conv3x3_forward(layer: &Conv2d, input: &ImageArray) -> ImageArray {
    let (h, w) = (input.height, input.width);
    let mut out = ImageArray::zeros(layer.c_out, h, w);
    for o in 0..layer.c_out {
        for y in 0..h {
            for x in 0..w {
                let mut sum = layer.bias[o];
                for i in 0..layer.c_in {
                    for ky in 0..3 {
                        let iy = y + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = x + kx;
                            if ix < 1 || ix > w {
                                continue;
                            }
                            sum += layer.weight[((o * layer.c_in + i) * 3 + ky) * 3 + kx]
                                * input.get(i, iy - 1, ix - 1);
                        }
                    }
                }
                out.set(o, y, x, sum);
            }
        }
    }
    out
}

fn tanh_map(input: &ImageArray) -> ImageArray {
    let data = input.data().iter().map(|v| v.tanh()).collect();
    ImageArray::from_data(input.channels, input.height, input.width, data)
}

fn avgpool2(input: &ImageArray) -> ImageArray {
    let (c, h, w) = (input.channels, input.height / 2, input.width / 2);
    let mut out = ImageArray::zeros(c, h, w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let sum = input.get(ch, 2 * y, 2 * x)
                    + input.get(ch, 2 * y, 2 * x + 1)
                    + input.get(ch, 2 * y + 1, 2 * x)
                    + input.get(ch, 2 * y + 1, 2 * x + 1);
                out.set(ch, y, x, sum / 4.0);
            }
        }
    }
    out
}

pub(crate) fn linear_forward(layer: &Linear, input: &[f64]) -> Vec<f64> {
    let mut out = layer.bias.clone();
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
        *out_v += row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
    }
    out
}

/// Runs the image encoder, keeping activations for the backward pass.
pub fn encode_image_traced(params: &ModelParams, image: &ImageArray) -> Result<CnnTrace> {
    let dims = &params.dims;
    if image.channels != dims.image_channels
        || image.height != dims.image_size
        || image.width != dims.image_size
    {
        return Err(Error::Shape {
            expected: format!(
                "{}x{}x{} image",
                dims.image_channels, dims.image_size, dims.image_size
            ),
            got: format!("{}x{}x{}", image.channels, image.height, image.width),
        });
    }
    let mut inputs = Vec::with_capacity(3);
    let mut acts = Vec::with_capacity(3);
    let mut current = image.clone();
    for conv in &params.conv {
        let pre = conv3x3_forward(conv, &current);
        let act = tanh_map(&pre);
        let pooled = avgpool2(&act);
        inputs.push(current);
        acts.push(act);
        current = pooled;
    }
    let flat = current.data().to_vec();
    let f_v = linear_forward(&params.img_proj, &flat);
    Ok(CnnTrace {
        inputs,
        acts,
        flat,
        f_v,
    })
}

/// The visual feature of one image (deterministic forward pass).
pub fn encode_image(params: &ModelParams, image: &ImageArray) -> Result<Vec<f64>> {
    encode_image_traced(params, image).map(|t| t.f_v)
}

fn conv3x3_backward(
    layer: &Conv2d,
    input: &ImageArray,
    d_pre: &ImageArray,
    grad: &mut Conv2d,
) -> ImageArray {
    let (h, w) = (input.height, input.width);
    let mut d_input = ImageArray::zeros(layer.c_in, h, w);
    for o in 0..layer.c_out {
        for y in 0..h {
            for x in 0..w {
                let g = d_pre.get(o, y, x);
                if g == 0.0 {
                    continue;
                }
                grad.bias[o] += g;
                for i in 0..layer.c_in {
                    for ky in 0..3 {
                        let iy = y + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = x + kx;
                            if ix < 1 || ix > w {
                                continue;
                            }
                            let widx = ((o * layer.c_in + i) * 3 + ky) * 3 + kx;
                            grad.weight[widx] += g * input.get(i, iy - 1, ix - 1);
                            let dv = d_input.get(i, iy - 1, ix - 1) + g * layer.weight[widx];
                            d_input.set(i, iy - 1, ix - 1, dv);
                        }
                    }
                }
            }
        }
    }
    d_input
}

/// Backpropagates `d_fv` through the image encoder, accumulating parameter
/// gradients into `grads`.
#[allow(clippy::needless_range_loop)]
pub fn encode_image_backward(
    params: &ModelParams,
    trace: &CnnTrace,
    d_fv: &[f64],
    grads: &mut ModelParams,
) {
    // Projection.
    let proj = &params.img_proj;
    let mut d_flat = vec![0.0; proj.in_dim];
    for o in 0..proj.out_dim {
        let g = d_fv[o];
        grads.img_proj.bias[o] += g;
        for i in 0..proj.in_dim {
            grads.img_proj.weight[o * proj.in_dim + i] += g * trace.flat[i];
            d_flat[i] += g * proj.weight[o * proj.in_dim + i];
        }
    }
    // Stages in reverse: unpool -> tanh -> conv.
    let last = trace.acts.len() - 1;
    let (c, h, w) = {
        let a = &trace.acts[last];
        (a.channels, a.height / 2, a.width / 2)
    };
    let mut d_pooled = ImageArray::from_data(c, h, w, d_flat);
    for stage in (0..params.conv.len()).rev() {
        let act = &trace.acts[stage];
        let mut d_pre = ImageArray::zeros(act.channels, act.height, act.width);
        for ch in 0..act.channels {
            for y in 0..act.height {
                for x in 0..act.width {
                    let d_act = d_pooled.get(ch, y / 2, x / 2) / 4.0;
                    let a = act.get(ch, y, x);
                    d_pre.set(ch, y, x, d_act * (1.0 - a * a));
                }
            }
        }
        let d_input = conv3x3_backward(
            &params.conv[stage],
            &trace.inputs[stage],
            &d_pre,
            &mut grads.conv[stage],
        );
        d_pooled = d_input;
    }
}
