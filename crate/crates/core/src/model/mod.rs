//! The multimodal classifier: CNN image encoder, recurrent question
//! encoder, multiplicative fusion, and a linear answer-pool classifier.
//! All arithmetic is 64-bit and every forward pass is deterministic.

mod cnn;
mod fuse;
mod rnn;
pub mod vocab;

pub use cnn::{encode_image, encode_image_backward, encode_image_traced, CnnTrace};
pub use fuse::{classify, classify_backward, fuse, fuse_backward, fuse_traced, FuseTrace};
pub use rnn::{encode_question, encode_question_backward, encode_question_traced, RnnTrace};
pub use vocab::{tokenize, split_tokens, TextVocab, TokenSeq};

use std::borrow::Borrow;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ImageArray;
use crate::error::{Error, Result};

/// Architecture dimensions. The conv stack always has three stages, each
/// halving the spatial size, so `image_size` must be divisible by 8.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub image_size: usize,
    pub image_channels: usize,
    pub conv_channels: [usize; 3],
    pub d_v: usize,
    pub d_e: usize,
    pub d_t: usize,
    pub d_f: usize,
    pub max_question_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            image_size: 32,
            image_channels: 3,
            conv_channels: [4, 8, 8],
            d_v: 64,
            d_e: 32,
            d_t: 64,
            d_f: 64,
            max_question_len: 20,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "image_size must be a positive multiple of 8, got {}",
                self.image_size
            )));
        }
        let dims = [
            self.image_channels,
            self.conv_channels[0],
            self.conv_channels[1],
            self.conv_channels[2],
            self.d_v,
            self.d_e,
            self.d_t,
            self.d_f,
            self.max_question_len,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("all model dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Flattened size of the final pooled feature map.
    pub fn flat_dim(&self) -> usize {
        let side = self.image_size / 8;
        self.conv_channels[2] * side * side
    }
}

/// 3x3 same-padding convolution parameters.
/// Weight layout: `[c_out][c_in][3][3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Dense layer parameters. Weight layout: `[out_dim][in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Vanilla tanh recurrence: `h_t = tanh(W_x e_t + W_h h_{t-1} + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub d_in: usize,
    pub d_h: usize,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A named parameter tensor: `(name, shape, data)`.
pub type NamedTensorRef<'a> = (&'static str, Vec<usize>, &'a [f64]);
/// A named mutable parameter tensor: `(name, data)`.
pub type NamedTensorMut<'a> = (&'static str, &'a mut Vec<f64>);

/// Every learnable tensor of the model. The same structure doubles as the
/// gradient and optimizer-moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub vocab_size: usize,
    pub num_answers: usize,
    pub conv: [Conv2d; 3],
    pub img_proj: Linear,
    /// Token embedding table, `vocab_size x d_e` row-major.
    pub embed: Vec<f64>,
    pub rnn: RnnCell,
    /// Fusion projection of the visual feature, `d_f x d_v`.
    pub fuse_v: Vec<f64>,
    /// Fusion projection of the textual feature, `d_f x d_t`.
    pub fuse_t: Vec<f64>,
    pub classifier: Linear,
}

impl ModelParams {
    /// Seeded uniform initialization scaled by fan-in; biases start at zero.
    pub fn init(dims: &ModelDims, vocab_size: usize, num_answers: usize, seed: u64) -> ModelParams {
        debug_assert!(dims.validate().is_ok());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let scale = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect()
        };
        let conv_dims = [
            (dims.image_channels, dims.conv_channels[0]),
            (dims.conv_channels[0], dims.conv_channels[1]),
            (dims.conv_channels[1], dims.conv_channels[2]),
        ];
        let conv = conv_dims.map(|(c_in, c_out)| Conv2d {
            c_in,
            c_out,
            weight: uniform(c_out * c_in * 9, c_in * 9),
            bias: vec![0.0; c_out],
        });
        let flat = dims.flat_dim();
        let img_proj = Linear {
            in_dim: flat,
            out_dim: dims.d_v,
            weight: uniform(dims.d_v * flat, flat),
            bias: vec![0.0; dims.d_v],
        };
        let embed = uniform(vocab_size * dims.d_e, dims.d_e);
        let rnn = RnnCell {
            d_in: dims.d_e,
            d_h: dims.d_t,
            w_x: uniform(dims.d_t * dims.d_e, dims.d_e),
            w_h: uniform(dims.d_t * dims.d_t, dims.d_t),
            bias: vec![0.0; dims.d_t],
        };
        let fuse_v = uniform(dims.d_f * dims.d_v, dims.d_v);
        let fuse_t = uniform(dims.d_f * dims.d_t, dims.d_t);
        let classifier = Linear {
            in_dim: dims.d_f,
            out_dim: num_answers,
            weight: uniform(num_answers * dims.d_f, dims.d_f),
            bias: vec![0.0; num_answers],
        };
        ModelParams {
            dims: dims.clone(),
            vocab_size,
            num_answers,
            conv,
            img_proj,
            embed,
            rnn,
            fuse_v,
            fuse_t,
            classifier,
        }
    }

    /// A same-shaped parameter set with every value zero.
    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        for (_, data) in out.visit_mut() {
            data.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// Named tensors with shapes, in a fixed order.
    pub fn visit(&self) -> Vec<NamedTensorRef<'_>> {
        let d = &self.dims;
        vec![
            ("conv1.weight", vec![self.conv[0].c_out, self.conv[0].c_in, 3, 3], &self.conv[0].weight),
            ("conv1.bias", vec![self.conv[0].c_out], &self.conv[0].bias),
            ("conv2.weight", vec![self.conv[1].c_out, self.conv[1].c_in, 3, 3], &self.conv[1].weight),
            ("conv2.bias", vec![self.conv[1].c_out], &self.conv[1].bias),
            ("conv3.weight", vec![self.conv[2].c_out, self.conv[2].c_in, 3, 3], &self.conv[2].weight),
            ("conv3.bias", vec![self.conv[2].c_out], &self.conv[2].bias),
            ("img_proj.weight", vec![d.d_v, d.flat_dim()], &self.img_proj.weight),
            ("img_proj.bias", vec![d.d_v], &self.img_proj.bias),
            ("embed.weight", vec![self.vocab_size, d.d_e], &self.embed),
            ("rnn.w_x", vec![d.d_t, d.d_e], &self.rnn.w_x),
            ("rnn.w_h", vec![d.d_t, d.d_t], &self.rnn.w_h),
            ("rnn.bias", vec![d.d_t], &self.rnn.bias),
            ("fuse.w_v", vec![d.d_f, d.d_v], &self.fuse_v),
            ("fuse.w_t", vec![d.d_f, d.d_t], &self.fuse_t),
            ("classifier.weight", vec![self.num_answers, d.d_f], &self.classifier.weight),
            ("classifier.bias", vec![self.num_answers], &self.classifier.bias),
        ]
    }

    /// Mutable view of the named tensors, in [`visit`](Self::visit) order.
    pub fn visit_mut(&mut self) -> Vec<NamedTensorMut<'_>> {
        let [c1, c2, c3] = &mut self.conv;
        vec![
            ("conv1.weight", &mut c1.weight),
            ("conv1.bias", &mut c1.bias),
            ("conv2.weight", &mut c2.weight),
            ("conv2.bias", &mut c2.bias),
            ("conv3.weight", &mut c3.weight),
            ("conv3.bias", &mut c3.bias),
            ("img_proj.weight", &mut self.img_proj.weight),
            ("img_proj.bias", &mut self.img_proj.bias),
            ("embed.weight", &mut self.embed),
            ("rnn.w_x", &mut self.rnn.w_x),
            ("rnn.w_h", &mut self.rnn.w_h),
            ("rnn.bias", &mut self.rnn.bias),
            ("fuse.w_v", &mut self.fuse_v),
            ("fuse.w_t", &mut self.fuse_t),
            ("classifier.weight", &mut self.classifier.weight),
            ("classifier.bias", &mut self.classifier.bias),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.visit().iter().map(|(_, _, data)| data.len()).sum()
    }
}

/// Full forward pass of one batch.
///
/// Returns the answer logits and the fused features row by row; the fused
/// rows are what the triplet loss consumes.
#[allow(clippy::type_complexity)]
pub fn forward<I, S>(
    params: &ModelParams,
    vocab: &TextVocab,
    images: &[I],
    texts: &[S],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)>
where
    I: Borrow<ImageArray>,
    S: AsRef<str>,
{
    if images.len() != texts.len() {
        return Err(Error::Shape {
            expected: format!("{} question texts", images.len()),
            got: format!("{}", texts.len()),
        });
    }
    let mut logits = Vec::with_capacity(images.len());
    let mut fused_rows = Vec::with_capacity(images.len());
    for (image, text) in images.iter().zip(texts) {
        let seq = tokenize(text.as_ref(), vocab, params.dims.max_question_len);
        let f_v = encode_image(params, image.borrow())?;
        let f_t = encode_question(params, &seq);
        let fused = fuse(params, &f_v, &f_t)?;
        logits.push(classify(params, &fused));
        fused_rows.push(fused);
    }
    Ok((logits, fused_rows))
}
