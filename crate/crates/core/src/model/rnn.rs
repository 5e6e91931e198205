//! Recurrent question encoder.
//!
//! A single tanh cell consumes the embeddings of the first `len` tokens;
//! the final hidden state is the textual feature. Padding positions are
//! never read, so the feature is independent of the padded length.

use crate::model::vocab::TokenSeq;
use crate::model::ModelParams;

/// Cached hidden states of one question forward pass.
#[derive(Debug, Clone)]
pub struct RnnTrace {
    ids: Vec<usize>,
    len: usize,
    /// `hs[0]` is the zero initial state; `hs[t]` the state after step `t`.
    hs: Vec<Vec<f64>>,
}

impl RnnTrace {
    pub fn f_t(&self) -> &[f64] {
        &self.hs[self.len]
    }
}

/// Runs the question encoder, keeping hidden states for the backward pass.
pub fn encode_question_traced(params: &ModelParams, seq: &TokenSeq) -> RnnTrace {
    let cell = &params.rnn;
    let d_h = cell.d_h;
    let d_in = cell.d_in;
    let len = seq.len.min(seq.indices.len()).max(1);
    let mut hs = Vec::with_capacity(len + 1);
    hs.push(vec![0.0; d_h]);
    for t in 0..len {
        let token = seq.indices[t];
        let embed = &params.embed[token * d_in..(token + 1) * d_in];
        let prev = &hs[t];
        let mut h = vec![0.0; d_h];
        for (j, h_j) in h.iter_mut().enumerate() {
            let mut pre = cell.bias[j];
            let wx_row = &cell.w_x[j * d_in..(j + 1) * d_in];
            pre += wx_row.iter().zip(embed).map(|(w, e)| w * e).sum::<f64>();
            let wh_row = &cell.w_h[j * d_h..(j + 1) * d_h];
            pre += wh_row.iter().zip(prev).map(|(w, p)| w * p).sum::<f64>();
            *h_j = pre.tanh();
        }
        hs.push(h);
    }
    RnnTrace {
        ids: seq.indices[..len].to_vec(),
        len,
        hs,
    }
}

/// The textual feature of one tokenized question.
pub fn encode_question(params: &ModelParams, seq: &TokenSeq) -> Vec<f64> {
    encode_question_traced(params, seq).f_t().to_vec()
}

/// Backpropagates `d_ft` through time, accumulating gradients for the
/// cell, the embedding rows that were read, and nothing else.
#[allow(clippy::needless_range_loop)]
pub fn encode_question_backward(
    params: &ModelParams,
    trace: &RnnTrace,
    d_ft: &[f64],
    grads: &mut ModelParams,
) {
    let cell = &params.rnn;
    let (d_h, d_in) = (cell.d_h, cell.d_in);
    let mut d_hidden = d_ft.to_vec();
    for t in (0..trace.len).rev() {
        let h = &trace.hs[t + 1];
        let prev = &trace.hs[t];
        let token = trace.ids[t];
        let embed = &params.embed[token * d_in..(token + 1) * d_in];
        let d_pre: Vec<f64> = d_hidden
            .iter()
            .zip(h)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
        let mut d_prev = vec![0.0; d_h];
        for j in 0..d_h {
            let g = d_pre[j];
            grads.rnn.bias[j] += g;
            for k in 0..d_in {
                grads.rnn.w_x[j * d_in + k] += g * embed[k];
                grads.embed[token * d_in + k] += g * cell.w_x[j * d_in + k];
            }
            for k in 0..d_h {
                grads.rnn.w_h[j * d_h + k] += g * prev[k];
                d_prev[k] += g * cell.w_h[j * d_h + k];
            }
        }
        d_hidden = d_prev;
    }
}
