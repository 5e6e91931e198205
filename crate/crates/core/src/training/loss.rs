//! Triplet contrastive loss over fused features and the combined training
//! objective.
//!
//! Per batch row `i` the triplet term is
//! `max(d(F1_i, F2_i) - d(F1_i, F3_i) + m, 0)` with `d` the Euclidean
//! distance; the batch value is the mean over rows so its magnitude is
//! batch-size invariant. F1 holds the fused features of the original
//! questions (the anchors), F2 those of the sampled paraphrases (the
//! positives), and F3 is F1 with rows reversed along the batch dimension
//! (the negatives).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the negative rows F3 are derived from F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeScheme {
    /// `F3_i = F1_{B-1-i}`. For odd batches the middle row self-pairs and
    /// its term degrades to `max(d(F1, F2) + m, 0)`.
    Reverse,
    /// `F3_i = F1_{(i+1) mod B}`, which never self-pairs for `B >= 2`.
    CyclicShift,
}

impl NegativeScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            NegativeScheme::Reverse => "reverse",
            NegativeScheme::CyclicShift => "cyclic_shift",
        }
    }

    pub fn parse(s: &str) -> Result<NegativeScheme> {
        match s {
            "reverse" => Ok(NegativeScheme::Reverse),
            "cyclic_shift" => Ok(NegativeScheme::CyclicShift),
            other => Err(Error::Config(format!(
                "unknown negative_scheme {other:?} (expected reverse or cyclic_shift)"
            ))),
        }
    }

    /// Index of the F1 row serving as negative for row `i`.
    pub fn negative_index(&self, i: usize, batch: usize) -> usize {
        match self {
            NegativeScheme::Reverse => batch - 1 - i,
            NegativeScheme::CyclicShift => (i + 1) % batch,
        }
    }
}

/// The per-batch fused feature triplet plus the margin.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletFeatures {
    pub f1: Vec<Vec<f64>>,
    pub f2: Vec<Vec<f64>>,
    pub f3: Vec<Vec<f64>>,
    pub margin: f64,
}

/// Builds the triplet from anchor and positive rows, deriving the
/// negatives per `scheme`.
pub fn build_triplet(
    f1: Vec<Vec<f64>>,
    f2: Vec<Vec<f64>>,
    margin: f64,
    scheme: NegativeScheme,
) -> Result<TripletFeatures> {
    let batch = f1.len();
    if batch == 0 {
        return Err(Error::Shape {
            expected: "batch size >= 1".into(),
            got: "0 rows".into(),
        });
    }
    if f2.len() != batch {
        return Err(Error::Shape {
            expected: format!("{batch} positive rows"),
            got: format!("{}", f2.len()),
        });
    }
    let dim = f1[0].len();
    if f1.iter().chain(f2.iter()).any(|row| row.len() != dim) {
        return Err(Error::Shape {
            expected: format!("uniform feature dim {dim}"),
            got: "ragged rows".into(),
        });
    }
    let f3 = (0..batch)
        .map(|i| f1[scheme.negative_index(i, batch)].clone())
        .collect();
    Ok(TripletFeatures {
        f1,
        f2,
        f3,
        margin,
    })
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean hinge over batch rows; always `>= 0`.
pub fn triplet_loss(t: &TripletFeatures) -> f64 {
    let batch = t.f1.len();
    let mut sum = 0.0;
    for i in 0..batch {
        let pos = l2_distance(&t.f1[i], &t.f2[i]);
        let neg = l2_distance(&t.f1[i], &t.f3[i]);
        sum += (pos - neg + t.margin).max(0.0);
    }
    sum / batch as f64
}

/// Gradients of [`triplet_loss`] w.r.t. F1, F2, and F3 treated as
/// independent inputs. Callers that derived F3 from F1 must route the F3
/// gradient back through their negative scheme. At `d = 0` the distance
/// subgradient is taken as zero.
#[allow(clippy::type_complexity)]
pub fn triplet_loss_backward(
    t: &TripletFeatures,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    const EPS: f64 = 1e-12;
    let batch = t.f1.len();
    let dim = t.f1[0].len();
    let scale = 1.0 / batch as f64;
    let mut d_f1 = vec![vec![0.0; dim]; batch];
    let mut d_f2 = vec![vec![0.0; dim]; batch];
    let mut d_f3 = vec![vec![0.0; dim]; batch];
    for i in 0..batch {
        let pos = l2_distance(&t.f1[i], &t.f2[i]);
        let neg = l2_distance(&t.f1[i], &t.f3[i]);
        if pos - neg + t.margin <= 0.0 {
            continue;
        }
        if pos > EPS {
            for k in 0..dim {
                let u = (t.f1[i][k] - t.f2[i][k]) / pos;
                d_f1[i][k] += scale * u;
                d_f2[i][k] -= scale * u;
            }
        }
        if neg > EPS {
            for k in 0..dim {
                let u = (t.f1[i][k] - t.f3[i][k]) / neg;
                d_f1[i][k] -= scale * u;
                d_f3[i][k] += scale * u;
            }
        }
    }
    (d_f1, d_f2, d_f3)
}

/// Mean softmax cross-entropy over the batch.
pub fn cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", logits.len()),
            got: format!("{}", labels.len()),
        });
    }
    let mut sum = 0.0;
    for (row, &label) in logits.iter().zip(labels) {
        if label >= row.len() {
            return Err(Error::Integrity(format!(
                "label {label} out of range for {} classes",
                row.len()
            )));
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        sum += lse - row[label];
    }
    Ok(sum / logits.len() as f64)
}

/// Gradient of [`cross_entropy`] w.r.t. the logits:
/// `(softmax(row) - onehot(label)) / B`.
pub fn cross_entropy_backward(logits: &[Vec<f64>], labels: &[usize]) -> Vec<Vec<f64>> {
    let scale = 1.0 / logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(row, &label)| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            exp.iter()
                .enumerate()
                .map(|(k, e)| scale * (e / z - if k == label { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect()
}

/// The three addends of the combined objective, reported separately for
/// the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce_a: f64,
    pub ce_p: f64,
    pub triplet: f64,
}

/// Combined objective: cross-entropy on the original questions, plus
/// cross-entropy on the paraphrases, plus the triplet term.
pub fn total_loss(
    logits_a: &[Vec<f64>],
    logits_p: &[Vec<f64>],
    labels: &[usize],
    triplet: &TripletFeatures,
) -> Result<LossBreakdown> {
    let ce_a = cross_entropy(logits_a, labels)?;
    let ce_p = cross_entropy(logits_p, labels)?;
    let trip = triplet_loss(triplet);
    Ok(LossBreakdown {
        total: ce_a + ce_p + trip,
        ce_a,
        ce_p,
        triplet: trip,
    })
}
