//! Accuracy metrics and the robustness setting matrix.
//!
//! Per-type accuracy is exact string match between predicted and gold
//! answers. AA is the unweighted mean of the per-type accuracies present;
//! OA is overall correct over total. Reports keep full precision and round
//! only at display time.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{ImageStore, QuestionType, Split, VQACorpus};
use crate::error::{Error, Result};
use crate::model;

/// Index of the largest logit; ties resolve to the lowest index so
/// prediction is deterministic.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Which questions of a split to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionFilter {
    OriginalsOnly,
    ParaphrasesOnly,
    All,
}

impl QuestionFilter {
    pub fn parse(s: &str) -> Result<QuestionFilter> {
        match s {
            "originals_only" | "originals" => Ok(QuestionFilter::OriginalsOnly),
            "paraphrases_only" | "paraphrases" => Ok(QuestionFilter::ParaphrasesOnly),
            "all" => Ok(QuestionFilter::All),
            other => Err(Error::Config(format!(
                "unknown question filter {other:?} (expected originals_only, paraphrases_only, or all)"
            ))),
        }
    }
}

/// One scored question.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub question_id: u64,
    pub predicted: String,
    pub gold: String,
    pub qtype: QuestionType,
}

/// Frozen-model predictions over one split and filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub predictions: Vec<Prediction>,
    /// Questions whose gold answer is outside the answer pool; they stay in
    /// the set and count as wrong.
    pub out_of_pool: usize,
}

/// Per-type tallies of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// One evaluation report, serialized as
/// `{"setting", "per_type", "AA", "OA"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub setting: String,
    pub per_type: BTreeMap<QuestionType, TypeMetrics>,
    #[serde(rename = "AA")]
    pub aa: f64,
    #[serde(rename = "OA")]
    pub oa: f64,
}

impl MetricsReport {
    pub fn with_setting(mut self, setting: &str) -> MetricsReport {
        self.setting = setting.to_string();
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<MetricsReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Scores a prediction set: per-type accuracy, AA, and OA.
pub fn score(preds: &PredictionSet) -> Result<MetricsReport> {
    if preds.predictions.is_empty() {
        return Err(Error::Integrity("cannot score an empty prediction set".into()));
    }
    let mut tallies: BTreeMap<QuestionType, (usize, usize)> = BTreeMap::new();
    for p in &preds.predictions {
        let entry = tallies.entry(p.qtype).or_insert((0, 0));
        entry.1 += 1;
        if p.predicted == p.gold {
            entry.0 += 1;
        }
    }
    let per_type: BTreeMap<QuestionType, TypeMetrics> = tallies
        .into_iter()
        .map(|(qtype, (correct, total))| {
            (
                qtype,
                TypeMetrics {
                    correct,
                    total,
                    accuracy: correct as f64 / total as f64,
                },
            )
        })
        .collect();
    let aa = per_type.values().map(|m| m.accuracy).sum::<f64>() / per_type.len() as f64;
    let correct: usize = per_type.values().map(|m| m.correct).sum();
    let total: usize = per_type.values().map(|m| m.total).sum();
    Ok(MetricsReport {
        setting: String::new(),
        per_type,
        aa,
        oa: correct as f64 / total as f64,
    })
}

/// Runs a frozen forward pass over every matching question of `split`,
/// in question-id order.
pub fn predict_with_params(
    params: &model::ModelParams,
    text_vocab: &model::TextVocab,
    answer_vocab: &crate::corpus::AnswerVocabulary,
    corpus: &VQACorpus,
    store: &ImageStore,
    split: Split,
    filter: QuestionFilter,
) -> Result<PredictionSet> {
    let mut questions = corpus.split_questions(split);
    questions.sort_by_key(|q| q.id);
    let mut set = PredictionSet::default();
    for q in questions {
        let keep = match filter {
            QuestionFilter::OriginalsOnly => q.is_original(),
            QuestionFilter::ParaphrasesOnly => !q.is_original(),
            QuestionFilter::All => true,
        };
        if !keep {
            continue;
        }
        let image = store.get(q.img_id).ok_or_else(|| {
            Error::Integrity(format!("image {} is not loaded in the image store", q.img_id))
        })?;
        let seq = model::tokenize(&q.text, text_vocab, params.dims.max_question_len);
        let f_v = model::encode_image(params, &image)?;
        let f_t = model::encode_question(params, &seq);
        let fused = model::fuse(params, &f_v, &f_t)?;
        let logits = model::classify(params, &fused);
        let predicted = answer_vocab.answer(argmax(&logits));
        if answer_vocab.index_of(&q.answer).is_none() {
            set.out_of_pool += 1;
        }
        set.predictions.push(Prediction {
            question_id: q.id,
            predicted: predicted.to_string(),
            gold: q.answer.clone(),
            qtype: q.qtype,
        });
    }
    if set.predictions.is_empty() {
        return Err(Error::EmptySplit(split));
    }
    Ok(set)
}

/// Evaluates a checkpoint on one split of a corpus.
pub fn evaluate_model(
    checkpoint: &Checkpoint,
    corpus: &VQACorpus,
    store: &ImageStore,
    split: Split,
    filter: QuestionFilter,
) -> Result<PredictionSet> {
    if let Some(img) = corpus.images.first() {
        if let Some(arr) = store.get(img.id) {
            if arr.height != checkpoint.dims.image_size
                || arr.width != checkpoint.dims.image_size
                || arr.channels != checkpoint.dims.image_channels
            {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint expects {}x{}x{} images, corpus has {}x{}x{}",
                    checkpoint.dims.image_channels,
                    checkpoint.dims.image_size,
                    checkpoint.dims.image_size,
                    arr.channels,
                    arr.height,
                    arr.width
                )));
            }
        }
    }
    predict_with_params(
        &checkpoint.params,
        &checkpoint.text_vocab,
        &checkpoint.answer_vocab,
        corpus,
        store,
        split,
        filter,
    )
}

/// The three train/test robustness settings, evaluated on the test split
/// with every question included.
pub fn run_setting_matrix(
    checkpoints: &BTreeMap<String, Checkpoint>,
    corpora: &BTreeMap<String, VQACorpus>,
    stores: &BTreeMap<String, ImageStore>,
) -> Result<Vec<MetricsReport>> {
    const SETTINGS: [(&str, &str); 3] = [
        ("original", "original"),
        ("original", "augmented"),
        ("augmented", "augmented"),
    ];
    for label in ["original", "augmented"] {
        if !checkpoints.contains_key(label) {
            return Err(Error::MissingLabel(format!("checkpoint {label}")));
        }
        if !corpora.contains_key(label) || !stores.contains_key(label) {
            return Err(Error::MissingLabel(format!("corpus {label}")));
        }
    }
    let mut reports = Vec::with_capacity(SETTINGS.len());
    for (train_label, test_label) in SETTINGS {
        let preds = evaluate_model(
            &checkpoints[train_label],
            &corpora[test_label],
            &stores[test_label],
            Split::Test,
            QuestionFilter::All,
        )?;
        reports.push(score(&preds)?.with_setting(&format!("{train_label}->{test_label}")));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerVocabulary, ImageArray, ImageRecord, Pivot, QuestionRecord};
    use crate::model::{ModelDims, ModelParams, TextVocab};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn preds_from_counts(counts: &[(QuestionType, usize, usize)]) -> PredictionSet {
        let mut set = PredictionSet::default();
        let mut id = 0;
        for &(qtype, correct, total) in counts {
            for i in 0..total {
                let right = i < correct;
                set.predictions.push(Prediction {
                    question_id: id,
                    predicted: if right { "a".into() } else { "b".into() },
                    gold: "a".into(),
                    qtype,
                });
                id += 1;
            }
        }
        set
    }

    #[test]
    fn aa_matches_reference_table_column() {
        let preds = preds_from_counts(&[
            (QuestionType::Presence, 8471, 10000),
            (QuestionType::Count, 6167, 10000),
            (QuestionType::Comparison, 8193, 10000),
            (QuestionType::RuralUrban, 8533, 10000),
        ]);
        let report = score(&preds).unwrap();
        assert!((report.aa - 0.7841).abs() < 1e-12, "AA was {}", report.aa);
    }

    #[test]
    fn aa_matches_second_reference_column_within_rounding() {
        let preds = preds_from_counts(&[
            (QuestionType::Presence, 9011, 10000),
            (QuestionType::Count, 6860, 10000),
            (QuestionType::Comparison, 8683, 10000),
            (QuestionType::RuralUrban, 9000, 10000),
        ]);
        let report = score(&preds).unwrap();
        assert!(
            (report.aa - 0.8389).abs() <= 5e-5,
            "AA was {}",
            report.aa
        );
    }

    #[test]
    fn single_type_collapses_all_three_metrics() {
        let preds = preds_from_counts(&[(QuestionType::Count, 3, 4)]);
        let report = score(&preds).unwrap();
        assert_eq!(report.per_type[&QuestionType::Count].accuracy, 0.75);
        assert_eq!(report.aa, 0.75);
        assert_eq!(report.oa, 0.75);
    }

    #[test]
    fn aa_is_unweighted_and_oa_is_count_weighted() {
        let preds = preds_from_counts(&[
            (QuestionType::Presence, 2, 2),
            (QuestionType::Count, 0, 2),
        ]);
        let report = score(&preds).unwrap();
        assert_eq!(report.aa, 0.5);
        assert_eq!(report.oa, 0.5);

        let preds = preds_from_counts(&[
            (QuestionType::Presence, 2, 2),
            (QuestionType::Count, 0, 1),
        ]);
        let report = score(&preds).unwrap();
        assert_eq!(report.aa, 0.5);
        assert!((report.oa - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn oa_equals_brute_force_count_on_random_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let mut set = PredictionSet::default();
            let mut id = 0;
            for qtype in QuestionType::ALL {
                for _ in 0..rng.gen_range(0..20) {
                    let right = rng.gen::<bool>();
                    set.predictions.push(Prediction {
                        question_id: id,
                        predicted: if right { "x".into() } else { "y".into() },
                        gold: "x".into(),
                        qtype,
                    });
                    id += 1;
                }
            }
            if set.predictions.is_empty() {
                continue;
            }
            let report = score(&set).unwrap();
            // Brute-force oracle: plain loop over the predictions.
            let correct = set.predictions.iter().filter(|p| p.predicted == p.gold).count();
            assert_eq!(report.oa, correct as f64 / set.predictions.len() as f64);
            let weighted: usize = report.per_type.values().map(|m| m.correct).sum();
            assert_eq!(weighted, correct);
        }
    }

    #[test]
    fn score_is_permutation_invariant() {
        let mut preds = preds_from_counts(&[
            (QuestionType::Presence, 3, 5),
            (QuestionType::Comparison, 1, 2),
        ]);
        let a = score(&preds).unwrap();
        preds.predictions.reverse();
        let b = score(&preds).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_prediction_set_errors() {
        assert!(score(&PredictionSet::default()).is_err());
    }

    #[test]
    fn report_json_uses_stable_schema() {
        let preds = preds_from_counts(&[(QuestionType::Presence, 1, 2)]);
        let report = score(&preds).unwrap().with_setting("original->original");
        let json = report.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["setting"], "original->original");
        assert_eq!(value["per_type"]["presence"]["correct"], 1);
        assert_eq!(value["per_type"]["presence"]["total"], 2);
        assert_eq!(value["AA"], 0.5);
        assert_eq!(value["OA"], 0.5);
        let reparsed: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(reparsed, report);
    }

    /// Corpus of 4 questions over one 8x8 test image, gold answers all "a".
    fn rigged_fixture() -> (VQACorpus, ImageStore, Checkpoint) {
        let corpus = VQACorpus {
            metadata: BTreeMap::new(),
            images: vec![ImageRecord {
                id: 0,
                file: "unused.png".into(),
                split: Split::Test,
            }],
            questions: (0..4)
                .map(|i| QuestionRecord {
                    id: i,
                    img_id: 0,
                    qtype: QuestionType::ALL[i as usize % 4],
                    text: format!("rigged question {i}?"),
                    answer: "a".into(),
                    origin_id: None,
                    pivot: Pivot::None,
                })
                .collect(),
            root: Default::default(),
        };
        let mut store = ImageStore::new();
        store.insert(0, ImageArray::zeros(3, 8, 8));
        let dims = ModelDims {
            image_size: 8,
            image_channels: 3,
            conv_channels: [2, 2, 2],
            d_v: 4,
            d_e: 3,
            d_t: 4,
            d_f: 4,
            max_question_len: 8,
        };
        let text_vocab = TextVocab::build(corpus.questions.iter().map(|q| q.text.as_str()));
        let answer_vocab = AnswerVocabulary::from_answers(vec!["a".into(), "b".into()]);
        let mut params = ModelParams::init(&dims, text_vocab.len(), answer_vocab.len(), 5);
        // Bias forces argmax to pool answer 0 regardless of the input.
        params.classifier.weight.iter_mut().for_each(|w| *w = 0.0);
        params.classifier.bias = vec![10.0, 0.0];
        let ckpt = Checkpoint::new(
            params,
            text_vocab,
            answer_vocab,
            crate::checkpoint::CheckpointMeta {
                mode: "baseline".into(),
                seed: 5,
                best_epoch: 0,
                val_oa: 1.0,
            },
        );
        (corpus, store, ckpt)
    }

    #[test]
    fn rigged_classifier_scores_perfect_oa() {
        let (corpus, store, ckpt) = rigged_fixture();
        let preds =
            evaluate_model(&ckpt, &corpus, &store, Split::Test, QuestionFilter::All).unwrap();
        let report = score(&preds).unwrap();
        assert_eq!(report.oa, 1.0);
        assert_eq!(preds.out_of_pool, 0);
    }

    #[test]
    fn filters_partition_the_split() {
        let (mut corpus, store, ckpt) = rigged_fixture();
        corpus.questions.push(QuestionRecord {
            id: 10,
            img_id: 0,
            qtype: QuestionType::Presence,
            text: "rigged paraphrase?".into(),
            answer: "a".into(),
            origin_id: Some(0),
            pivot: Pivot::Zh,
        });
        let count = |filter| {
            evaluate_model(&ckpt, &corpus, &store, Split::Test, filter)
                .unwrap()
                .predictions
                .len()
        };
        let originals = count(QuestionFilter::OriginalsOnly);
        let paraphrases = count(QuestionFilter::ParaphrasesOnly);
        let all = count(QuestionFilter::All);
        assert_eq!(originals, 4);
        assert_eq!(paraphrases, 1);
        assert_eq!(originals + paraphrases, all);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let (corpus, store, ckpt) = rigged_fixture();
        let a = evaluate_model(&ckpt, &corpus, &store, Split::Test, QuestionFilter::All).unwrap();
        let b = evaluate_model(&ckpt, &corpus, &store, Split::Test, QuestionFilter::All).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn image_size_mismatch_is_a_checkpoint_error() {
        let (corpus, _, ckpt) = rigged_fixture();
        let mut wrong_store = ImageStore::new();
        wrong_store.insert(0, ImageArray::zeros(3, 16, 16));
        assert!(matches!(
            evaluate_model(&ckpt, &corpus, &wrong_store, Split::Test, QuestionFilter::All),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn out_of_pool_gold_counts_as_wrong() {
        let (mut corpus, store, ckpt) = rigged_fixture();
        corpus.questions[1].answer = "offpool".into();
        let preds =
            evaluate_model(&ckpt, &corpus, &store, Split::Test, QuestionFilter::All).unwrap();
        assert_eq!(preds.out_of_pool, 1);
        let report = score(&preds).unwrap();
        assert!((report.oa - 0.75).abs() < 1e-15);
    }

    #[test]
    fn identical_corpora_make_all_settings_equal() {
        let (corpus, store, ckpt) = rigged_fixture();
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert("original".to_string(), ckpt.clone());
        checkpoints.insert("augmented".to_string(), ckpt);
        let mut corpora = BTreeMap::new();
        corpora.insert("original".to_string(), corpus.clone());
        corpora.insert("augmented".to_string(), corpus);
        let mut stores = BTreeMap::new();
        stores.insert("original".to_string(), store.clone());
        stores.insert("augmented".to_string(), store);
        let reports = run_setting_matrix(&checkpoints, &corpora, &stores).unwrap();
        assert_eq!(reports.len(), 3);
        assert_eq!(reports[0].setting, "original->original");
        assert_eq!(reports[1].setting, "original->augmented");
        assert_eq!(reports[2].setting, "augmented->augmented");
        assert!(reports.windows(2).all(|w| {
            w[0].aa == w[1].aa && w[0].oa == w[1].oa && w[0].per_type == w[1].per_type
        }));
    }

    #[test]
    fn missing_label_is_reported() {
        let (corpus, store, ckpt) = rigged_fixture();
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert("original".to_string(), ckpt);
        let mut corpora = BTreeMap::new();
        corpora.insert("original".to_string(), corpus);
        let mut stores = BTreeMap::new();
        stores.insert("original".to_string(), store);
        assert!(matches!(
            run_setting_matrix(&checkpoints, &corpora, &stores),
            Err(Error::MissingLabel(_))
        ));
    }
}
