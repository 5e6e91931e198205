//! Corpus data model: images, questions, paraphrase provenance, and the
//! on-disk JSON format.
//!
//! A corpus is a single JSON document listing image records and question
//! records. Paraphrased questions point back at their original through
//! `origin_id` and carry the pivot language they were back-translated
//! through. All referential invariants are checked eagerly at load time.

mod batch;

pub use batch::{make_batches, ImageArray, ImageStore, SampleBatch};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dataset split a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// The four question categories reported in the metric tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Presence,
    Count,
    Comparison,
    RuralUrban,
}

impl QuestionType {
    pub const ALL: [QuestionType; 4] = [
        QuestionType::Presence,
        QuestionType::Count,
        QuestionType::Comparison,
        QuestionType::RuralUrban,
    ];

    /// The literal used in the corpus JSON and report keys.
    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::Presence => "presence",
            QuestionType::Count => "count",
            QuestionType::Comparison => "comparison",
            QuestionType::RuralUrban => "rural_urban",
        }
    }

    /// Row label used in rendered tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            QuestionType::Presence => "Presence",
            QuestionType::Count => "Count",
            QuestionType::Comparison => "Comparison",
            QuestionType::RuralUrban => "Rural/Urban",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pivot language a paraphrase was back-translated through.
/// `None` marks an original question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pivot {
    None,
    Zh,
    De,
    Fr,
}

impl Pivot {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pivot::None => "none",
            Pivot::Zh => "zh",
            Pivot::De => "de",
            Pivot::Fr => "fr",
        }
    }

    /// Parses a pivot language code (the `none` literal is not accepted here).
    pub fn from_code(code: &str) -> Result<Pivot> {
        match code {
            "zh" => Ok(Pivot::Zh),
            "de" => Ok(Pivot::De),
            "fr" => Ok(Pivot::Fr),
            other => Err(Error::Config(format!("unknown pivot language {other:?}"))),
        }
    }
}

impl fmt::Display for Pivot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image in the corpus. `file` is relative to the corpus JSON location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file: String,
    pub split: Split,
}

/// One question, either an original (`pivot == None`) or a paraphrase of
/// the question named by `origin_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: u64,
    pub img_id: u64,
    #[serde(rename = "type")]
    pub qtype: QuestionType,
    pub text: String,
    pub answer: String,
    pub origin_id: Option<u64>,
    pub pivot: Pivot,
}

impl QuestionRecord {
    pub fn is_original(&self) -> bool {
        self.pivot == Pivot::None
    }
}

/// A full corpus: images, questions, and free-form provenance metadata.
///
/// Corpora are immutable after load and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VQACorpus {
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub images: Vec<ImageRecord>,
    pub questions: Vec<QuestionRecord>,
    /// Directory image paths are resolved against. Set by [`load_corpus`].
    #[serde(skip)]
    pub root: PathBuf,
}

impl VQACorpus {
    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Questions belonging to `split` (through their image record).
    pub fn split_questions(&self, split: Split) -> Vec<&QuestionRecord> {
        let split_imgs: HashSet<u64> = self
            .images
            .iter()
            .filter(|i| i.split == split)
            .map(|i| i.id)
            .collect();
        self.questions
            .iter()
            .filter(|q| split_imgs.contains(&q.img_id))
            .collect()
    }

    /// Absolute path of an image file.
    pub fn image_path(&self, rec: &ImageRecord) -> PathBuf {
        self.root.join(&rec.file)
    }

    /// Checks every corpus invariant, naming the offending id on failure.
    pub fn validate(&self) -> Result<()> {
        let mut img_ids = HashSet::new();
        for img in &self.images {
            if !img_ids.insert(img.id) {
                return Err(Error::Integrity(format!("duplicate image id {}", img.id)));
            }
        }
        let mut by_id: HashMap<u64, &QuestionRecord> = HashMap::new();
        for q in &self.questions {
            if by_id.insert(q.id, q).is_some() {
                return Err(Error::Integrity(format!("duplicate question id {}", q.id)));
            }
            if !img_ids.contains(&q.img_id) {
                return Err(Error::Integrity(format!(
                    "question {} references missing image id {}",
                    q.id, q.img_id
                )));
            }
            if q.text.trim().is_empty() {
                return Err(Error::Integrity(format!("question {} has empty text", q.id)));
            }
            match (q.pivot, q.origin_id) {
                (Pivot::None, Some(_)) => {
                    return Err(Error::Integrity(format!(
                        "question {} has pivot none but a non-null origin_id",
                        q.id
                    )));
                }
                (Pivot::None, None) => {}
                (_, None) => {
                    return Err(Error::Integrity(format!(
                        "question {} has pivot {} but no origin_id",
                        q.id, q.pivot
                    )));
                }
                (_, Some(_)) => {}
            }
        }
        // Second pass: origin links and paraphrase distinctness.
        let mut seen_variants: HashMap<u64, HashSet<(Pivot, &str)>> = HashMap::new();
        for q in &self.questions {
            let Some(origin_id) = q.origin_id else {
                continue;
            };
            let origin = by_id.get(&origin_id).ok_or_else(|| {
                Error::Integrity(format!(
                    "question {} references missing origin_id {}",
                    q.id, origin_id
                ))
            })?;
            if !origin.is_original() {
                return Err(Error::Integrity(format!(
                    "question {} points at origin {} which is itself a paraphrase",
                    q.id, origin_id
                )));
            }
            if origin.img_id != q.img_id || origin.qtype != q.qtype || origin.answer != q.answer {
                return Err(Error::Integrity(format!(
                    "paraphrase {} does not match origin {} on img_id/type/answer",
                    q.id, origin_id
                )));
            }
            let variants = seen_variants.entry(origin_id).or_default();
            if !variants.insert((q.pivot, q.text.as_str())) {
                return Err(Error::Integrity(format!(
                    "paraphrase {} duplicates pivot {} and text of a sibling of origin {}",
                    q.id, q.pivot, origin_id
                )));
            }
        }
        Ok(())
    }
}

/// The fixed answer pool the classifier predicts over, built from the
/// training split only and sorted for index determinism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerVocabulary {
    pub answers: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl AnswerVocabulary {
    pub fn from_answers(answers: Vec<String>) -> Self {
        let index = answers
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        AnswerVocabulary { answers, index }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .answers
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn answer(&self, idx: usize) -> &str {
        &self.answers[idx]
    }
}

/// An original question together with all of its paraphrases.
#[derive(Debug, Clone)]
pub struct ParaphraseGroup<'a> {
    pub original: &'a QuestionRecord,
    pub paraphrases: Vec<&'a QuestionRecord>,
}

impl<'a> ParaphraseGroup<'a> {
    /// Group size counting the original itself.
    pub fn len(&self) -> usize {
        1 + self.paraphrases.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Loads and validates a corpus JSON document.
pub fn load_corpus(path: &Path) -> Result<VQACorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut corpus: VQACorpus =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    corpus.root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    corpus.validate()?;
    Ok(corpus)
}

/// Serializes a corpus to pretty-printed JSON (trailing newline included).
pub fn corpus_to_json(corpus: &VQACorpus) -> String {
    let mut s = serde_json::to_string_pretty(corpus).expect("corpus serialization cannot fail");
    s.push('\n');
    s
}

/// Writes a corpus next to its image files.
pub fn save_corpus(corpus: &VQACorpus, path: &Path) -> Result<()> {
    std::fs::write(path, corpus_to_json(corpus)).map_err(|e| Error::io(path, e))
}

/// Builds the answer pool from training-split questions, deduplicated and
/// sorted lexicographically.
pub fn build_answer_vocab(corpus: &VQACorpus) -> Result<AnswerVocabulary> {
    let train = corpus.split_questions(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptySplit(Split::Train));
    }
    let mut answers: Vec<String> = train
        .iter()
        .map(|q| q.answer.clone())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    answers.sort();
    Ok(AnswerVocabulary::from_answers(answers))
}

/// Groups every original question with its paraphrases, in corpus order.
/// Originals without paraphrases yield singleton groups.
pub fn paraphrase_groups(corpus: &VQACorpus) -> Vec<ParaphraseGroup<'_>> {
    let mut groups: Vec<ParaphraseGroup<'_>> = Vec::new();
    let mut index_of: HashMap<u64, usize> = HashMap::new();
    for q in &corpus.questions {
        if q.is_original() {
            index_of.insert(q.id, groups.len());
            groups.push(ParaphraseGroup {
                original: q,
                paraphrases: Vec::new(),
            });
        }
    }
    for q in &corpus.questions {
        if let Some(origin_id) = q.origin_id {
            if let Some(&gi) = index_of.get(&origin_id) {
                groups[gi].paraphrases.push(q);
            }
        }
    }
    groups
}
