//! Back-translation data augmentation.
//!
//! For every original question and every requested pivot language the
//! corpus gains one new paraphrase, unless the round trip comes back as a
//! duplicate under the dedup policy. Emission is transactional per run: a
//! translator failure aborts without emitting a partial corpus (pair with
//! a [`crate::translate::TranslationCache`] to make retries cheap).

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{Pivot, QuestionRecord, VQACorpus};
use crate::error::{Error, Result};
use crate::translate::{Lang, Translator};

/// Duplicate-dropping policy for augmentation output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DedupPolicy {
    /// Compare texts after lowercasing, whitespace collapse, and terminal
    /// punctuation stripping.
    pub normalize: bool,
    /// Drop paraphrases equal to their original.
    pub drop_equal_to_original: bool,
    /// Drop paraphrases equal to an already-kept sibling from another pivot.
    pub drop_equal_across_pivots: bool,
}

impl Default for DedupPolicy {
    fn default() -> Self {
        DedupPolicy {
            normalize: true,
            drop_equal_to_original: true,
            drop_equal_across_pivots: true,
        }
    }
}

impl DedupPolicy {
    pub fn disabled() -> Self {
        DedupPolicy {
            normalize: true,
            drop_equal_to_original: false,
            drop_equal_across_pivots: false,
        }
    }

    fn key(&self, text: &str) -> String {
        if self.normalize {
            normalize_text(text)
        } else {
            text.to_string()
        }
    }
}

/// Lowercases, collapses whitespace runs, and strips terminal punctuation.
pub fn normalize_text(text: &str) -> String {
    let lower = text.to_lowercase();
    let collapsed = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['?', '!', '.'])
        .trim_end()
        .to_string()
}

/// True iff `candidate` should be dropped next to `original` and the
/// already-kept `siblings` under `policy`.
pub fn is_duplicate(
    candidate: &str,
    original: &str,
    siblings: &[String],
    policy: &DedupPolicy,
) -> bool {
    let cand = policy.key(candidate);
    if policy.drop_equal_to_original && cand == policy.key(original) {
        return true;
    }
    if policy.drop_equal_across_pivots && siblings.iter().any(|s| policy.key(s) == cand) {
        return true;
    }
    false
}

/// Breakdown of why paraphrases were dropped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReasons {
    pub equal_original: usize,
    pub equal_sibling: usize,
}

/// Sidecar drop report for one pivot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotDropReport {
    pub pivot: String,
    pub dropped: usize,
    pub reasons: DropReasons,
}

/// Augmentation parameters.
#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub pivots: Vec<Pivot>,
    pub policy: DedupPolicy,
    /// First id allocated to new paraphrases.
    pub id_base: u64,
    /// Bounded fan-out for translation requests; assembly stays
    /// order-deterministic regardless.
    pub concurrency: usize,
}

impl AugmentOptions {
    pub fn new(pivots: Vec<Pivot>, id_base: u64) -> Self {
        AugmentOptions {
            pivots,
            policy: DedupPolicy::default(),
            id_base,
            concurrency: 4,
        }
    }
}

/// Number of questions an augmented corpus holds: the input count plus,
/// per pivot, one paraphrase per original minus that pivot's drops.
pub fn augmented_question_count(
    input_questions: usize,
    originals: usize,
    drops_per_pivot: &[usize],
) -> usize {
    input_questions
        + drops_per_pivot
            .iter()
            .map(|d| originals - d)
            .sum::<usize>()
}

/// Round-trips `text` through `pivot` and back to English.
pub fn back_translate(text: &str, pivot: Pivot, translator: &dyn Translator) -> Result<String> {
    if text.trim().is_empty() {
        return Err(Error::Config("cannot back-translate empty text".into()));
    }
    let lang = Lang::from(pivot);
    if lang == Lang::En {
        return Err(Error::Config("pivot must not be the source language".into()));
    }
    let context = |e: Error| Error::Translate(format!("pivot {pivot}, text {text:?}: {e}"));
    let forward = translator.translate(text, Lang::En, lang).map_err(context)?;
    let back = translator.translate(&forward, lang, Lang::En).map_err(context)?;
    if back.trim().is_empty() {
        return Err(Error::Translate(format!(
            "pivot {pivot}, text {text:?}: round trip produced empty text"
        )));
    }
    Ok(back)
}

/// Applies `f` to every item with at most `concurrency` worker threads,
/// returning results in input order.
fn parallel_map<T, R, F>(items: &[T], concurrency: usize, f: F) -> Vec<Result<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = concurrency.max(1).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                *slots[i].lock().expect("slot lock") = Some(f(&items[i]));
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("worker filled slot"))
        .collect()
}

/// Augments every original question through the requested pivots.
///
/// Input records are carried over unchanged; new paraphrases get fresh ids
/// starting at `options.id_base` and full provenance (`origin_id`, `pivot`).
/// Returns the augmented corpus plus one drop report per pivot.
pub fn augment_corpus(
    corpus: &VQACorpus,
    translator: &dyn Translator,
    options: &AugmentOptions,
) -> Result<(VQACorpus, Vec<PivotDropReport>)> {
    corpus.validate()?;
    let originals: Vec<&QuestionRecord> =
        corpus.questions.iter().filter(|q| q.is_original()).collect();

    // Kept sibling texts per original, seeded with pre-existing paraphrases.
    let mut siblings: HashMap<u64, Vec<String>> = HashMap::new();
    for q in &corpus.questions {
        if let Some(origin) = q.origin_id {
            siblings.entry(origin).or_default().push(q.text.clone());
        }
    }

    let mut questions = corpus.questions.clone();
    let mut metadata: BTreeMap<String, String> = corpus.metadata.clone();
    let mut reports = Vec::with_capacity(options.pivots.len());
    let mut next_id = options.id_base;

    for &pivot in &options.pivots {
        // One request per distinct text; duplicates are common in templated
        // corpora and the service round trip dominates cost.
        let mut unique_texts: Vec<&str> = originals.iter().map(|q| q.text.as_str()).collect();
        unique_texts.sort_unstable();
        unique_texts.dedup();
        let translated = parallel_map(&unique_texts, options.concurrency, |text| {
            back_translate(text, pivot, translator)
        });
        let mut by_text: HashMap<&str, String> = HashMap::with_capacity(unique_texts.len());
        for (text, result) in unique_texts.iter().zip(translated) {
            by_text.insert(text, result?);
        }

        let mut report = PivotDropReport {
            pivot: pivot.as_str().to_string(),
            dropped: 0,
            reasons: DropReasons::default(),
        };
        for original in &originals {
            let candidate = &by_text[original.text.as_str()];
            let kept = siblings.entry(original.id).or_default();
            if options.policy.drop_equal_to_original
                && options.policy.key(candidate) == options.policy.key(&original.text)
            {
                report.dropped += 1;
                report.reasons.equal_original += 1;
                continue;
            }
            if is_duplicate(candidate, &original.text, kept, &options.policy) {
                report.dropped += 1;
                report.reasons.equal_sibling += 1;
                continue;
            }
            questions.push(QuestionRecord {
                id: next_id,
                img_id: original.img_id,
                qtype: original.qtype,
                text: candidate.clone(),
                answer: original.answer.clone(),
                origin_id: Some(original.id),
                pivot,
            });
            kept.push(candidate.clone());
            next_id += 1;
        }
        metadata.insert(
            format!("augment_dropped_{pivot}"),
            report.dropped.to_string(),
        );
        reports.push(report);
    }

    metadata.insert(
        "augment_pivots".into(),
        options
            .pivots
            .iter()
            .map(|p| p.as_str())
            .collect::<Vec<_>>()
            .join(","),
    );

    let augmented = VQACorpus {
        metadata,
        images: corpus.images.clone(),
        questions,
        root: corpus.root.clone(),
    };
    augmented.validate()?;

    let drops: Vec<usize> = reports.iter().map(|r| r.dropped).collect();
    debug_assert_eq!(
        augmented.questions.len(),
        augmented_question_count(corpus.questions.len(), originals.len(), &drops)
    );
    Ok((augmented, reports))
}
