//! Deterministic training batch assembly.
//!
//! Each epoch visits every original question of the split exactly once in a
//! seeded shuffle order. The paraphrase text fed to the contrastive branch
//! is drawn uniformly from the question's paraphrase group on every draw,
//! so a fresh paraphrase is sampled each time the sample appears.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{paraphrase_groups, AnswerVocabulary, Split, VQACorpus};
use crate::error::{Error, Result};

/// A decoded image in channel-major layout with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageArray {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl ImageArray {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ImageArray {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width);
        ImageArray {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Decodes a PNG file into an RGB array normalized to `[0, 1]`.
    pub fn load_png(path: &Path) -> Result<ImageArray> {
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: "zero-sized image".into(),
            });
        }
        let mut arr = ImageArray::zeros(3, h, w);
        for y in 0..h {
            for x in 0..w {
                let px = img.get_pixel(x as u32, y as u32);
                for c in 0..3 {
                    arr.set(c, y, x, px.0[c] as f64 / 255.0);
                }
            }
        }
        Ok(arr)
    }
}

/// In-memory cache of decoded corpus images, shared across epochs.
#[derive(Debug, Default, Clone)]
pub struct ImageStore {
    images: HashMap<u64, Arc<ImageArray>>,
}

impl ImageStore {
    pub fn new() -> Self {
        ImageStore::default()
    }

    /// Decodes every image of the corpus.
    pub fn load_all(corpus: &VQACorpus) -> Result<ImageStore> {
        let mut store = ImageStore::new();
        for rec in &corpus.images {
            let arr = ImageArray::load_png(&corpus.image_path(rec))?;
            store.images.insert(rec.id, Arc::new(arr));
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: u64, image: ImageArray) {
        self.images.insert(id, Arc::new(image));
    }

    pub fn get(&self, id: u64) -> Option<Arc<ImageArray>> {
        self.images.get(&id).cloned()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// One training batch. All lists share the same length `B >= 1`.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub ids: Vec<u64>,
    pub images: Vec<Arc<ImageArray>>,
    pub question_texts: Vec<String>,
    pub paraphrase_texts: Vec<String>,
    pub labels: Vec<usize>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Assembles one epoch of batches for `split`.
///
/// The epoch order is a seeded shuffle of the split's original questions;
/// the final short batch is kept. For originals without paraphrases the
/// paraphrase text falls back to the original text.
pub fn make_batches(
    corpus: &VQACorpus,
    store: &ImageStore,
    vocab: &AnswerVocabulary,
    split: Split,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<SampleBatch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let groups = paraphrase_groups(corpus);
    let split_imgs: std::collections::HashSet<u64> = corpus
        .images
        .iter()
        .filter(|i| i.split == split)
        .map(|i| i.id)
        .collect();
    let mut order: Vec<usize> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| split_imgs.contains(&g.original.img_id))
        .map(|(i, _)| i)
        .collect();
    if order.is_empty() {
        return Err(Error::EmptySplit(split));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let mut batch = SampleBatch {
            ids: Vec::with_capacity(chunk.len()),
            images: Vec::with_capacity(chunk.len()),
            question_texts: Vec::with_capacity(chunk.len()),
            paraphrase_texts: Vec::with_capacity(chunk.len()),
            labels: Vec::with_capacity(chunk.len()),
        };
        for &gi in chunk {
            let group = &groups[gi];
            let q = group.original;
            let image = store.get(q.img_id).ok_or_else(|| {
                Error::Integrity(format!("image {} is not loaded in the image store", q.img_id))
            })?;
            let label = vocab.index_of(&q.answer).ok_or_else(|| {
                Error::Integrity(format!(
                    "answer {:?} of question {} is not in the answer pool",
                    q.answer, q.id
                ))
            })?;
            let paraphrase = if group.paraphrases.is_empty() {
                q.text.clone()
            } else {
                let pick = rng.gen_range(0..group.paraphrases.len());
                group.paraphrases[pick].text.clone()
            };
            batch.ids.push(q.id);
            batch.images.push(image);
            batch.question_texts.push(q.text.clone());
            batch.paraphrase_texts.push(paraphrase);
            batch.labels.push(label);
        }
        batches.push(batch);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ImageRecord, Pivot, QuestionRecord, QuestionType};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn corpus_with_originals(n: usize) -> (VQACorpus, ImageStore) {
        let mut corpus = VQACorpus {
            metadata: BTreeMap::new(),
            images: vec![ImageRecord {
                id: 0,
                file: "unused.png".into(),
                split: Split::Train,
            }],
            questions: Vec::new(),
            root: Default::default(),
        };
        for i in 0..n {
            corpus.questions.push(QuestionRecord {
                id: i as u64,
                img_id: 0,
                qtype: QuestionType::Count,
                text: format!("how many shapes in sample {i}?"),
                answer: "1".into(),
                origin_id: None,
                pivot: Pivot::None,
            });
        }
        let mut store = ImageStore::new();
        store.insert(0, ImageArray::zeros(3, 8, 8));
        (corpus, store)
    }

    fn vocab() -> AnswerVocabulary {
        AnswerVocabulary::from_answers(vec!["1".into()])
    }

    #[test]
    fn seeded_batches_are_deterministic_with_short_tail() {
        let (corpus, store) = corpus_with_originals(5);
        let a = make_batches(&corpus, &store, &vocab(), Split::Train, 2, 7).unwrap();
        let b = make_batches(&corpus, &store, &vocab(), Split::Train, 2, 7).unwrap();
        let sizes: Vec<usize> = a.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.ids, y.ids);
            assert_eq!(x.paraphrase_texts, y.paraphrase_texts);
            assert_eq!(x.labels, y.labels);
        }
    }

    #[test]
    fn singleton_group_falls_back_to_original_text() {
        let (corpus, store) = corpus_with_originals(3);
        let batches = make_batches(&corpus, &store, &vocab(), Split::Train, 3, 1).unwrap();
        for batch in &batches {
            assert_eq!(batch.question_texts, batch.paraphrase_texts);
        }
    }

    #[test]
    fn paraphrase_draws_are_close_to_uniform() {
        let (mut corpus, store) = corpus_with_originals(1);
        for (i, pivot) in [Pivot::Zh, Pivot::De, Pivot::Fr].iter().enumerate() {
            corpus.questions.push(QuestionRecord {
                id: 100 + i as u64,
                img_id: 0,
                qtype: QuestionType::Count,
                text: format!("variant {i}?"),
                answer: "1".into(),
                origin_id: Some(0),
                pivot: *pivot,
            });
        }
        let mut counts = [0usize; 3];
        let draws = 3000;
        for seed in 0..draws {
            let batches =
                make_batches(&corpus, &store, &vocab(), Split::Train, 1, seed as u64).unwrap();
            let text = &batches[0].paraphrase_texts[0];
            let idx = (0..3)
                .find(|i| text == &format!("variant {i}?"))
                .expect("draw must be one of the paraphrases");
            counts[idx] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (0.30..=0.37).contains(&freq),
                "paraphrase frequency {freq} outside uniform band, counts {counts:?}"
            );
        }
    }

    #[test]
    fn empty_split_errors() {
        let (corpus, store) = corpus_with_originals(2);
        assert!(matches!(
            make_batches(&corpus, &store, &vocab(), Split::Val, 2, 0),
            Err(Error::EmptySplit(Split::Val))
        ));
    }

    proptest! {
        #[test]
        fn epoch_covers_each_original_exactly_once(
            n in 1usize..40,
            batch_size in 1usize..10,
            seed in 0u64..1000,
        ) {
            let (corpus, store) = corpus_with_originals(n);
            let batches =
                make_batches(&corpus, &store, &vocab(), Split::Train, batch_size, seed).unwrap();
            let mut seen: Vec<u64> = batches.iter().flat_map(|b| b.ids.clone()).collect();
            seen.sort_unstable();
            let expected: Vec<u64> = (0..n as u64).collect();
            prop_assert_eq!(seen, expected);
            for (i, b) in batches.iter().enumerate() {
                if i + 1 < batches.len() {
                    prop_assert_eq!(b.len(), batch_size);
                } else {
                    prop_assert!(!b.is_empty() && b.len() <= batch_size);
                }
            }
        }
    }
}
