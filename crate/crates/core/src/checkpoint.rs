//! Checkpoint container: model dims, both vocabularies, and every
//! parameter tensor under its name. Stored as a single JSON document so
//! checkpoints stay diffable and loadable without the training code.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::AnswerVocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, TextVocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub mode: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub val_oa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    dims: ModelDims,
    meta: CheckpointMeta,
    text_vocab: Vec<String>,
    answer_vocab: Vec<String>,
    params: BTreeMap<String, NamedTensor>,
}

/// A trained model ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: ModelDims,
    pub meta: CheckpointMeta,
    pub text_vocab: TextVocab,
    pub answer_vocab: AnswerVocabulary,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(
        params: ModelParams,
        text_vocab: TextVocab,
        answer_vocab: AnswerVocabulary,
        meta: CheckpointMeta,
    ) -> Checkpoint {
        Checkpoint {
            dims: params.dims.clone(),
            meta,
            text_vocab,
            answer_vocab,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        let params: BTreeMap<String, NamedTensor> = self
            .params
            .visit()
            .into_iter()
            .map(|(name, shape, data)| {
                (
                    name.to_string(),
                    NamedTensor {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        let file = CheckpointFile {
            dims: self.dims.clone(),
            meta: self.meta.clone(),
            text_vocab: self.text_vocab.tokens().to_vec(),
            answer_vocab: self.answer_vocab.answers.clone(),
            params,
        };
        let mut s = serde_json::to_string(&file).expect("checkpoint serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        file.dims.validate()?;
        let mut text_vocab = TextVocab::from_tokens(file.text_vocab);
        text_vocab.reindex();
        let mut answer_vocab = AnswerVocabulary::from_answers(file.answer_vocab);
        answer_vocab.reindex();
        let mut params = ModelParams::init(&file.dims, text_vocab.len(), answer_vocab.len(), 0);
        let mut remaining = file.params;
        for (name, data) in params.visit_mut() {
            let tensor = remaining.remove(name).ok_or_else(|| {
                Error::parse(path, format!("checkpoint is missing parameter {name:?}"))
            })?;
            if tensor.data.len() != data.len() {
                return Err(Error::Shape {
                    expected: format!("{} values for {name}", data.len()),
                    got: format!("{}", tensor.data.len()),
                });
            }
            *data = tensor.data;
        }
        if let Some(extra) = remaining.keys().next() {
            return Err(Error::parse(
                path,
                format!("checkpoint has unknown parameter {extra:?}"),
            ));
        }
        Ok(Checkpoint {
            dims: file.dims,
            meta: file.meta,
            text_vocab,
            answer_vocab,
            params,
        })
    }

    /// Parameter names and shapes, aligned with the stored order.
    pub fn inspect(&self) -> Vec<(String, Vec<usize>)> {
        self.params
            .visit()
            .into_iter()
            .map(|(name, shape, _)| (name.to_string(), shape))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_checkpoint() -> Checkpoint {
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
        let text_vocab = TextVocab::build(["is there a road?"]);
        let answer_vocab = AnswerVocabulary::from_answers(vec!["no".into(), "yes".into()]);
        let params = ModelParams::init(&dims, text_vocab.len(), answer_vocab.len(), 21);
        Checkpoint::new(
            params,
            text_vocab,
            answer_vocab,
            CheckpointMeta {
                mode: "contrastive".into(),
                seed: 21,
                best_epoch: 4,
                val_oa: 0.75,
            },
        )
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.params, ckpt.params);
        assert_eq!(loaded.text_vocab, ckpt.text_vocab);
        assert_eq!(loaded.answer_vocab.answers, ckpt.answer_vocab.answers);
        assert_eq!(loaded.meta, ckpt.meta);
        assert_eq!(loaded.answer_vocab.index_of("yes"), Some(1));
    }

    #[test]
    fn inspect_lists_every_tensor_with_shape() {
        let ckpt = small_checkpoint();
        let listing = ckpt.inspect();
        assert_eq!(listing.len(), 16);
        assert!(listing.iter().any(|(n, s)| n == "conv1.weight" && s == &vec![2, 3, 3, 3]));
        assert!(listing.iter().any(|(n, s)| n == "classifier.bias" && s == &vec![2]));
    }

    #[test]
    fn renamed_tensor_is_rejected() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let json = ckpt.to_json().replace("\"rnn.bias\"", "\"rnn.other\"");
        std::fs::write(&path, json).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
