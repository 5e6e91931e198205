//! Training configuration and history.
//!
//! The on-disk config is flat `key=value` text. All scalar keys are
//! required; `dims.*` keys are optional and fall back to the stock
//! architecture. Unknown keys are errors so typos fail loudly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ModelDims;
use crate::training::loss::NegativeScheme;

/// Objective selector: plain cross-entropy on originals, or the combined
/// contrastive objective over originals and paraphrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Baseline,
    Contrastive,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::Contrastive => "contrastive",
        }
    }

    pub fn parse(s: &str) -> Result<TrainMode> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "contrastive" => Ok(TrainMode::Contrastive),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected baseline or contrastive)"
            ))),
        }
    }
}

/// Hyperparameters of one training run.
///
/// [`Default`] carries the reference profile (learning rate 1e-5, batch
/// 280, 150 epochs, margin 1); [`TrainConfig::desk_profile`] is the small
/// CPU profile used by the synthetic experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub margin: f64,
    pub mode: TrainMode,
    pub seed: u64,
    pub negative_scheme: NegativeScheme,
    pub dims: ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 280,
            epochs: 150,
            margin: 1.0,
            mode: TrainMode::Contrastive,
            seed: 42,
            negative_scheme: NegativeScheme::Reverse,
            dims: ModelDims::default(),
        }
    }
}

impl TrainConfig {
    /// Small-scale profile for desk experiments: batch 32, 30 epochs, and
    /// a learning rate that converges within them.
    pub fn desk_profile() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            ..TrainConfig::default()
        }
    }

    pub fn max_question_len(&self) -> usize {
        self.dims.max_question_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.margin.is_nan() || self.margin < 0.0 {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        self.dims.validate()
    }

    /// Parses the flat `key=value` config format.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut values: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {} is not key=value: {raw:?}", lineno + 1))
            })?;
            if values.insert(key.trim(), value.trim()).is_some() {
                return Err(Error::Config(format!("duplicate config key {:?}", key.trim())));
            }
        }

        const SCALAR_KEYS: [&str; 8] = [
            "learning_rate",
            "batch_size",
            "epochs",
            "margin",
            "mode",
            "seed",
            "negative_scheme",
            "max_question_len",
        ];
        const DIM_KEYS: [&str; 9] = [
            "dims.image_size",
            "dims.image_channels",
            "dims.conv1",
            "dims.conv2",
            "dims.conv3",
            "dims.d_v",
            "dims.d_e",
            "dims.d_t",
            "dims.d_f",
        ];
        for key in values.keys() {
            if !SCALAR_KEYS.contains(key) && !DIM_KEYS.contains(key) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
        }
        let missing: Vec<&str> = SCALAR_KEYS
            .iter()
            .filter(|k| !values.contains_key(**k))
            .copied()
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "missing config keys: {}",
                missing.join(", ")
            )));
        }

        fn num<T: std::str::FromStr>(values: &BTreeMap<&str, &str>, key: &str, fallback: T) -> Result<T> {
            match values.get(key) {
                None => Ok(fallback),
                Some(raw) => raw.parse::<T>().map_err(|_| {
                    Error::Config(format!("config key {key} has invalid value {raw:?}"))
                }),
            }
        }

        let defaults = ModelDims::default();
        let dims = ModelDims {
            image_size: num(&values, "dims.image_size", defaults.image_size)?,
            image_channels: num(&values, "dims.image_channels", defaults.image_channels)?,
            conv_channels: [
                num(&values, "dims.conv1", defaults.conv_channels[0])?,
                num(&values, "dims.conv2", defaults.conv_channels[1])?,
                num(&values, "dims.conv3", defaults.conv_channels[2])?,
            ],
            d_v: num(&values, "dims.d_v", defaults.d_v)?,
            d_e: num(&values, "dims.d_e", defaults.d_e)?,
            d_t: num(&values, "dims.d_t", defaults.d_t)?,
            d_f: num(&values, "dims.d_f", defaults.d_f)?,
            max_question_len: num(&values, "max_question_len", defaults.max_question_len)?,
        };
        let config = TrainConfig {
            learning_rate: num(&values, "learning_rate", 0.0)?,
            batch_size: num(&values, "batch_size", 0)?,
            epochs: num(&values, "epochs", 0)?,
            margin: num(&values, "margin", 0.0)?,
            mode: TrainMode::parse(values["mode"])?,
            seed: num(&values, "seed", 0)?,
            negative_scheme: NegativeScheme::parse(values["negative_scheme"])?,
            dims,
        };
        config.validate()?;
        Ok(config)
    }

    /// Serializes to the `key=value` format; `parse` round-trips it.
    pub fn to_config_string(&self) -> String {
        format!(
            "learning_rate={}\nbatch_size={}\nepochs={}\nmargin={}\nmode={}\nseed={}\n\
             negative_scheme={}\nmax_question_len={}\ndims.image_size={}\ndims.image_channels={}\n\
             dims.conv1={}\ndims.conv2={}\ndims.conv3={}\ndims.d_v={}\ndims.d_e={}\ndims.d_t={}\ndims.d_f={}\n",
            self.learning_rate,
            self.batch_size,
            self.epochs,
            self.margin,
            self.mode.as_str(),
            self.seed,
            self.negative_scheme.as_str(),
            self.dims.max_question_len,
            self.dims.image_size,
            self.dims.image_channels,
            self.dims.conv_channels[0],
            self.dims.conv_channels[1],
            self.dims.conv_channels[2],
            self.dims.d_v,
            self.dims.d_e,
            self.dims.d_t,
            self.dims.d_f,
        )
    }
}

/// One epoch of training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub ce_a: f64,
    pub ce_p: f64,
    pub triplet: f64,
    pub val_oa: f64,
}

/// Per-epoch loss and validation records of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// CSV with header `epoch,total,ce_a,ce_p,triplet,val_oa`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,ce_a,ce_p,triplet,val_oa\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.total, r.ce_a, r.ce_p, r.triplet, r.val_oa
            ));
        }
        out
    }
}
