//! Translator backends.
//!
//! [`MockTranslator`] is a deterministic rule-based stand-in used by tests
//! and offline runs; [`HttpTranslator`] talks to any service implementing
//! the minimal `/translate` JSON contract; [`CachedTranslator`] wraps either
//! with a persistent response cache.

mod cache;
mod http;
mod mock;
pub mod rules;

pub use cache::{CachedTranslator, TranslationCache};
pub use http::HttpTranslator;
pub use mock::MockTranslator;

use std::fmt;

use crate::error::{Error, Result};

/// Language codes understood by the translator backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lang {
    En,
    Zh,
    De,
    Fr,
}

impl Lang {
    pub fn as_str(&self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Zh => "zh",
            Lang::De => "de",
            Lang::Fr => "fr",
        }
    }

    pub fn from_code(code: &str) -> Result<Lang> {
        match code {
            "en" => Ok(Lang::En),
            "zh" => Ok(Lang::Zh),
            "de" => Ok(Lang::De),
            "fr" => Ok(Lang::Fr),
            other => Err(Error::Config(format!("unknown language code {other:?}"))),
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<crate::corpus::Pivot> for Lang {
    fn from(p: crate::corpus::Pivot) -> Lang {
        match p {
            crate::corpus::Pivot::None => Lang::En,
            crate::corpus::Pivot::Zh => Lang::Zh,
            crate::corpus::Pivot::De => Lang::De,
            crate::corpus::Pivot::Fr => Lang::Fr,
        }
    }
}

/// A translation backend. Implementations must be safe to call from
/// multiple threads.
pub trait Translator: Sync {
    fn translate(&self, text: &str, src: Lang, dst: Lang) -> Result<String>;
}

impl<T: Translator + ?Sized> Translator for &T {
    fn translate(&self, text: &str, src: Lang, dst: Lang) -> Result<String> {
        (**self).translate(text, src, dst)
    }
}

impl<T: Translator + ?Sized> Translator for Box<T> {
    fn translate(&self, text: &str, src: Lang, dst: Lang) -> Result<String> {
        (**self).translate(text, src, dst)
    }
}
