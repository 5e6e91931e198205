//! Persistent translation cache.
//!
//! Entries are stored as JSON lines keyed by the exact `(src, dst, text)`
//! triple; normalization belongs to dedup, not transport. Duplicate keys
//! are resolved last-write-wins when the file is loaded. Write failures
//! fail open: the translation is still returned, only the store is skipped.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::translate::{Lang, Translator};

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    src: String,
    dst: String,
    text: String,
    result: String,
}

struct CacheInner {
    entries: HashMap<(Lang, Lang, String), String>,
    file: Option<File>,
}

/// Append-safe on-disk cache of translation results.
pub struct TranslationCache {
    path: PathBuf,
    inner: Mutex<CacheInner>,
}

impl TranslationCache {
    /// Opens (or creates) a cache file and loads existing entries.
    pub fn open(path: &Path) -> Result<TranslationCache> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(entry) => {
                        let key = (
                            Lang::from_code(&entry.src)?,
                            Lang::from_code(&entry.dst)?,
                            entry.text,
                        );
                        entries.insert(key, entry.result);
                    }
                    Err(e) => {
                        log::warn!(
                            "skipping malformed cache line {} in {}: {e}",
                            lineno + 1,
                            path.display()
                        );
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(TranslationCache {
            path: path.to_path_buf(),
            inner: Mutex::new(CacheInner {
                entries,
                file: Some(file),
            }),
        })
    }

    /// An in-memory cache with no backing file, for tests and dry runs.
    pub fn in_memory() -> TranslationCache {
        TranslationCache {
            path: PathBuf::new(),
            inner: Mutex::new(CacheInner {
                entries: HashMap::new(),
                file: None,
            }),
        }
    }

    pub fn get(&self, text: &str, src: Lang, dst: Lang) -> Option<String> {
        let inner = self.inner.lock().expect("cache lock");
        inner.entries.get(&(src, dst, text.to_string())).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores a result, appending it to the backing file when present.
    /// I/O failures are logged and otherwise ignored.
    pub fn put(&self, text: &str, src: Lang, dst: Lang, result: &str) {
        let mut inner = self.inner.lock().expect("cache lock");
        inner
            .entries
            .insert((src, dst, text.to_string()), result.to_string());
        if let Some(file) = inner.file.as_mut() {
            let line = CacheLine {
                src: src.as_str().to_string(),
                dst: dst.as_str().to_string(),
                text: text.to_string(),
                result: result.to_string(),
            };
            let mut payload = serde_json::to_string(&line).expect("cache line serializes");
            payload.push('\n');
            if let Err(e) = file.write_all(payload.as_bytes()).and_then(|_| file.flush()) {
                log::warn!("cache write to {} failed, continuing uncached: {e}", self.path.display());
            }
        }
    }
}

/// Wraps a translator with a [`TranslationCache`]. On a hit the inner
/// translator is not called at all; behaviour is otherwise identical.
pub struct CachedTranslator<T> {
    cache: TranslationCache,
    inner: T,
}

impl<T: Translator> CachedTranslator<T> {
    pub fn new(cache: TranslationCache, inner: T) -> Self {
        CachedTranslator { cache, inner }
    }

    pub fn cache(&self) -> &TranslationCache {
        &self.cache
    }
}

impl<T: Translator> Translator for CachedTranslator<T> {
    fn translate(&self, text: &str, src: Lang, dst: Lang) -> Result<String> {
        if let Some(hit) = self.cache.get(text, src, dst) {
            return Ok(hit);
        }
        let result = self.inner.translate(text, src, dst)?;
        self.cache.put(text, src, dst, &result);
        Ok(result)
    }
}
