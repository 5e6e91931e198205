//! Deterministic rule-based mock translator.
//!
//! The forward leg `en -> pivot` tags the text with the pivot marker; the
//! return leg strips the marker and applies the pivot's ordered rewrite
//! table. Each pivot ships its own table so the three pivots produce
//! different paraphrases of the same question. Text matching no rule passes
//! through unchanged, which downstream dedup then drops.
//!
//! The tables only rewrite question-template words; answer-bearing tokens
//! (digits, land-cover and shape nouns) never appear in a rule.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::translate::rules::{parse_table, Rule};
use crate::translate::{Lang, Translator};

const ZH_TABLE: &str = include_str!("../../data/mock_zh.rules");
const DE_TABLE: &str = include_str!("../../data/mock_de.rules");
const FR_TABLE: &str = include_str!("../../data/mock_fr.rules");

fn pivot_tag(lang: Lang) -> &'static str {
    match lang {
        Lang::Zh => "\u{27e6}zh\u{27e7}",
        Lang::De => "\u{27e6}de\u{27e7}",
        Lang::Fr => "\u{27e6}fr\u{27e7}",
        Lang::En => "",
    }
}

fn table_for(lang: Lang) -> Option<&'static [Rule]> {
    static TABLES: OnceLock<[Vec<Rule>; 3]> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        [
            parse_table(ZH_TABLE).expect("shipped zh table parses"),
            parse_table(DE_TABLE).expect("shipped de table parses"),
            parse_table(FR_TABLE).expect("shipped fr table parses"),
        ]
    });
    match lang {
        Lang::Zh => Some(&tables[0]),
        Lang::De => Some(&tables[1]),
        Lang::Fr => Some(&tables[2]),
        Lang::En => None,
    }
}

/// Pure, offline translator with per-pivot rewrite tables.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTranslator;

impl MockTranslator {
    pub fn new() -> Self {
        MockTranslator
    }
}

impl Translator for MockTranslator {
    fn translate(&self, text: &str, src: Lang, dst: Lang) -> Result<String> {
        match (src, dst) {
            (Lang::En, pivot) if pivot != Lang::En => {
                Ok(format!("{}{}", pivot_tag(pivot), text))
            }
            (pivot, Lang::En) if pivot != Lang::En => {
                let table = table_for(pivot).expect("pivot has a table");
                let mut out = text
                    .strip_prefix(pivot_tag(pivot))
                    .unwrap_or(text)
                    .to_string();
                for rule in table {
                    if let Some(rewritten) = rule.apply_once(&out) {
                        out = rewritten;
                    }
                }
                Ok(out)
            }
            (src, dst) => Err(Error::Translate(format!(
                "mock translator does not support the {src}->{dst} pair"
            ))),
        }
    }
}
