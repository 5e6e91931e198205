//! Ordered text-rewrite rules with optional `{name}` capture placeholders.
//!
//! Rules drive both the deterministic mock translator and the synthetic
//! corpus paraphraser. A rule rewrites the first occurrence of its pattern;
//! placeholders capture the (non-empty) text between the pattern's literal
//! segments and are spliced back into the replacement.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Part {
    Literal(String),
    Capture(String),
}

/// A single `pattern => replacement` rewrite rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pattern: Vec<Part>,
    replacement: Vec<Part>,
    source: String,
}

impl Rule {
    /// Parses one `pattern => replacement` line.
    pub fn parse(line: &str) -> Result<Rule> {
        let (lhs, rhs) = line
            .split_once(" => ")
            .ok_or_else(|| Error::Config(format!("rule line missing ' => ': {line:?}")))?;
        let pattern = parse_parts(lhs)?;
        let replacement = parse_parts(rhs)?;
        if pattern.is_empty() {
            return Err(Error::Config(format!("rule has empty pattern: {line:?}")));
        }
        for part in &replacement {
            if let Part::Capture(name) = part {
                if !pattern.iter().any(|p| p == &Part::Capture(name.clone())) {
                    return Err(Error::Config(format!(
                        "replacement references unknown capture {{{name}}}: {line:?}"
                    )));
                }
            }
        }
        Ok(Rule {
            pattern,
            replacement,
            source: line.to_string(),
        })
    }

    /// The literal text of both sides, used by table hygiene checks.
    pub fn literal_words(&self) -> Vec<String> {
        let mut words = Vec::new();
        for part in self.pattern.iter().chain(self.replacement.iter()) {
            if let Part::Literal(s) = part {
                words.extend(
                    s.split(|c: char| !c.is_alphanumeric())
                        .filter(|w| !w.is_empty())
                        .map(str::to_string),
                );
            }
        }
        words
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Rewrites the first match of the pattern, or returns `None`.
    pub fn apply_once(&self, text: &str) -> Option<String> {
        let (start, end, captures) = self.find_match(text)?;
        let mut out = String::with_capacity(text.len());
        out.push_str(&text[..start]);
        for part in &self.replacement {
            match part {
                Part::Literal(s) => out.push_str(s),
                Part::Capture(name) => {
                    let (_, value) = captures
                        .iter()
                        .find(|(n, _)| n == name)
                        .expect("capture validated at parse time");
                    out.push_str(value);
                }
            }
        }
        out.push_str(&text[end..]);
        Some(out)
    }

    #[allow(clippy::type_complexity)]
    fn find_match<'t>(&self, text: &'t str) -> Option<(usize, usize, Vec<(String, &'t str)>)> {
        let mut captures: Vec<(String, &'t str)> = Vec::new();
        let mut parts = self.pattern.iter().peekable();
        let first = parts.peek().expect("pattern is non-empty");
        let (start, mut cursor) = match first {
            Part::Literal(s) => {
                let p = text.find(s.as_str())?;
                parts.next();
                (p, p + s.len())
            }
            Part::Capture(_) => (0, 0),
        };
        while let Some(part) = parts.next() {
            match part {
                Part::Literal(s) => {
                    let rel = text[cursor..].find(s.as_str())?;
                    cursor += rel + s.len();
                }
                Part::Capture(name) => match parts.peek() {
                    Some(Part::Literal(s)) => {
                        let rel = text[cursor..].find(s.as_str())?;
                        if rel == 0 {
                            return None; // captures must be non-empty
                        }
                        captures.push((name.clone(), &text[cursor..cursor + rel]));
                        cursor += rel + s.len();
                        parts.next();
                    }
                    Some(Part::Capture(_)) => return None,
                    None => {
                        if cursor == text.len() {
                            return None;
                        }
                        captures.push((name.clone(), &text[cursor..]));
                        cursor = text.len();
                    }
                },
            }
        }
        Some((start, cursor, captures))
    }
}

fn parse_parts(s: &str) -> Result<Vec<Part>> {
    let mut parts = Vec::new();
    let mut literal = String::new();
    let mut rest = s;
    while let Some(open) = rest.find('{') {
        literal.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Config(format!("unterminated capture in rule part {s:?}")))?;
        if !literal.is_empty() {
            parts.push(Part::Literal(std::mem::take(&mut literal)));
        }
        parts.push(Part::Capture(after[..close].to_string()));
        rest = &after[close + 1..];
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        parts.push(Part::Literal(literal));
    }
    Ok(parts)
}

/// Parses a rule table: one rule per line, `#` comments and blanks skipped.
pub fn parse_table(text: &str) -> Result<Vec<Rule>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(Rule::parse)
        .collect()
}
