//! Four-column CoNLL files and label-configuration mapping.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{span_position, Fi, Fml, TokenLabel, OUTSIDE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConllToken {
    pub text: String,
    pub pos: String,
    pub chunk: String,
    pub ner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConllDocument {
    pub sentences: Vec<Vec<ConllToken>>,
}

pub fn read_conll(path: impl AsRef<Path>) -> Result<Vec<ConllDocument>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, &path.display().to_string())
}

pub fn parse_conll(text: &str, origin: &str) -> Result<Vec<ConllDocument>> {
    let mut docs: Vec<ConllDocument> = Vec::new();
    let mut sentence: Vec<ConllToken> = Vec::new();

    fn close(docs: &mut Vec<ConllDocument>, sentence: &mut Vec<ConllToken>) {
        if !sentence.is_empty() {
            if docs.is_empty() {
                docs.push(ConllDocument::default());
            }
            docs.last_mut()
                .expect("document exists")
                .sentences
                .push(std::mem::take(sentence));
        }
    }

    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            close(&mut docs, &mut sentence);
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols[0] == "-DOCSTART-" {
            close(&mut docs, &mut sentence);
            docs.push(ConllDocument::default());
            continue;
        }
        let [text, pos, chunk, ner] = cols[..] else {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                detail: format!("expected 4 columns, found {}", cols.len()),
            });
        };
        sentence.push(ConllToken {
            text: text.into(),
            pos: pos.into(),
            chunk: chunk.into(),
            ner: ner.into(),
        });
    }
    close(&mut docs, &mut sentence);
    docs.retain(|d| !d.sentences.is_empty());
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelConfig {
    /// Person tokens become `PER`, everything else `Outside`.
    Per,
    /// Person tokens get fused name-form labels, everything else `Outside`.
    Fml,
    /// Entity types `PER`, `LOC`, `ORG`, `MISC` per token.
    Conll,
    /// Entity types, with person tokens replaced by fused name-form labels.
    FmlPlusConll,
}

impl FromStr for LabelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "PER" => Ok(LabelConfig::Per),
            "FML" => Ok(LabelConfig::Fml),
            "CONLL" => Ok(LabelConfig::Conll),
            "FML_PLUS_CONLL" | "FML+CONLL" => Ok(LabelConfig::FmlPlusConll),
            _ => Err(Error::Config(format!("unknown label configuration {s:?}"))),
        }
    }
}

/// Entity spans `(type, start, end_exclusive)` from IOB1 or IOB2 tags.
pub fn entity_spans(tags: &[&str]) -> Vec<(String, usize, usize)> {
    let mut spans: Vec<(String, usize, usize)> = Vec::new();
    let mut current: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (prefix, kind) = match tag.split_once('-') {
            Some((p, k)) if p == "B" || p == "I" => (p, k),
            _ => {
                if let Some((k, s)) = current.take() {
                    spans.push((k, s, i));
                }
                continue;
            }
        };
        let continues = prefix == "I" && current.as_ref().is_some_and(|(k, _)| k == kind);
        if !continues {
            if let Some((k, s)) = current.take() {
                spans.push((k, s, i));
            }
            current = Some((kind.to_string(), i));
        }
    }
    if let Some((k, s)) = current {
        spans.push((k, s, tags.len()));
    }
    spans
}

/// A single uppercase letter, optionally followed by a dot.
pub fn is_initial(token: &str) -> bool {
    let mut c = token.chars();
    match (c.next(), c.next(), c.next()) {
        (Some(a), None, _) => a.is_uppercase(),
        (Some(a), Some('.'), None) => a.is_uppercase(),
        _ => false,
    }
}

/// Heuristic fused labels for a person name: positional roles, `Initial`
/// for initial-shaped tokens. Lossy by design.
pub fn heuristic_name_labels<S: AsRef<str>>(tokens: &[S]) -> Vec<TokenLabel> {
    let n = tokens.len();
    crate::labels::positional_forms(n)
        .into_iter()
        .zip(tokens)
        .enumerate()
        .map(|(i, (fml, t)): (usize, (Fml, &S))| {
            let fi = if is_initial(t.as_ref()) { Fi::Initial } else { Fi::Full };
            TokenLabel::name(span_position(i, n), fml, fi)
        })
        .collect()
}

/// Per-document, per-sentence label strings under a label configuration.
pub fn map_labels(docs: &[ConllDocument], config: LabelConfig) -> Vec<Vec<Vec<String>>> {
    docs.iter()
        .map(|d| d.sentences.iter().map(|s| map_sentence(s, config)).collect())
        .collect()
}

fn map_sentence(sentence: &[ConllToken], config: LabelConfig) -> Vec<String> {
    let tags: Vec<&str> = sentence.iter().map(|t| t.ner.as_str()).collect();
    let mut out = vec![OUTSIDE.to_string(); sentence.len()];
    for (kind, start, end) in entity_spans(&tags) {
        let person = kind == "PER";
        match (config, person) {
            (LabelConfig::Per, true) => out[start..end].fill("PER".into()),
            (LabelConfig::Per | LabelConfig::Fml, false) => {}
            (LabelConfig::Conll, _) => out[start..end].fill(kind.clone()),
            (LabelConfig::FmlPlusConll, false) => out[start..end].fill(kind.clone()),
            (LabelConfig::Fml | LabelConfig::FmlPlusConll, true) => {
                let words: Vec<&str> = sentence[start..end].iter().map(|t| t.text.as_str()).collect();
                for (slot, label) in out[start..end].iter_mut().zip(heuristic_name_labels(&words)) {
                    *slot = label.to_string();
                }
            }
        }
    }
    out
}
