//! Annotated corpus on disk, CoNLL reader, label-configuration mapping and a
//! seeded synthetic generator.
//!
//! Layout: one subfolder per document holding `page.txt` (the visible text)
//! and `names.json`:
//!
//! ```json
//! {
//!   "names": [
//!     { "text": "John Doe", "positions": [0, 57], "labels": ["Begin_First_Full", "End_Last_Full"], "comment": "optional" }
//!   ]
//! }
//! ```
//!
//! Positions are character offsets of each occurrence of `text`; `labels`
//! holds one fused label per token of `text`.

mod conll;
mod synth;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{decode_spans, NameSpan, TokenLabel};
use crate::tokenizer::{basic_tokenize, Token};

pub use conll::{entity_spans, heuristic_name_labels, is_initial, map_labels, parse_conll, read_conll, ConllDocument, ConllToken, LabelConfig};
pub use synth::{synth_generate, SynthParams};

pub const TEXT_FILE: &str = "page.txt";
pub const SIDECAR_FILE: &str = "names.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub text: String,
    pub positions: Vec<usize>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sidecar {
    pub names: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub text: String,
    pub records: Vec<AnnotationRecord>,
}

/// Character-indexed view of a string.
#[derive(Debug, Clone)]
pub struct CharIndex {
    byte_at: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut byte_at: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_at.push(text.len());
        CharIndex { byte_at }
    }

    pub fn len(&self) -> usize {
        self.byte_at.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Substring for the character range `[start, end)`, if in bounds.
    pub fn slice<'t>(&self, text: &'t str, start: usize, end: usize) -> Option<&'t str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&text[self.byte_at[start]..self.byte_at[end]])
    }
}

/// One annotated occurrence resolved to token indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occurrence {
    pub record: usize,
    pub char_start: usize,
    pub first_token: usize,
    pub last_token: usize,
}

impl AnnotatedDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        AnnotatedDocument {
            doc_id: doc_id.into(),
            text: text.into(),
            records: Vec::new(),
        }
    }

    pub fn tokens(&self) -> Vec<Token> {
        basic_tokenize(&self.text)
    }

    fn invalid(&self, record: usize, detail: String) -> Error {
        Error::Validation {
            doc: self.doc_id.clone(),
            record,
            detail,
        }
    }

    /// Resolve every record position to token ranges, checking text, token
    /// alignment, label arity and non-overlap.
    pub fn occurrences(&self, tokens: &[Token]) -> Result<Vec<Occurrence>> {
        let index = CharIndex::new(&self.text);
        let mut out = Vec::new();
        for (r, rec) in self.records.iter().enumerate() {
            let name_chars = rec.text.chars().count();
            let name_tokens = basic_tokenize(&rec.text).len();
            if name_tokens == 0 {
                return Err(self.invalid(r, "empty name text".into()));
            }
            if rec.labels.len() != name_tokens {
                return Err(self.invalid(
                    r,
                    format!("{} labels for {name_tokens} tokens", rec.labels.len()),
                ));
            }
            for &pos in &rec.positions {
                let found = index.slice(&self.text, pos, pos + name_chars);
                if found != Some(rec.text.as_str()) {
                    return Err(self.invalid(
                        r,
                        format!("position {pos} does not hold {:?} (found {found:?})", rec.text),
                    ));
                }
                let first = tokens.partition_point(|t| t.start < pos);
                let last = tokens.partition_point(|t| t.end <= pos + name_chars);
                let aligned = first < last
                    && tokens[first].start == pos
                    && tokens[last - 1].end == pos + name_chars
                    && last - first == name_tokens;
                if !aligned {
                    return Err(self.invalid(r, format!("position {pos} is not token-aligned")));
                }
                out.push(Occurrence {
                    record: r,
                    char_start: pos,
                    first_token: first,
                    last_token: last - 1,
                });
            }
        }
        out.sort_by_key(|o| (o.first_token, o.record));
        for w in out.windows(2) {
            if w[1].first_token <= w[0].last_token {
                return Err(self.invalid(
                    w[1].record,
                    format!("occurrence at {} overlaps record {}", w[1].char_start, w[0].record),
                ));
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.token_labels().map(|_| ())
    }

    /// Tokens of the text and their gold labels.
    pub fn token_labels(&self) -> Result<(Vec<Token>, Vec<TokenLabel>)> {
        let tokens = self.tokens();
        let occurrences = self.occurrences(&tokens)?;
        let mut labels = vec![TokenLabel::Outside; tokens.len()];
        for occ in occurrences {
            let rec = &self.records[occ.record];
            for (offset, s) in rec.labels.iter().enumerate() {
                labels[occ.first_token + offset] = s
                    .parse()
                    .map_err(|e: Error| self.invalid(occ.record, e.to_string()))?;
            }
        }
        Ok((tokens, labels))
    }

    pub fn gold_spans(&self) -> Result<Vec<NameSpan>> {
        Ok(decode_spans(&self.token_labels()?.1))
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            names: self.records.clone(),
        }
    }
}

pub fn sidecar_json(doc: &AnnotatedDocument) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&doc.sidecar())?;
    s.push('\n');
    Ok(s)
}

/// Read one document folder without validating positions.
pub fn read_document_raw(dir: &Path) -> Result<AnnotatedDocument> {
    let doc_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text_path = dir.join(TEXT_FILE);
    let text = fs::read_to_string(&text_path).map_err(|e| Error::io(&text_path, e))?;
    let side_path = dir.join(SIDECAR_FILE);
    let side = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&side)?;
    Ok(AnnotatedDocument {
        doc_id,
        text,
        records: sidecar.names,
    })
}

/// Document folders of a corpus root, sorted by name.
pub fn document_dirs(root: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(TEXT_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Read and validate every document under `root`.
pub fn read_corpus(root: impl AsRef<Path>) -> Result<Vec<AnnotatedDocument>> {
    let docs = read_corpus_raw(root)?;
    for d in &docs {
        d.validate()?;
    }
    Ok(docs)
}

pub fn read_corpus_raw(root: impl AsRef<Path>) -> Result<Vec<AnnotatedDocument>> {
    document_dirs(root.as_ref())?
        .iter()
        .map(|d| read_document_raw(d))
        .collect()
}

/// Write one document folder; the sidecar goes through a temporary file and a rename.
pub fn write_document(root: &Path, doc: &AnnotatedDocument) -> Result<()> {
    if doc.doc_id.is_empty() || doc.doc_id.contains(['/', '\\']) || doc.doc_id.starts_with('.') {
        return Err(Error::Config(format!("invalid document id {:?}", doc.doc_id)));
    }
    let dir = root.join(&doc.doc_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let text_path = dir.join(TEXT_FILE);
    fs::write(&text_path, &doc.text).map_err(|e| Error::io(&text_path, e))?;
    write_atomic(&dir.join(SIDECAR_FILE), sidecar_json(doc)?.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_corpus(docs: &[AnnotatedDocument], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for d in docs {
        write_document(root, d)?;
    }
    Ok(())
}
