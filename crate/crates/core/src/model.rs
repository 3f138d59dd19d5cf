//! Either trained model behind one document-level prediction interface.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chunking::split_sentences;
use crate::cognn::CogNNModel;
use crate::corpus::AnnotationRecord;
use crate::error::{Error, Result};
use crate::isbert::{DocumentPrediction, IsBertModel};
use crate::labels::{decode_spans, TokenLabel};
use crate::params::Checkpoint;
use crate::tokenizer::basic_tokenize;

#[derive(Debug, Clone)]
pub enum AnyModel {
    CogNN(Box<CogNNModel>),
    IsBert(Box<IsBertModel>),
}

impl AnyModel {
    /// Load a checkpoint, dispatching on its `model` header key.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        match ckpt.header.get("model").map(String::as_str) {
            Some("cognn") => Ok(AnyModel::CogNN(Box::new(CogNNModel::from_checkpoint(&ckpt)?))),
            Some("isbert") => Ok(AnyModel::IsBert(Box::new(IsBertModel::from_checkpoint(&ckpt)?))),
            other => Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AnyModel::CogNN(_) => "cognn",
            AnyModel::IsBert(_) => "isbert",
        }
    }

    /// Label every token of `text`. The sentence tagger runs sentence by sentence.
    pub fn predict_document(&self, doc_id: &str, text: &str) -> Result<DocumentPrediction> {
        match self {
            AnyModel::IsBert(m) => m.predict_document(doc_id, text),
            AnyModel::CogNN(m) => {
                let tokens = basic_tokenize(text);
                let mut labels = Vec::with_capacity(tokens.len());
                for range in split_sentences(text, &tokens) {
                    let words: Vec<String> = tokens[range].iter().map(|t| t.text.clone()).collect();
                    labels.extend(m.predict(&words)?.labels);
                }
                Ok(DocumentPrediction {
                    doc_id: doc_id.to_string(),
                    spans: decode_spans(&labels),
                    tokens,
                    labels,
                })
            }
        }
    }
}

/// A predicted name occurrence in sidecar terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub position: usize,
    pub labels: Vec<String>,
}

pub fn suggestions(text: &str, prediction: &DocumentPrediction) -> Vec<Suggestion> {
    let chars: Vec<char> = text.chars().collect();
    prediction
        .spans
        .iter()
        .map(|s| {
            let (start, end) = (prediction.tokens[s.start].start, prediction.tokens[s.end].end);
            Suggestion {
                text: chars[start..end].iter().collect(),
                position: start,
                labels: prediction.labels[s.start..=s.end].iter().map(TokenLabel::to_string).collect(),
            }
        })
        .collect()
}

/// Group suggestions into sidecar records, one per distinct (text, labels).
pub fn prediction_records(found: &[Suggestion]) -> Vec<AnnotationRecord> {
    let mut records: Vec<AnnotationRecord> = Vec::new();
    for s in found {
        match records.iter_mut().find(|r| r.text == s.text && r.labels == s.labels) {
            Some(r) => r.positions.push(s.position),
            None => records.push(AnnotationRecord {
                text: s.text.clone(),
                positions: vec![s.position],
                labels: s.labels.clone(),
                comment: None,
            }),
        }
    }
    records
}
