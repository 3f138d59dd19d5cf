//! Annotation workflow operations: group labelling by name-form template,
//! position indexing, masking, validation and two-annotator comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedDocument, AnnotationRecord, CharIndex, Occurrence};
use crate::error::{Error, Result};
use crate::labels::{Axis, Bie, Fi, Fml, TokenLabel};
use crate::tokenizer::{basic_tokenize, Token};

/// Replacement for every annotated occurrence in masked text.
pub const MASK_TOKEN: &str = "ANNOTATED";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateSlot {
    /// A capitalized word of two or more characters (`X`).
    Full,
    /// A capital letter followed by a dot (`X.`).
    DottedInitial,
    /// A lone capital letter (`x`).
    BareInitial,
    Literal(String),
}

impl TemplateSlot {
    pub fn matches(&self, token: &str) -> bool {
        let mut chars = token.chars();
        let first = chars.next();
        match self {
            TemplateSlot::Full => {
                first.is_some_and(char::is_uppercase)
                    && token.chars().count() >= 2
                    && token.chars().any(char::is_lowercase)
                    && token.chars().all(|c| c.is_alphabetic() || matches!(c, '-' | '\'' | '\u{2019}'))
            }
            TemplateSlot::DottedInitial => {
                first.is_some_and(char::is_uppercase) && chars.next() == Some('.') && chars.next().is_none()
            }
            TemplateSlot::BareInitial => first.is_some_and(char::is_uppercase) && chars.next().is_none(),
            TemplateSlot::Literal(s) => token == s,
        }
    }
}

/// Token-form pattern such as `X, Y.` (full word, comma, dotted initial).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameTemplate {
    pub slots: Vec<TemplateSlot>,
}

impl FromStr for NameTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let slots: Vec<TemplateSlot> = basic_tokenize(s)
            .into_iter()
            .map(|t| {
                let mut c = t.text.chars();
                match (c.next(), c.next(), c.next()) {
                    (Some(a), None, _) if a.is_ascii_uppercase() => TemplateSlot::Full,
                    (Some(a), None, _) if a.is_ascii_lowercase() => TemplateSlot::BareInitial,
                    (Some(a), Some('.'), None) if a.is_ascii_uppercase() => TemplateSlot::DottedInitial,
                    _ => TemplateSlot::Literal(t.text),
                }
            })
            .collect();
        if slots.is_empty() {
            return Err(Error::Template("empty template".into()));
        }
        if slots.iter().all(|s| matches!(s, TemplateSlot::Literal(_))) {
            return Err(Error::Template(format!("{s:?} has no name-form placeholder")));
        }
        Ok(NameTemplate { slots })
    }
}

impl NameTemplate {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn matches(&self, tokens: &[Token]) -> bool {
        tokens.len() == self.slots.len() && self.slots.iter().zip(tokens).all(|(s, t)| s.matches(&t.text))
    }
}

/// An occurrence `group_label` left alone because it overlaps an existing record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub position: usize,
    pub text: String,
    pub existing_record: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabelReport {
    /// Character offsets that received the labels.
    pub labelled: Vec<usize>,
    pub collisions: Vec<Collision>,
}

/// Label every unannotated occurrence matching `template`. Matches are
/// non-overlapping, scanned left to right; existing records are never changed,
/// only extended with new positions of an identical (text, labels) record.
pub fn group_label(
    doc: &AnnotatedDocument,
    template: &NameTemplate,
    labels: &[TokenLabel],
) -> Result<(AnnotatedDocument, GroupLabelReport)> {
    if labels.len() != template.len() {
        return Err(Error::Template(format!(
            "{} labels for a {}-token template",
            labels.len(),
            template.len()
        )));
    }
    if labels.iter().any(|l| !l.is_name()) {
        return Err(Error::Template("group labels must all be name labels".into()));
    }
    let tokens = doc.tokens();
    let occurrences = doc.occurrences(&tokens)?;
    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    for occ in &occurrences {
        for slot in &mut owner[occ.first_token..=occ.last_token] {
            *slot = Some(occ.record);
        }
    }
    let index = CharIndex::new(&doc.text);
    let label_strings: Vec<String> = labels.iter().map(ToString::to_string).collect();
    let mut out = doc.clone();
    let mut report = GroupLabelReport::default();
    let n = template.len();
    let mut i = 0;
    while i + n <= tokens.len() {
        let window = &tokens[i..i + n];
        if !template.matches(window) {
            i += 1;
            continue;
        }
        let (start, end) = (window[0].start, window[n - 1].end);
        let text = index
            .slice(&doc.text, start, end)
            .expect("token offsets lie inside the text")
            .to_string();
        if let Some(existing_record) = owner[i..i + n].iter().flatten().next().copied() {
            let already = owner[i..i + n].iter().all(|o| *o == Some(existing_record))
                && occurrences.iter().any(|o| o.first_token == i && o.last_token == i + n - 1);
            if !already {
                report.collisions.push(Collision {
                    position: start,
                    text,
                    existing_record,
                });
            }
            i += n;
            continue;
        }
        match out
            .records
            .iter_mut()
            .find(|r| r.text == text && r.labels == label_strings)
        {
            Some(r) => {
                r.positions.push(start);
                r.positions.sort_unstable();
            }
            None => out.records.push(AnnotationRecord {
                text,
                positions: vec![start],
                labels: label_strings.clone(),
                comment: None,
            }),
        }
        report.labelled.push(start);
        i += n;
    }
    Ok((out, report))
}

/// Character offsets of every token-aligned occurrence of `name`, left to
/// right and non-overlapping.
pub fn index_positions(text: &str, name: &str, case_insensitive: bool) -> Vec<usize> {
    let name_chars: Vec<char> = name.chars().collect();
    if name_chars.is_empty() || basic_tokenize(name).is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = text.chars().collect();
    let tokens = basic_tokenize(text);
    let eq = |a: &char, b: &char| {
        if case_insensitive {
            a.to_lowercase().eq(b.to_lowercase())
        } else {
            a == b
        }
    };
    let mut out = Vec::new();
    let mut next_free = 0;
    for t in &tokens {
        if t.start < next_free {
            continue;
        }
        let end = t.start + name_chars.len();
        if end > chars.len() || !chars[t.start..end].iter().zip(&name_chars).all(|(a, b)| eq(a, b)) {
            continue;
        }
        if tokens.iter().any(|u| u.end == end) && !tokens.iter().any(|u| u.start < end && u.end > end) {
            out.push(t.start);
            next_free = end;
        }
    }
    out
}

/// Text with each annotated occurrence replaced by [`MASK_TOKEN`].
pub fn mask(doc: &AnnotatedDocument) -> Result<String> {
    let tokens = doc.tokens();
    let occurrences = doc.occurrences(&tokens)?;
    let chars: Vec<char> = doc.text.chars().collect();
    let mut out = String::with_capacity(doc.text.len());
    let mut cursor = 0;
    for occ in &occurrences {
        let start = tokens[occ.first_token].start;
        let end = tokens[occ.last_token].end;
        out.extend(&chars[cursor..start]);
        out.push_str(MASK_TOKEN);
        cursor = end;
    }
    out.extend(&chars[cursor..]);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    /// The text at a recorded position differs from the record, or is not token-aligned.
    PositionMismatch,
    /// A token label lacks one of the three axes or names an unknown value.
    IncompleteForm,
    /// The record has a different number of labels than tokens.
    ArityMismatch,
    /// Two occurrences share tokens.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub doc_id: String,
    pub record: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} record {}: {:?}: {}", self.doc_id, self.record, self.kind, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Why `label` is not a complete fused label, if it is not.
pub fn label_problem(label: &str) -> Option<String> {
    let parts: Vec<&str> = label.split('_').collect();
    let axes = [Axis::Bie, Axis::Fml, Axis::Fi];
    if parts.len() > 3 {
        return Some(format!("{label:?} has more than three parts"));
    }
    let mut missing = Vec::new();
    for (i, axis) in axes.iter().enumerate() {
        let ok = match (i, parts.get(i)) {
            (_, None) => false,
            (0, Some(p)) => Bie::from_str(p).is_ok(),
            (1, Some(p)) => Fml::from_str(p).is_ok(),
            (_, Some(p)) => Fi::from_str(p).is_ok(),
        };
        if !ok {
            missing.push(axis.to_string());
        }
    }
    if missing.is_empty() {
        None
    } else {
        Some(format!("{label:?} lacks a valid {} value", missing.join("/")))
    }
}

/// Check every record; problems are collected rather than raised.
pub fn validate(doc: &AnnotatedDocument) -> ValidationReport {
    let tokens = doc.tokens();
    let index = CharIndex::new(&doc.text);
    let mut violations = Vec::new();
    let mut spans: Vec<(usize, usize, usize)> = Vec::new();
    let mut push = |record: usize, kind: ViolationKind, detail: String| {
        violations.push(Violation {
            doc_id: doc.doc_id.clone(),
            record,
            kind,
            detail,
        })
    };
    for (r, rec) in doc.records.iter().enumerate() {
        let name_tokens = basic_tokenize(&rec.text).len();
        if rec.labels.len() != name_tokens {
            push(
                r,
                ViolationKind::ArityMismatch,
                format!("{} labels for {name_tokens} tokens of {:?}", rec.labels.len(), rec.text),
            );
        }
        for l in &rec.labels {
            if let Some(p) = label_problem(l) {
                push(r, ViolationKind::IncompleteForm, p);
            }
        }
        let len = rec.text.chars().count();
        for &pos in &rec.positions {
            let found = index.slice(&doc.text, pos, pos + len);
            if found != Some(rec.text.as_str()) {
                push(
                    r,
                    ViolationKind::PositionMismatch,
                    format!("position {pos} holds {found:?}, expected {:?}", rec.text),
                );
                continue;
            }
            let first = tokens.partition_point(|t| t.start < pos);
            let last = tokens.partition_point(|t| t.end <= pos + len);
            let aligned = first < last && tokens[first].start == pos && tokens[last - 1].end == pos + len;
            if !aligned {
                push(r, ViolationKind::PositionMismatch, format!("position {pos} is not token-aligned"));
                continue;
            }
            spans.push((first, last - 1, r));
        }
    }
    spans.sort_unstable();
    for w in spans.windows(2) {
        if w[1].0 <= w[0].1 {
            push(
                w[1].2,
                ViolationKind::Overlap,
                format!("tokens {}..={} overlap record {}", w[1].0, w[1].1, w[0].2),
            );
        }
    }
    violations.sort_by(|a, b| (a.record, a.kind).cmp(&(b.record, b.kind)));
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisagreementKind {
    SpanOnlyInA,
    SpanOnlyInB,
    FormMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub doc_id: String,
    pub kind: DisagreementKind,
    /// First and last token of the span.
    pub span: (usize, usize),
    pub char_start: usize,
    pub text: String,
    pub labels_a: Option<Vec<String>>,
    pub labels_b: Option<Vec<String>>,
    pub details: String,
}

fn labelled_spans(doc: &AnnotatedDocument, tokens: &[Token]) -> Result<BTreeMap<(usize, usize), (usize, Vec<String>)>> {
    let occurrences: Vec<Occurrence> = doc.occurrences(tokens)?;
    Ok(occurrences
        .into_iter()
        .map(|o| {
            (
                (o.first_token, o.last_token),
                (o.char_start, doc.records[o.record].labels.clone()),
            )
        })
        .collect())
}

/// Disagreements between two annotations of the same text, ordered by span
/// then kind.
pub fn compare(a: &AnnotatedDocument, b: &AnnotatedDocument) -> Result<Vec<Disagreement>> {
    if a.text != b.text {
        return Err(Error::TextMismatch(format!("{} vs {}", a.doc_id, b.doc_id)));
    }
    let tokens = a.tokens();
    let sa = labelled_spans(a, &tokens)?;
    let sb = labelled_spans(b, &tokens)?;
    let index = CharIndex::new(&a.text);
    let text_of = |span: (usize, usize)| {
        index
            .slice(&a.text, tokens[span.0].start, tokens[span.1].end)
            .unwrap_or_default()
            .to_string()
    };
    let mut out = Vec::new();
    let mut keys: Vec<&(usize, usize)> = sa.keys().chain(sb.keys()).collect();
    keys.sort_unstable();
    keys.dedup();
    for &span in keys {
        let (kind, details) = match (sa.get(&span), sb.get(&span)) {
            (Some(_), None) => (DisagreementKind::SpanOnlyInA, "annotated only by A".to_string()),
            (None, Some(_)) => (DisagreementKind::SpanOnlyInB, "annotated only by B".to_string()),
            (Some((_, la)), Some((_, lb))) if la != lb => {
                let diffs: Vec<String> = la
                    .iter()
                    .zip(lb)
                    .enumerate()
                    .filter(|(_, (x, y))| x != y)
                    .map(|(i, (x, y))| format!("token {i}: {x} vs {y}"))
                    .collect();
                (DisagreementKind::FormMismatch, diffs.join("; "))
            }
            _ => continue,
        };
        let char_start = sa.get(&span).or(sb.get(&span)).map(|x| x.0).unwrap_or_default();
        out.push(Disagreement {
            doc_id: a.doc_id.clone(),
            kind,
            span,
            char_start,
            text: text_of(span),
            labels_a: sa.get(&span).map(|x| x.1.clone()),
            labels_b: sb.get(&span).map(|x| x.1.clone()),
            details,
        });
    }
    Ok(out)
}

/// Compare two corpora document by document (matched on id). Documents
/// present on one side only are an error.
pub fn compare_corpora(a: &[AnnotatedDocument], b: &[AnnotatedDocument]) -> Result<Vec<Disagreement>> {
    let by_id: BTreeMap<&str, &AnnotatedDocument> = b.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "documents in the two corpora",
            left: a.len(),
            right: b.len(),
        });
    }
    let mut out = Vec::new();
    for doc in a {
        let other = by_id
            .get(doc.doc_id.as_str())
            .ok_or_else(|| Error::TextMismatch(format!("{} missing from the second corpus", doc.doc_id)))?;
        out.extend(compare(doc, other)?);
    }
    Ok(out)
}

/// Token-level fused labels of both annotators, for agreement statistics.
pub fn paired_token_labels(a: &AnnotatedDocument, b: &AnnotatedDocument) -> Result<(Vec<TokenLabel>, Vec<TokenLabel>)> {
    if a.text != b.text {
        return Err(Error::TextMismatch(format!("{} vs {}", a.doc_id, b.doc_id)));
    }
    Ok((a.token_labels()?.1, b.token_labels()?.1))
}
