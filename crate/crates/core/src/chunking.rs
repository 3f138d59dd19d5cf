//! Overlapped input processing: sentence segmentation, capacity-bounded
//! chunks with boundary tokens, fixed and adaptive overlap policies, and
//! document-level shuffling.
//!
//! Capacities and overlaps are counted in content pieces. Special tokens are
//! added on top: `[CLS]` opens the first chunk of a document, `$$` opens every
//! later chunk, and `[SEP]` follows every sentence-final piece.

use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tokenizer::{Token, TokenizedDocument};

pub const CLS: &str = "[CLS]";
pub const CONTINUATION: &str = "$$";
pub const SEP: &str = "[SEP]";

/// Candidate overlap ratios of the adaptive policy.
pub const ADAPTIVE_RATIOS: [f64; 6] = [0.0, 0.10, 0.20, 0.30, 0.40, 0.50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Special {
    Cls,
    Continuation,
    Sep,
}

impl Special {
    pub fn as_str(self) -> &'static str {
        match self {
            Special::Cls => CLS,
            Special::Continuation => CONTINUATION,
            Special::Sep => SEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChunkPiece {
    Special(Special),
    Content(String),
}

impl ChunkPiece {
    pub fn as_str(&self) -> &str {
        match self {
            ChunkPiece::Special(s) => s.as_str(),
            ChunkPiece::Content(p) => p,
        }
    }

    pub fn is_special(&self) -> bool {
        matches!(self, ChunkPiece::Special(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub pieces: Vec<ChunkPiece>,
    /// Document piece indices `[start, end)` covered by this chunk.
    pub content_range: (usize, usize),
    /// Leading content pieces shared with the previous chunk.
    pub overlap_prev: usize,
}

impl Chunk {
    /// Positions (into `pieces`) of the content pieces, in document order.
    pub fn content_positions(&self) -> Vec<usize> {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_special())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn content_len(&self) -> usize {
        self.pieces.iter().filter(|p| !p.is_special()).count()
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

impl fmt::Display for Chunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: Vec<&str> = self.pieces.iter().map(ChunkPiece::as_str).collect();
        write!(
            f,
            "[{}, {}) overlap={} | {}",
            self.content_range.0,
            self.content_range.1,
            self.overlap_prev,
            text.join(" ")
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OverlapPolicy {
    Fixed(f64),
    Adaptive {
        thresholds: Vec<usize>,
        ratios: Vec<f64>,
    },
}

impl OverlapPolicy {
    pub fn fixed(ratio: f64) -> Result<Self> {
        let p = OverlapPolicy::Fixed(ratio);
        p.validate()?;
        Ok(p)
    }

    pub fn adaptive(thresholds: Vec<usize>, ratios: Vec<f64>) -> Result<Self> {
        let p = OverlapPolicy::Adaptive { thresholds, ratios };
        p.validate()?;
        Ok(p)
    }

    /// Length table relative to the chunk capacity: one chunk or less gets no
    /// overlap, then 0.1 up to 2x, 0.2 up to 3x, 0.3 up to 4x, 0.4 up to 6x and
    /// 0.5 beyond.
    pub fn default_adaptive(capacity: usize) -> Self {
        OverlapPolicy::Adaptive {
            thresholds: vec![
                capacity,
                2 * capacity,
                3 * capacity,
                4 * capacity,
                6 * capacity,
                usize::MAX,
            ],
            ratios: ADAPTIVE_RATIOS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OverlapPolicy::Fixed(r) => {
                if !(0.0..1.0).contains(r) {
                    return Err(Error::Policy(format!("fixed ratio {r} outside [0, 1)")));
                }
            }
            OverlapPolicy::Adaptive { thresholds, ratios } => {
                if thresholds.len() != ratios.len() || thresholds.is_empty() {
                    return Err(Error::Policy(
                        "threshold and ratio lists must be non-empty and equally long".into(),
                    ));
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Policy("thresholds must be strictly ascending".into()));
                }
                if ratios.iter().any(|r| !(0.0..=0.5).contains(r)) {
                    return Err(Error::Policy("adaptive ratios must lie in [0, 0.5]".into()));
                }
            }
        }
        Ok(())
    }

    /// Overlap ratio for a document of `doc_length` content pieces.
    pub fn ratio_for(&self, doc_length: usize) -> f64 {
        match self {
            OverlapPolicy::Fixed(r) => *r,
            OverlapPolicy::Adaptive { thresholds, ratios } => {
                select_ratio(doc_length, thresholds, ratios)
            }
        }
    }
}

/// Ratio of the first threshold that is at least `doc_length`; the last ratio
/// when every threshold is shorter.
pub fn select_ratio(doc_length: usize, thresholds: &[usize], ratios: &[f64]) -> f64 {
    thresholds
        .iter()
        .position(|&t| t >= doc_length)
        .and_then(|i| ratios.get(i))
        .or(ratios.last())
        .copied()
        .unwrap_or(0.0)
}

/// Overlap in pieces for a ratio and content capacity.
pub fn effective_overlap(ratio: f64, capacity: usize) -> usize {
    (ratio * capacity as f64).floor() as usize
}

/// Sentences as token index ranges. A sentence ends after a standalone `.`,
/// `!` or `?` token, or where a blank line separates two tokens.
pub fn split_sentences(text: &str, tokens: &[Token]) -> Vec<Range<usize>> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, token) in tokens.iter().enumerate() {
        let terminal = matches!(token.text.as_str(), "." | "!" | "?");
        let blank_line_follows = tokens.get(i + 1).is_some_and(|next| {
            let gap = &chars[token.end.min(chars.len())..next.start.min(chars.len())];
            gap.iter().filter(|&&c| c == '\n').count() >= 2
        });
        if terminal || blank_line_follows {
            sentences.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        sentences.push(start..tokens.len());
    }
    sentences
}

/// A document's sub-token stream with sentence boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentPieces {
    pub doc_id: String,
    pub pieces: Vec<String>,
    /// Exclusive end index of every sentence, ascending.
    pub sentence_ends: Vec<usize>,
}

impl DocumentPieces {
    pub fn new(doc_id: impl Into<String>, pieces: Vec<String>, mut sentence_ends: Vec<usize>) -> Self {
        let n = pieces.len();
        sentence_ends.retain(|&e| e > 0 && e <= n);
        sentence_ends.sort_unstable();
        sentence_ends.dedup();
        DocumentPieces {
            doc_id: doc_id.into(),
            pieces,
            sentence_ends,
        }
    }

    /// Sentence boundaries of `text` mapped onto its sub-token stream.
    pub fn from_tokenized(doc_id: impl Into<String>, text: &str, doc: &TokenizedDocument) -> Self {
        let sentences = split_sentences(text, &doc.tokens);
        let mut last_piece_of_token = vec![None; doc.tokens.len()];
        for (i, st) in doc.subtokens.iter().enumerate() {
            last_piece_of_token[st.parent] = Some(i);
        }
        let ends = sentences
            .iter()
            .filter_map(|s| {
                s.clone()
                    .rev()
                    .find_map(|t| last_piece_of_token[t])
                    .map(|p| p + 1)
            })
            .collect();
        DocumentPieces::new(doc_id, doc.pieces(), ends)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedDocument {
    pub doc_id: String,
    pub chunks: Vec<Chunk>,
    pub capacity: usize,
    pub effective_k: usize,
}

/// Split a document into overlapped chunks of at most `capacity` content
/// pieces. Chunks end at the last sentence boundary that fits; a sentence that
/// cannot fit is broken at the capacity boundary. Adjacent chunks share
/// exactly `floor(ratio * capacity)` content pieces.
pub fn chunk_document(
    doc: &DocumentPieces,
    capacity: usize,
    policy: &OverlapPolicy,
) -> Result<ChunkedDocument> {
    policy.validate()?;
    let n = doc.pieces.len();
    let k = effective_overlap(policy.ratio_for(n), capacity);
    if capacity == 0 || k >= capacity {
        return Err(Error::CapacityTooSmall {
            capacity,
            overlap: k,
        });
    }
    let ends = &doc.sentence_ends;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let limit = (start + capacity).min(n);
        let end = if limit == n {
            n
        } else {
            let upto = ends.partition_point(|&e| e <= limit);
            match upto.checked_sub(1).map(|i| ends[i]) {
                Some(b) if b > start + k => b,
                _ => limit,
            }
        };
        let overlap_prev = if chunks.is_empty() { 0 } else { k };
        let lead = if chunks.is_empty() {
            Special::Cls
        } else {
            Special::Continuation
        };
        let mut pieces = Vec::with_capacity(end - start + 4);
        pieces.push(ChunkPiece::Special(lead));
        for idx in start..end {
            pieces.push(ChunkPiece::Content(doc.pieces[idx].clone()));
            if ends.binary_search(&(idx + 1)).is_ok() {
                pieces.push(ChunkPiece::Special(Special::Sep));
            }
        }
        chunks.push(Chunk {
            pieces,
            content_range: (start, end),
            overlap_prev,
        });
        if end == n {
            break;
        }
        start = end - k;
    }
    Ok(ChunkedDocument {
        doc_id: doc.doc_id.clone(),
        chunks,
        capacity,
        effective_k: k,
    })
}

/// Recover the document piece stream: drop specials and each chunk's leading
/// overlap, then concatenate. Inconsistent chunk metadata is an error.
pub fn reassemble(cd: &ChunkedDocument) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    let mut prev_end = 0usize;
    for (i, chunk) in cd.chunks.iter().enumerate() {
        let malformed = |detail: String| Error::MalformedChunk { chunk: i, detail };
        let (start, end) = chunk.content_range;
        let content: Vec<&str> = chunk
            .pieces
            .iter()
            .filter_map(|p| match p {
                ChunkPiece::Content(s) => Some(s.as_str()),
                ChunkPiece::Special(_) => None,
            })
            .collect();
        if start > end || content.len() != end - start {
            return Err(malformed(format!(
                "range [{start}, {end}) holds {} content pieces",
                content.len()
            )));
        }
        let expected_lead = if i == 0 {
            Special::Cls
        } else {
            Special::Continuation
        };
        if chunk.pieces.first() != Some(&ChunkPiece::Special(expected_lead)) {
            return Err(malformed(format!("must start with {}", expected_lead.as_str())));
        }
        let shared = prev_end.checked_sub(start).filter(|&s| s <= content.len());
        if shared != Some(chunk.overlap_prev) || (i == 0 && start != 0) {
            return Err(malformed(format!(
                "overlap_prev {} inconsistent with range start {start} after end {prev_end}",
                chunk.overlap_prev
            )));
        }
        let tail = &out[out.len() - chunk.overlap_prev..];
        if tail.iter().zip(&content).any(|(a, b)| a != b) {
            return Err(malformed("overlap pieces differ from the previous chunk".into()));
        }
        out.extend(content[chunk.overlap_prev..].iter().map(|s| s.to_string()));
        prev_end = end;
    }
    Ok(out)
}

/// Permute documents with a seeded generator; each item moves as a whole.
pub fn shuffle_dataset<T>(mut docs: Vec<T>, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::basic_tokenize;

    fn doc(n: usize, ends: Vec<usize>) -> DocumentPieces {
        DocumentPieces::new("d", (0..n).map(|i| format!("p{i}")).collect(), ends)
    }

    fn ranges(cd: &ChunkedDocument) -> Vec<(usize, usize)> {
        cd.chunks.iter().map(|c| c.content_range).collect()
    }

    #[test]
    fn sentence_examples() {
        let text = "Dr John Doe is a Professor . He works .";
        assert_eq!(split_sentences(text, &basic_tokenize(text)).len(), 2);

        let text = "no terminal punctuation here";
        assert_eq!(split_sentences(text, &basic_tokenize(text)), vec![0..4]);

        let text = "Doe , J. 2019 .";
        let tokens = basic_tokenize(text);
        assert_eq!(tokens[2].text, "J.");
        assert_eq!(split_sentences(text, &tokens), vec![0..5]);

        let text = "Doe J.\n\nSmith K.";
        assert_eq!(split_sentences(text, &basic_tokenize(text)), vec![0..2, 2..4]);
    }

    #[test]
    fn sliding_examples() {
        let d = doc(10, vec![10]);
        let cd = chunk_document(&d, 6, &OverlapPolicy::Fixed(0.5)).unwrap();
        assert_eq!(cd.effective_k, 3);
        assert_eq!(ranges(&cd), [(0, 6), (3, 9), (6, 10)]);
        let cd = chunk_document(&d, 6, &OverlapPolicy::Fixed(0.0)).unwrap();
        assert_eq!(ranges(&cd), [(0, 6), (6, 10)]);
    }

    #[test]
    fn capacity_512_half_overlap() {
        let d = doc(2000, vec![2000]);
        let cd = chunk_document(&d, 512, &OverlapPolicy::Fixed(0.5)).unwrap();
        assert_eq!(cd.effective_k, 256);
        for w in cd.chunks.windows(2) {
            assert_eq!(w[0].content_range.1 - w[1].content_range.0, 256);
        }
    }

    #[test]
    fn chunks_prefer_sentence_boundaries() {
        let d = doc(12, vec![4, 7, 12]);
        let cd = chunk_document(&d, 8, &OverlapPolicy::Fixed(0.0)).unwrap();
        assert_eq!(ranges(&cd), [(0, 7), (7, 12)]);
        let first: Vec<&str> = cd.chunks[0].pieces.iter().map(ChunkPiece::as_str).collect();
        assert_eq!(first, ["[CLS]", "p0", "p1", "p2", "p3", "[SEP]", "p4", "p5", "p6", "[SEP]"]);
        assert_eq!(cd.chunks[1].pieces[0], ChunkPiece::Special(Special::Continuation));
    }

    #[test]
    fn capacity_errors() {
        let d = doc(3, vec![3]);
        assert!(matches!(
            chunk_document(&d, 0, &OverlapPolicy::Fixed(0.5)),
            Err(Error::CapacityTooSmall { .. })
        ));
        assert!(chunk_document(&d, 4, &OverlapPolicy::Fixed(1.0)).is_err());
    }

    #[test]
    fn adaptive_lookup() {
        let p = OverlapPolicy::default_adaptive(64);
        assert_eq!(p.ratio_for(40), 0.0);
        assert_eq!(p.ratio_for(2000), 0.5);
        assert_eq!(p.ratio_for(100), 0.1);
        assert!(OverlapPolicy::adaptive(vec![3, 2], vec![0.0, 0.1]).is_err());
        assert!(OverlapPolicy::adaptive(vec![2, 3], vec![0.0, 0.6]).is_err());
        assert!(OverlapPolicy::adaptive(vec![2], vec![0.0, 0.1]).is_err());
        assert_eq!(select_ratio(10, &[5], &[0.2]), 0.2);
    }

    #[test]
    fn reassembly_detects_tampering() {
        let d = doc(10, vec![3, 10]);
        let mut cd = chunk_document(&d, 6, &OverlapPolicy::Fixed(0.5)).unwrap();
        assert_eq!(reassemble(&cd).unwrap(), d.pieces);
        cd.chunks[1].overlap_prev += 1;
        assert!(matches!(reassemble(&cd), Err(Error::MalformedChunk { chunk: 1, .. })));
    }

    #[test]
    fn single_chunk_and_empty() {
        let d = doc(4, vec![4]);
        let cd = chunk_document(&d, 64, &OverlapPolicy::Fixed(0.5)).unwrap();
        assert_eq!(cd.chunks.len(), 1);
        assert_eq!(reassemble(&cd).unwrap(), d.pieces);
        let cd = chunk_document(&doc(0, vec![]), 8, &OverlapPolicy::Fixed(0.5)).unwrap();
        assert!(cd.chunks.is_empty());
    }

    #[test]
    fn shuffle_keeps_items_whole() {
        let docs: Vec<Vec<u32>> = (0..6).map(|i| vec![i, i + 10, i + 20]).collect();
        let a = shuffle_dataset(docs.clone(), 4);
        assert_eq!(a, shuffle_dataset(docs.clone(), 4));
        for d in &a {
            assert!(docs.contains(d));
        }
        assert_eq!(shuffle_dataset(vec![docs[0].clone()], 9), vec![docs[0].clone()]);
    }
}
