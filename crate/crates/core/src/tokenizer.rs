//! Word tokenization, longest-prefix-match subword segmentation and the
//! label plumbing between tokens and sub-tokens.
//!
//! All offsets are character (Unicode scalar) offsets, not byte offsets.
//!
//! Punctuation is any ASCII punctuation character or any character in a
//! Unicode `P*` general category. Punctuation splits off into its own token,
//! with two exceptions: a hyphen or apostrophe between two alphanumeric
//! characters stays inside the word (`Joon-gi`, `O'Keeffe`), and a dot right
//! after a lone uppercase letter stays attached so initials survive (`J.`).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

pub const UNKNOWN_PIECE: &str = "[UNK]";
pub const CONTINUATION_PREFIX: &str = "##";
const MAX_WORD_CHARS: usize = 100;

/// A word token with character offsets `[start, end)` into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            get_general_category(c),
            GeneralCategory::ConnectorPunctuation
                | GeneralCategory::DashPunctuation
                | GeneralCategory::OpenPunctuation
                | GeneralCategory::ClosePunctuation
                | GeneralCategory::InitialPunctuation
                | GeneralCategory::FinalPunctuation
                | GeneralCategory::OtherPunctuation
        )
}

fn is_word_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '\u{2010}')
}

/// Split text on whitespace and punctuation.
pub fn basic_tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;

    fn flush(tokens: &mut Vec<Token>, current: &mut String, start: usize, end: usize) {
        if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(current),
                start,
                end,
            });
        }
    }

    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            flush(&mut tokens, &mut current, start, i);
            continue;
        }
        if is_punctuation(c) {
            let prev_alnum = current.chars().last().is_some_and(char::is_alphanumeric);
            let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if is_word_joiner(c) && prev_alnum && next_alnum {
                current.push(c);
                continue;
            }
            let mut cur = current.chars();
            let lone_upper = matches!((cur.next(), cur.next()), (Some(u), None) if u.is_uppercase());
            if c == '.' && lone_upper {
                current.push(c);
                flush(&mut tokens, &mut current, start, i + 1);
                continue;
            }
            flush(&mut tokens, &mut current, start, i);
            tokens.push(Token {
                text: c.to_string(),
                start: i,
                end: i + 1,
            });
            continue;
        }
        if current.is_empty() {
            start = i;
        }
        current.push(c);
    }
    flush(&mut tokens, &mut current, start, chars.len());
    tokens
}

/// Set of subword pieces. Continuation pieces carry the `##` prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    unknown: usize,
}

impl Vocabulary {
    /// Build from pieces; the unknown piece must be among them.
    pub fn new(pieces: Vec<String>, unknown_piece: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(pieces.len());
        let mut unique = Vec::with_capacity(pieces.len());
        for piece in pieces {
            if piece.is_empty() || piece == CONTINUATION_PREFIX {
                return Err(Error::Config("vocabulary contains an empty piece".into()));
            }
            if !index.contains_key(&piece) {
                index.insert(piece.clone(), unique.len());
                unique.push(piece);
            }
        }
        let unknown = *index
            .get(unknown_piece)
            .ok_or_else(|| Error::Config(format!("unknown piece {unknown_piece:?} not in vocabulary")))?;
        Ok(Vocabulary {
            pieces: unique,
            index,
            unknown,
        })
    }

    /// Frequency-ranked vocabulary over a token sample.
    ///
    /// Every single character seen (in both word-initial and `##` form) is
    /// always kept, so only characters never seen in the sample map to the
    /// unknown piece. The remaining budget goes to the most frequent longer
    /// prefixes and continuation substrings (ties broken lexicographically).
    pub fn build<'a>(
        tokens: impl IntoIterator<Item = &'a str>,
        max_pieces: usize,
        reserved: &[&str],
    ) -> Self {
        const MAX_PIECE_CHARS: usize = 12;
        let mut word_counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *word_counts.entry(t).or_default() += 1;
        }
        let mut candidates: HashMap<String, usize> = HashMap::new();
        let mut mandatory: BTreeMap<String, ()> = BTreeMap::new();
        for (word, &count) in &word_counts {
            let chars: Vec<char> = word.chars().collect();
            for i in 0..chars.len() {
                let single: String = chars[i..=i].iter().collect();
                if i == 0 {
                    mandatory.insert(single.clone(), ());
                }
                mandatory.insert(format!("{CONTINUATION_PREFIX}{single}"), ());
                for j in (i + 2)..=chars.len().min(i + MAX_PIECE_CHARS) {
                    let sub: String = chars[i..j].iter().collect();
                    let piece = if i == 0 {
                        sub
                    } else {
                        format!("{CONTINUATION_PREFIX}{sub}")
                    };
                    *candidates.entry(piece).or_default() += count;
                }
            }
        }
        let mut pieces: Vec<String> = vec![UNKNOWN_PIECE.to_string()];
        pieces.extend(reserved.iter().map(|s| s.to_string()));
        pieces.extend(mandatory.into_keys());
        let budget = max_pieces.saturating_sub(pieces.len());
        let mut ranked: Vec<(String, usize)> = candidates.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        pieces.extend(ranked.into_iter().take(budget).map(|(p, _)| p));
        Vocabulary::new(pieces, UNKNOWN_PIECE).expect("unknown piece is inserted first")
    }

    /// Read a vocabulary file: one piece per line, first line is the unknown piece.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let unknown = lines
            .next()
            .ok_or(Error::Empty("vocabulary file"))?
            .to_string();
        let mut pieces = vec![unknown.clone()];
        pieces.extend(lines.filter(|l| !l.is_empty()).map(str::to_string));
        Vocabulary::new(pieces, &unknown)
    }

    /// File form: unknown piece first, then the rest in id order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.pieces[self.unknown]);
        out.push('\n');
        for (i, p) in self.pieces.iter().enumerate() {
            if i != self.unknown {
                out.push_str(p);
                out.push('\n');
            }
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    /// Id of a piece, or of the unknown piece.
    pub fn id_or_unknown(&self, piece: &str) -> usize {
        self.id(piece).unwrap_or(self.unknown)
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn unknown_piece(&self) -> &str {
        &self.pieces[self.unknown]
    }
}

/// Greedy longest-prefix segmentation of one token.
pub fn wordpiece(token: &str, vocab: &Vocabulary) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > MAX_WORD_CHARS {
        return vec![vocab.unknown_piece().to_string()];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            let sub: String = chars[start..end].iter().collect();
            let candidate = if start > 0 {
                format!("{CONTINUATION_PREFIX}{sub}")
            } else {
                sub
            };
            if vocab.contains(&candidate) {
                found = Some((candidate, end));
                break;
            }
        }
        match found {
            Some((piece, end)) => {
                pieces.push(piece);
                start = end;
            }
            None => return vec![vocab.unknown_piece().to_string()],
        }
    }
    pieces
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubToken {
    pub piece: String,
    pub parent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub tokens: Vec<Token>,
    pub subtokens: Vec<SubToken>,
}

impl TokenizedDocument {
    pub fn parents(&self) -> Vec<usize> {
        self.subtokens.iter().map(|s| s.parent).collect()
    }

    pub fn pieces(&self) -> Vec<String> {
        self.subtokens.iter().map(|s| s.piece.clone()).collect()
    }
}

pub fn tokenize_document(text: &str, vocab: &Vocabulary) -> TokenizedDocument {
    let tokens = basic_tokenize(text);
    let subtokens = tokens
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            wordpiece(&t.text, vocab)
                .into_iter()
                .map(move |piece| SubToken { piece, parent: i })
        })
        .collect();
    TokenizedDocument { tokens, subtokens }
}

/// Every sub-token inherits the label of its parent token.
pub fn propagate_labels<T: Clone>(token_labels: &[T], parents: &[usize]) -> Result<Vec<T>> {
    parents
        .iter()
        .map(|&p| {
            token_labels.get(p).cloned().ok_or(Error::OutOfRange {
                what: "parent token",
                index: p,
                size: token_labels.len(),
            })
        })
        .collect()
}

/// Majority vote of sub-token predictions per token, ties broken uniformly at
/// random by a generator seeded with `seed`. Tokens without sub-tokens get 0.
pub fn resolve_predictions(
    predictions: &[usize],
    parents: &[usize],
    num_tokens: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if predictions.len() != parents.len() {
        return Err(Error::LengthMismatch {
            what: "sub-token predictions vs parents",
            left: predictions.len(),
            right: parents.len(),
        });
    }
    let mut votes: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); num_tokens];
    for (&class, &parent) in predictions.iter().zip(parents) {
        let slot = votes.get_mut(parent).ok_or(Error::OutOfRange {
            what: "parent token",
            index: parent,
            size: num_tokens,
        })?;
        *slot.entry(class).or_default() += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(votes
        .into_iter()
        .map(|counts| {
            let Some(&best) = counts.values().max() else {
                return 0;
            };
            let tied: Vec<usize> = counts
                .into_iter()
                .filter(|&(_, n)| n == best)
                .map(|(c, _)| c)
                .collect();
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.gen_range(0..tied.len())]
            }
        })
        .collect())
}
