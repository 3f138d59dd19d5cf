//! Seeded synthetic corpus of homepage-like documents.
//!
//! A document is a sequence of blocks. Prose blocks mention people next to
//! strong cues ("Dr X is a Professor at Y ."). List blocks are a heading
//! line followed by one entry per line; person entries and organisation
//! entries are drawn from the same syllable generator, so an entry such as
//! "Karo Belin" is a person only because of its heading or because the same
//! person is mentioned elsewhere in the document.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotatedDocument, AnnotationRecord};
use crate::labels::{span_position, Fi, Fml, TokenLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_docs: usize,
    /// Each document grows until it has at least a length drawn from this
    /// inclusive range, in word tokens.
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Probability that a mention reuses a person already in the document.
    pub repetition_rate: f64,
    /// Probability that a block is prose rather than a list or citation.
    pub context_richness: f64,
    /// Share of the remaining blocks that are publication-style citations.
    pub citation_rate: f64,
    /// Entries per list block, inclusive range.
    pub list_min: usize,
    pub list_max: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            num_docs: 20,
            min_tokens: 60,
            max_tokens: 160,
            repetition_rate: 0.4,
            context_richness: 0.4,
            citation_rate: 0.3,
            list_min: 4,
            list_max: 10,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "ro", "be", "lin", "ta", "vo", "mi", "rel", "sa", "run", "kel", "do", "na", "ve", "li",
    "to", "ma", "ri", "en", "zu", "pa", "go", "shi", "fe", "lo", "dan", "te", "mor",
];
const PARTICLES: &[&str] = &["van", "de", "von"];
const PERSON_HEADINGS: &[&str] = &["Students", "Members", "Coauthors", "Alumni", "Collaborators"];
const TITLE_WORDS: &[&str] = &[
    "Learning", "Neural", "Graph", "Models", "Deep", "Recognition", "Names", "Fast", "Robust", "Networks",
    "Towards", "Efficient", "Search", "Data", "Queries", "Mining", "Text", "Analysis", "Systems", "Scalable",
];
const ORG_HEADINGS: &[&str] = &["Partners", "Sponsors", "Venues", "Visits", "Projects"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Person {
    first: String,
    middle: Option<String>,
    particle: Option<String>,
    last: String,
}

/// A rendered mention: tokens and per-token labels (None for non-name tokens).
type Mention = Vec<(String, Option<(Fml, Fi)>)>;

fn initial(word: &str) -> String {
    format!("{}.", word.chars().next().expect("non-empty word"))
}

impl Person {
    fn last_tokens(&self) -> Vec<(String, Option<(Fml, Fi)>)> {
        let mut out = Vec::new();
        if let Some(p) = &self.particle {
            out.push((p.clone(), Some((Fml::Last, Fi::Full))));
        }
        out.push((self.last.clone(), Some((Fml::Last, Fi::Full))));
        out
    }

    fn full(&self) -> Mention {
        let mut out = vec![(self.first.clone(), Some((Fml::First, Fi::Full)))];
        if let Some(m) = &self.middle {
            out.push((initial(m), Some((Fml::Middle, Fi::Initial))));
        }
        out.extend(self.last_tokens());
        out
    }

    fn initial_first(&self) -> Mention {
        let mut out = vec![(initial(&self.first), Some((Fml::First, Fi::Initial)))];
        out.extend(self.last_tokens());
        out
    }

    fn list_style(&self) -> Mention {
        let mut out = self.last_tokens();
        out.push((initial(&self.first), Some((Fml::First, Fi::Initial))));
        out
    }
}

struct DocBuilder<'r> {
    rng: &'r mut ChaCha8Rng,
    text: String,
    records: BTreeMap<(String, Vec<String>), (usize, Vec<usize>)>,
    chars: usize,
    tokens: usize,
    used_words: HashSet<String>,
    people: Vec<Person>,
    mentioned: HashSet<String>,
    repetition: f64,
}

impl<'r> DocBuilder<'r> {
    fn word(&mut self) -> String {
        loop {
            let n = if self.rng.gen_bool(0.7) { 2 } else { 3 };
            let mut w: String = (0..n).map(|_| *SYLLABLES.choose(self.rng).expect("syllables")).collect();
            w[..1].make_ascii_uppercase();
            if self.used_words.insert(w.clone()) {
                return w;
            }
        }
    }

    fn new_person(&mut self) -> Person {
        let first = self.word();
        let middle = self.rng.gen_bool(0.2).then(|| self.word());
        let particle = self
            .rng
            .gen_bool(0.1)
            .then(|| PARTICLES.choose(self.rng).expect("particles").to_string());
        let last = self.word();
        let p = Person {
            first,
            middle,
            particle,
            last,
        };
        self.people.push(p.clone());
        p
    }

    fn person(&mut self) -> Person {
        if !self.people.is_empty() && self.rng.gen_bool(self.repetition) {
            self.people.choose(self.rng).expect("people").clone()
        } else {
            self.new_person()
        }
    }

    /// Person mention whose surface string is new to the document unless
    /// repetition was chosen.
    fn person_mention(&mut self, list: bool) -> Mention {
        loop {
            let p = self.person();
            let r: f64 = self.rng.gen();
            let m = if list {
                if r < 0.5 {
                    p.full()
                } else if r < 0.75 {
                    p.list_style()
                } else {
                    p.initial_first()
                }
            } else if r < 0.8 {
                p.full()
            } else {
                p.initial_first()
            };
            let key = mention_text(&m);
            if self.repetition > 0.0 || self.mentioned.insert(key) {
                return m;
            }
        }
    }

    fn org(&mut self) -> Mention {
        let n = if self.rng.gen_bool(0.7) { 2 } else { 1 };
        (0..n).map(|_| (self.word(), None)).collect()
    }

    fn push_raw(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    fn push_words(&mut self, words: &[&str]) {
        for w in words {
            self.push_token(w);
        }
    }

    fn push_token(&mut self, w: &str) {
        if !self.text.is_empty() && !self.text.ends_with(['\n', ' ']) {
            self.push_raw(" ");
        }
        self.push_raw(w);
        self.tokens += 1;
    }

    fn push_mention(&mut self, m: &Mention) {
        let name_tokens: Vec<(usize, &str, (Fml, Fi))> = m
            .iter()
            .enumerate()
            .filter_map(|(i, (t, l))| l.map(|l| (i, t.as_str(), l)))
            .collect();
        if name_tokens.is_empty() {
            let words: Vec<&str> = m.iter().map(|(t, _)| t.as_str()).collect();
            self.push_words(&words);
            return;
        }
        if !self.text.is_empty() && !self.text.ends_with(['\n', ' ']) {
            self.push_raw(" ");
        }
        let start = self.chars;
        let n = name_tokens.len();
        let labels: Vec<String> = name_tokens
            .iter()
            .enumerate()
            .map(|(i, &(_, _, (fml, fi)))| TokenLabel::name(span_position(i, n), fml, fi).to_string())
            .collect();
        let text = mention_text(m);
        self.push_raw(&text);
        self.tokens += n;
        let order = self.records.len();
        self.records
            .entry((text, labels))
            .or_insert_with(|| (order, Vec::new()))
            .1
            .push(start);
    }

    fn prose(&mut self) {
        let sentences = self.rng.gen_range(1..=2);
        for _ in 0..sentences {
            let p = self.person_mention(false);
            let o = self.org();
            let year = self.rng.gen_range(1990..2024).to_string();
            match self.rng.gen_range(0..6) {
                0 => {
                    self.push_token("Dr");
                    self.push_mention(&p);
                    self.push_words(&["is", "a", "Professor", "at"]);
                    self.push_mention(&o);
                }
                1 => {
                    self.push_mention(&p);
                    self.push_words(&["received", "the", "PhD", "degree", "from"]);
                    self.push_mention(&o);
                    self.push_words(&["in", &year]);
                }
                2 => {
                    self.push_token("Prof.");
                    self.push_mention(&p);
                    self.push_words(&["leads", "a", "group", "at"]);
                    self.push_mention(&o);
                }
                3 => {
                    self.push_words(&["We", "welcome"]);
                    self.push_mention(&p);
                    self.push_words(&["who", "joined", "us", "from"]);
                    self.push_mention(&o);
                }
                4 => {
                    let q = self.person_mention(false);
                    self.push_mention(&p);
                    self.push_words(&["and"]);
                    self.push_mention(&q);
                    self.push_words(&["wrote", "a", "paper", "at"]);
                    self.push_mention(&o);
                }
                _ => {
                    self.push_words(&["Our", "colleague"]);
                    self.push_mention(&p);
                    self.push_words(&["visited"]);
                    self.push_mention(&o);
                    self.push_words(&["in", &year]);
                }
            }
            self.push_token(".");
            self.push_raw("\n");
        }
        self.push_raw("\n");
    }

    fn list(&mut self, min: usize, max: usize) {
        let people = self.rng.gen_bool(0.5);
        let heading = if people {
            *PERSON_HEADINGS.choose(self.rng).expect("headings")
        } else {
            *ORG_HEADINGS.choose(self.rng).expect("headings")
        };
        self.push_words(&[heading, ":"]);
        self.push_raw("\n\n");
        let entries = self.rng.gen_range(min..=max);
        for _ in 0..entries {
            let m = if people {
                self.person_mention(true)
            } else {
                self.org()
            };
            self.push_mention(&m);
            self.push_raw("\n\n");
        }
    }
}

impl DocBuilder<'_> {
    /// `Last F. , Last F. and Last F. ( year ) . Title words . In Proceedings of Org .`
    fn citation(&mut self) {
        let authors = self.rng.gen_range(1..=4);
        for a in 0..authors {
            if a > 0 {
                self.push_token(if a + 1 == authors { "and" } else { "," });
            }
            let p = self.person();
            let m = if self.rng.gen_bool(0.7) { p.list_style() } else { p.initial_first() };
            self.push_mention(&m);
        }
        let year = self.rng.gen_range(1990..2024).to_string();
        self.push_words(&["(", &year, ")", "."]);
        let title = self.rng.gen_range(3..=6);
        let words: Vec<&str> = (0..title).map(|_| *TITLE_WORDS.choose(self.rng).expect("titles")).collect();
        self.push_words(&words);
        self.push_words(&[".", "In", "Proceedings", "of"]);
        let venue = self.org();
        self.push_mention(&venue);
        self.push_token(".");
        self.push_raw("\n\n");
    }
}

fn mention_text(m: &Mention) -> String {
    m.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>().join(" ")
}

/// Generate `params.num_docs` documents with gold annotations; deterministic in `seed`.
pub fn synth_generate(seed: u64, params: &SynthParams) -> Vec<AnnotatedDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..params.num_docs)
        .map(|i| {
            let target = rng.gen_range(params.min_tokens..=params.max_tokens.max(params.min_tokens));
            let mut b = DocBuilder {
                rng: &mut rng,
                text: String::new(),
                records: BTreeMap::new(),
                chars: 0,
                tokens: 0,
                used_words: HashSet::new(),
                people: Vec::new(),
                mentioned: HashSet::new(),
                repetition: params.repetition_rate.clamp(0.0, 1.0),
            };
            while b.tokens < target {
                if b.rng.gen_bool(params.context_richness.clamp(0.0, 1.0)) {
                    b.prose();
                } else if b.rng.gen_bool(params.citation_rate.clamp(0.0, 1.0)) {
                    b.citation();
                } else {
                    b.list(params.list_min, params.list_max.max(params.list_min));
                }
            }
            let mut records: Vec<(usize, AnnotationRecord)> = b
                .records
                .into_iter()
                .map(|((text, labels), (order, positions))| {
                    (
                        order,
                        AnnotationRecord {
                            text,
                            positions,
                            labels,
                            comment: None,
                        },
                    )
                })
                .collect();
            records.sort_by_key(|(o, _)| *o);
            AnnotatedDocument {
                doc_id: format!("doc{i:04}"),
                text: b.text.trim_end().to_string() + "\n",
                records: records.into_iter().map(|(_, r)| r).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let p = SynthParams {
            num_docs: 5,
            ..SynthParams::default()
        };
        let a = synth_generate(7, &p);
        assert_eq!(a, synth_generate(7, &p));
        for d in &a {
            d.validate().unwrap();
            assert!(!d.records.is_empty());
        }
    }

    #[test]
    fn no_repetition_means_unique_strings() {
        let p = SynthParams {
            num_docs: 10,
            repetition_rate: 0.0,
            ..SynthParams::default()
        };
        for d in synth_generate(3, &p) {
            for r in &d.records {
                assert_eq!(r.positions.len(), 1, "{} repeated", r.text);
            }
        }
    }
}
