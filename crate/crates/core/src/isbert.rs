//! Inter-sentence context for long documents: overlapped chunks are encoded
//! in a forward sweep (each chunk's leading overlap is replaced by the
//! previous chunk's contextual output), then a backward sweep (each chunk's
//! trailing overlap is replaced by the next chunk's bidirectional output),
//! repeated over several hops with residual summation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{Graph, Var};
use crate::chunking::{
    chunk_document, shuffle_dataset, ChunkPiece, ChunkedDocument, DocumentPieces, OverlapPolicy,
    CLS, CONTINUATION, SEP,
};
use crate::corpus::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::eval::{name_prf, token_prf, PrfReport, TokenMode};
use crate::labels::{decode_spans, LabelSpace, NameSpan, TokenLabel};
use crate::nn::{
    birnn_encode, case_vector, linear_project, transformer_encode, BiLstm, Embedding, Linear, Transformer,
    TransformerConfig,
};
use crate::optim::Adam;
use crate::params::{Checkpoint, Gradients, ParamStore};
use crate::tensor::Matrix;
use crate::tokenizer::{propagate_labels, resolve_predictions, tokenize_document, Token, Vocabulary};

/// Which copy of a piece duplicated by overlap supplies its prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Ownership {
    First,
    Last,
    Average,
}

impl fmt::Display for Ownership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ownership::First => "first",
            Ownership::Last => "last",
            Ownership::Average => "average",
        })
    }
}

impl FromStr for Ownership {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Ownership::First),
            "last" => Ok(Ownership::Last),
            "average" => Ok(Ownership::Average),
            _ => Err(Error::Config(format!("unknown ownership {s:?}"))),
        }
    }
}

/// Context encoder applied to every chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EncoderKind {
    Transformer,
    BiRnn,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Transformer => "transformer",
            EncoderKind::BiRnn => "birnn",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(EncoderKind::Transformer),
            "birnn" => Ok(EncoderKind::BiRnn),
            _ => Err(Error::Config(format!("unknown encoder {s:?}"))),
        }
    }
}

/// A width-preserving chunk encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum ChunkEncoder {
    Transformer(Transformer),
    BiRnn(BiLstm),
}

impl ChunkEncoder {
    pub fn encode(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        match self {
            ChunkEncoder::Transformer(t) => Ok(transformer_encode(g, x, t)?.output),
            ChunkEncoder::BiRnn(b) => birnn_encode(g, x, b),
        }
    }
}

/// Overlap policy as configured; `Adaptive` expands to the default length
/// table for the configured capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Overlap {
    Fixed(f64),
    Adaptive,
}

impl fmt::Display for Overlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Overlap::Fixed(r) => write!(f, "fixed:{r}"),
            Overlap::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for Overlap {
    type Err = Error;

    /// `adaptive`, `fixed:<ratio>` or a bare ratio.
    fn from_str(s: &str) -> Result<Self> {
        if s == "adaptive" {
            return Ok(Overlap::Adaptive);
        }
        let ratio = s.strip_prefix("fixed:").unwrap_or(s);
        let r: f64 = ratio
            .parse()
            .map_err(|_| Error::Config(format!("bad overlap {s:?}")))?;
        OverlapPolicy::fixed(r)?;
        Ok(Overlap::Fixed(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsConfig {
    pub overlap: Overlap,
    pub encoder: EncoderKind,
    /// Content pieces per chunk, specials excluded.
    pub capacity: usize,
    pub hops: usize,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub max_pieces: usize,
    pub ownership: Ownership,
    pub lr: f64,
    pub decay: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for IsConfig {
    fn default() -> Self {
        IsConfig {
            overlap: Overlap::Fixed(0.5),
            encoder: EncoderKind::Transformer,
            capacity: 64,
            hops: 2,
            layers: 2,
            heads: 4,
            dim: 64,
            ff_dim: 128,
            max_pieces: 4000,
            ownership: Ownership::Last,
            lr: 1e-3,
            decay: 0.0,
            clip: 5.0,
            batch_size: 4,
            max_epochs: 50,
            patience: 10,
            seed: 1,
        }
    }
}

impl IsConfig {
    pub fn policy(&self) -> OverlapPolicy {
        match self.overlap {
            Overlap::Fixed(r) => OverlapPolicy::Fixed(r),
            Overlap::Adaptive => OverlapPolicy::default_adaptive(self.capacity),
        }
    }

    /// Longest chunk the encoder must accept: a lead token plus, at worst,
    /// one separator after every content piece.
    pub fn max_chunk_len(&self) -> usize {
        2 * self.capacity + 1
    }

    pub fn encoder_config(&self) -> TransformerConfig {
        TransformerConfig {
            layers: self.layers,
            heads: self.heads,
            dim: self.dim,
            ff_dim: self.ff_dim,
            max_len: self.max_chunk_len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hops == 0 {
            return bad("hops must be at least 1".into());
        }
        if self.dim <= 3 {
            return bad(format!("dim {} must exceed 3", self.dim));
        }
        match self.encoder {
            EncoderKind::Transformer if self.heads == 0 || self.dim % self.heads != 0 => {
                return bad(format!("dim {} does not divide into {} heads", self.dim, self.heads));
            }
            EncoderKind::BiRnn if self.dim % 2 != 0 => {
                return bad(format!("bidirectional encoder needs an even dim, got {}", self.dim));
            }
            _ => {}
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let policy = self.policy();
        policy.validate()?;
        let worst = match &policy {
            OverlapPolicy::Fixed(r) => *r,
            OverlapPolicy::Adaptive { ratios, .. } => ratios.iter().copied().fold(0.0, f64::max),
        };
        let k = crate::chunking::effective_overlap(worst, self.capacity);
        if self.capacity == 0 || k >= self.capacity {
            return Err(Error::CapacityTooSmall {
                capacity: self.capacity,
                overlap: k,
            });
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("model", "isbert".into());
        put("overlap", self.overlap.to_string());
        put("encoder", self.encoder.to_string());
        put("capacity", self.capacity.to_string());
        put("hops", self.hops.to_string());
        put("layers", self.layers.to_string());
        put("heads", self.heads.to_string());
        put("dim", self.dim.to_string());
        put("ff_dim", self.ff_dim.to_string());
        put("max_pieces", self.max_pieces.to_string());
        put("ownership", self.ownership.to_string());
        put("lr", self.lr.to_string());
        put("decay", self.decay.to_string());
        put("clip", self.clip.to_string());
        put("batch_size", self.batch_size.to_string());
        put("max_epochs", self.max_epochs.to_string());
        put("patience", self.patience.to_string());
        put("seed", self.seed.to_string());
        m
    }

    /// Override fields from `key = value` pairs; unknown keys are errors
    /// except `model` and `vocab`, which belong to checkpoints.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
        }
        for (k, v) in kv {
            match k.as_str() {
                "model" | "vocab" => {}
                "overlap" => self.overlap = v.parse()?,
                "encoder" => self.encoder = v.parse()?,
                "capacity" => self.capacity = num(k, v)?,
                "hops" => self.hops = num(k, v)?,
                "layers" => self.layers = num(k, v)?,
                "heads" => self.heads = num(k, v)?,
                "dim" => self.dim = num(k, v)?,
                "ff_dim" => self.ff_dim = num(k, v)?,
                "max_pieces" => self.max_pieces = num(k, v)?,
                "ownership" => self.ownership = v.parse()?,
                "lr" => self.lr = num(k, v)?,
                "decay" => self.decay = num(k, v)?,
                "clip" => self.clip = num(k, v)?,
                "batch_size" => self.batch_size = num(k, v)?,
                "max_epochs" => self.max_epochs = num(k, v)?,
                "patience" => self.patience = num(k, v)?,
                "seed" => self.seed = num(k, v)?,
                _ => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        Ok(())
    }
}

/// The per-chunk embedding blocks of one hop.
#[derive(Debug, Clone)]
pub struct HopState {
    pub hop: usize,
    pub blocks: Vec<Var>,
}

fn check_overlap(chunks: &ChunkedDocument) -> Result<usize> {
    let k = chunks.effective_k;
    for (i, c) in chunks.chunks.iter().enumerate().skip(1) {
        if c.overlap_prev != k {
            return Err(Error::MalformedChunk {
                chunk: i,
                detail: format!("overlap {} but effective k is {k}", c.overlap_prev),
            });
        }
    }
    Ok(k)
}

fn check_blocks(g: &Graph<'_>, blocks: &[Var], chunks: &ChunkedDocument) -> Result<()> {
    if blocks.len() != chunks.chunks.len() {
        return Err(Error::LengthMismatch {
            what: "blocks vs chunks",
            left: blocks.len(),
            right: chunks.chunks.len(),
        });
    }
    for (i, (&b, c)) in blocks.iter().zip(&chunks.chunks).enumerate() {
        if g.shape(b).0 != c.len() {
            return Err(Error::shape(
                "inter-sentence block",
                format!("chunk {i} has {} pieces but block has {} rows", c.len(), g.shape(b).0),
            ));
        }
    }
    Ok(())
}

/// Sequential left-to-right sweep: chunk `i`'s first `k` content positions
/// are replaced by the last `k` content positions of the previous output.
pub fn forward_pass(g: &mut Graph<'_>, blocks: &[Var], chunks: &ChunkedDocument, enc: &ChunkEncoder) -> Result<Vec<Var>> {
    check_blocks(g, blocks, chunks)?;
    let k = check_overlap(chunks)?;
    let mut out: Vec<Var> = Vec::with_capacity(blocks.len());
    for (i, &w) in blocks.iter().enumerate() {
        let input = match out.last() {
            Some(&prev) if k > 0 => {
                let prev_pos = chunks.chunks[i - 1].content_positions();
                let cur_pos = chunks.chunks[i].content_positions();
                g.replace_rows(w, &cur_pos[..k], prev, &prev_pos[prev_pos.len() - k..])
            }
            _ => w,
        };
        out.push(enc.encode(g, input)?);
    }
    Ok(out)
}

/// Right-to-left sweep over forward outputs. The last block is kept; every
/// earlier block has its last `k` content positions replaced by the first `k`
/// of the freshly re-encoded successor, then is re-encoded.
pub fn backward_pass(g: &mut Graph<'_>, forward: &[Var], chunks: &ChunkedDocument, enc: &ChunkEncoder) -> Result<Vec<Var>> {
    check_blocks(g, forward, chunks)?;
    let k = check_overlap(chunks)?;
    let m = forward.len();
    let mut out = forward.to_vec();
    for i in (0..m.saturating_sub(1)).rev() {
        let input = if k > 0 {
            let cur_pos = chunks.chunks[i].content_positions();
            let next_pos = chunks.chunks[i + 1].content_positions();
            g.replace_rows(forward[i], &cur_pos[cur_pos.len() - k..], out[i + 1], &next_pos[..k])
        } else {
            forward[i]
        };
        out[i] = enc.encode(g, input)?;
    }
    Ok(out)
}

/// `hops` rounds of forward then backward sweeps. Hop 1 reads the
/// context-independent blocks; hop `t + 1` reads the sum of the outputs of
/// hops `t` and `t - 1`, the input blocks standing in for hop 0.
pub fn multi_hop(
    g: &mut Graph<'_>,
    blocks: &[Var],
    chunks: &ChunkedDocument,
    enc: &ChunkEncoder,
    hops: usize,
) -> Result<HopState> {
    if hops == 0 {
        return Err(Error::Config("hops must be at least 1".into()));
    }
    check_blocks(g, blocks, chunks)?;
    let mut before = blocks.to_vec();
    let mut input = blocks.to_vec();
    let mut output = Vec::new();
    for hop in 1..=hops {
        let fwd = forward_pass(g, &input, chunks, enc)?;
        output = backward_pass(g, &fwd, chunks, enc)?;
        for (o, i) in output.iter().zip(&input) {
            if g.shape(*o) != g.shape(*i) {
                return Err(Error::shape("multi_hop", format!("hop {hop} changed a block shape")));
            }
        }
        if hop < hops {
            input = output.iter().zip(&before).map(|(&a, &b)| g.add(a, b)).collect();
            before = output.clone();
        }
    }
    Ok(HopState { hop: hops, blocks: output })
}

/// A document tokenized and mapped onto sub-word pieces.
#[derive(Debug, Clone)]
pub struct PreparedDocument {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    pub parents: Vec<usize>,
    pub pieces: DocumentPieces,
    /// Letter-case features of each piece's parent token.
    pub piece_cases: Vec<[f64; 3]>,
    pub gold: Option<Vec<TokenLabel>>,
}

impl PreparedDocument {
    pub fn from_text(doc_id: &str, text: &str, vocab: &Vocabulary) -> Self {
        let tokenized = tokenize_document(text, vocab);
        let pieces = DocumentPieces::from_tokenized(doc_id, text, &tokenized);
        let parents = tokenized.parents();
        let piece_cases = parents.iter().map(|&p| case_vector(&tokenized.tokens[p].text)).collect();
        PreparedDocument {
            doc_id: doc_id.to_string(),
            tokens: tokenized.tokens,
            parents,
            pieces,
            piece_cases,
            gold: None,
        }
    }

    pub fn from_annotated(doc: &AnnotatedDocument, vocab: &Vocabulary) -> Result<Self> {
        let (_, labels) = doc.token_labels()?;
        let mut p = Self::from_text(&doc.doc_id, &doc.text, vocab);
        p.gold = Some(labels);
        Ok(p)
    }
}

#[derive(Debug, Clone)]
pub struct DocumentPrediction {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    pub labels: Vec<TokenLabel>,
    pub spans: Vec<NameSpan>,
}

#[derive(Debug, Clone)]
pub struct IsBertModel {
    pub config: IsConfig,
    pub vocab: Vocabulary,
    pub space: LabelSpace,
    pub params: ParamStore,
    pub embedding: Embedding,
    pub encoder: ChunkEncoder,
    pub classifier: Linear,
}

impl IsBertModel {
    /// Piece embeddings of width `dim - 3` are concatenated with the parent
    /// token's three case features.
    pub fn new(config: IsConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        for s in [CLS, CONTINUATION, SEP] {
            if !vocab.contains(s) {
                return Err(Error::Config(format!("vocabulary lacks special piece {s}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let space = LabelSpace::fused();
        let embedding = Embedding::new(&mut params, "embed", vocab.len(), config.dim - 3, &mut rng);
        let encoder = match config.encoder {
            EncoderKind::Transformer => {
                ChunkEncoder::Transformer(Transformer::new(&mut params, "encoder", config.encoder_config(), &mut rng)?)
            }
            EncoderKind::BiRnn => ChunkEncoder::BiRnn(BiLstm::new(&mut params, "encoder", config.dim, config.dim / 2, &mut rng)),
        };
        let classifier = Linear::new(&mut params, "classifier", config.dim, space.len(), &mut rng);
        Ok(IsBertModel {
            config,
            vocab,
            space,
            params,
            embedding,
            encoder,
            classifier,
        })
    }

    /// Sub-word vocabulary over the training texts, with the chunk specials reserved.
    pub fn build_vocab(docs: &[AnnotatedDocument], max_pieces: usize) -> Vocabulary {
        let tokens: Vec<Vec<Token>> = docs.iter().map(AnnotatedDocument::tokens).collect();
        Vocabulary::build(
            tokens.iter().flatten().map(|t| t.text.as_str()),
            max_pieces,
            &[CLS, CONTINUATION, SEP],
        )
    }

    pub fn chunk(&self, doc: &PreparedDocument) -> Result<ChunkedDocument> {
        chunk_document(&doc.pieces, self.config.capacity, &self.config.policy())
    }

    fn chunk_inputs(&self, doc: &PreparedDocument, chunks: &ChunkedDocument) -> Vec<(Vec<usize>, Matrix)> {
        chunks
            .chunks
            .iter()
            .map(|c| {
                let mut ids = Vec::with_capacity(c.len());
                let mut cases = Matrix::zeros(c.len(), 3);
                let mut doc_idx = c.content_range.0;
                for (row, piece) in c.pieces.iter().enumerate() {
                    match piece {
                        ChunkPiece::Special(s) => ids.push(self.vocab.id_or_unknown(s.as_str())),
                        ChunkPiece::Content(p) => {
                            ids.push(self.vocab.id_or_unknown(p));
                            cases.row_mut(row).copy_from_slice(&doc.piece_cases[doc_idx]);
                            doc_idx += 1;
                        }
                    }
                }
                (ids, cases)
            })
            .collect()
    }

    /// Context-independent blocks as graph nodes.
    pub fn embed_blocks(&self, g: &mut Graph<'_>, doc: &PreparedDocument, chunks: &ChunkedDocument) -> Result<Vec<Var>> {
        self.chunk_inputs(doc, chunks)
            .into_iter()
            .map(|(ids, cases)| self.embedding.embed(g, &ids, &cases))
            .collect()
    }

    /// Context-independent blocks as plain matrices.
    pub fn input_blocks(&self, doc: &PreparedDocument, chunks: &ChunkedDocument) -> Result<Vec<Matrix>> {
        let mut g = Graph::new(&self.params);
        let vars = self.embed_blocks(&mut g, doc, chunks)?;
        Ok(vars.into_iter().map(|v| g.value(v).clone()).collect())
    }

    /// Final blocks for given input blocks, e.g. perturbed ones.
    pub fn contextual_blocks(&self, chunks: &ChunkedDocument, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        let mut g = Graph::new(&self.params);
        let vars: Vec<Var> = inputs.iter().map(|m| g.constant(m.clone())).collect();
        let state = multi_hop(&mut g, &vars, chunks, &self.encoder, self.config.hops)?;
        Ok(state.blocks.into_iter().map(|v| g.value(v).clone()).collect())
    }

    /// Per-chunk class logits.
    pub fn chunk_logits(&self, g: &mut Graph<'_>, doc: &PreparedDocument, chunks: &ChunkedDocument) -> Result<Vec<Var>> {
        let blocks = self.embed_blocks(g, doc, chunks)?;
        let state = multi_hop(g, &blocks, chunks, &self.encoder, self.config.hops)?;
        state.blocks.into_iter().map(|b| linear_project(g, b, &self.classifier)).collect()
    }

    /// Summed cross-entropy over every content position of every chunk;
    /// special pieces carry no target.
    pub fn loss(&self, g: &mut Graph<'_>, doc: &PreparedDocument, chunks: &ChunkedDocument) -> Result<Var> {
        let gold = doc.gold.as_ref().ok_or(Error::MissingGold("document labels"))?;
        let classes: Vec<usize> = gold.iter().map(|l| self.space.encode(l)).collect();
        let piece_gold = propagate_labels(&classes, &doc.parents)?;
        let logits = self.chunk_logits(g, doc, chunks)?;
        let mut total: Option<Var> = None;
        for (c, &l) in chunks.chunks.iter().zip(&logits) {
            let mut doc_idx = c.content_range.0;
            let targets: Vec<Option<usize>> = c
                .pieces
                .iter()
                .map(|p| {
                    if p.is_special() {
                        None
                    } else {
                        doc_idx += 1;
                        Some(piece_gold[doc_idx - 1])
                    }
                })
                .collect();
            let ce = g.cross_entropy(l, &targets);
            total = Some(match total {
                Some(t) => g.add(t, ce),
                None => ce,
            });
        }
        total.ok_or(Error::Empty("document without chunks"))
    }

    /// One logit row per document piece, resolving overlap duplicates by ownership.
    pub fn piece_logits(&self, doc: &PreparedDocument, chunks: &ChunkedDocument) -> Result<Matrix> {
        let mut g = Graph::new(&self.params);
        let logits = self.chunk_logits(&mut g, doc, chunks)?;
        let c = self.space.len();
        let n = doc.pieces.len();
        let mut out = Matrix::zeros(n, c);
        let mut copies = vec![0usize; n];
        for (chunk, &l) in chunks.chunks.iter().zip(&logits) {
            let values = g.value(l);
            for (j, pos) in chunk.content_positions().into_iter().enumerate() {
                let idx = chunk.content_range.0 + j;
                let take = match self.config.ownership {
                    Ownership::First => copies[idx] == 0,
                    Ownership::Last | Ownership::Average => true,
                };
                if take {
                    let row = out.row_mut(idx);
                    if self.config.ownership == Ownership::Average {
                        row.iter_mut().zip(values.row(pos)).for_each(|(a, b)| *a += b);
                    } else {
                        row.copy_from_slice(values.row(pos));
                    }
                }
                copies[idx] += 1;
            }
        }
        if self.config.ownership == Ownership::Average {
            for (i, &k) in copies.iter().enumerate() {
                if k > 1 {
                    out.row_mut(i).iter_mut().for_each(|v| *v /= k as f64);
                }
            }
        }
        Ok(out)
    }

    pub fn predict_prepared(&self, doc: &PreparedDocument) -> Result<DocumentPrediction> {
        let labels = if doc.pieces.is_empty() {
            vec![TokenLabel::Outside; doc.tokens.len()]
        } else {
            let chunks = self.chunk(doc)?;
            let logits = self.piece_logits(doc, &chunks)?;
            let piece_classes: Vec<usize> = (0..logits.rows()).map(|r| logits.argmax_row(r)).collect();
            let token_classes = resolve_predictions(&piece_classes, &doc.parents, doc.tokens.len(), self.config.seed)?;
            token_classes
                .into_iter()
                .map(|c| self.space.token_label(c).unwrap_or(TokenLabel::Outside))
                .collect()
        };
        Ok(DocumentPrediction {
            doc_id: doc.doc_id.clone(),
            tokens: doc.tokens.clone(),
            spans: decode_spans(&labels),
            labels,
        })
    }

    pub fn predict_document(&self, doc_id: &str, text: &str) -> Result<DocumentPrediction> {
        self.predict_prepared(&PreparedDocument::from_text(doc_id, text, &self.vocab))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut header = self.config.to_key_values();
        let pieces: Vec<&str> = (0..self.vocab.len()).filter_map(|i| self.vocab.piece(i)).collect();
        header.insert("vocab".into(), pieces.join(" "));
        header.insert("unknown_piece".into(), self.vocab.unknown_piece().to_string());
        Checkpoint {
            header,
            params: self.params.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.header.get("model").map(String::as_str) != Some("isbert") {
            return Err(Error::Checkpoint("not an isbert checkpoint".into()));
        }
        let mut header = ckpt.header.clone();
        let vocab_line = header.remove("vocab").ok_or_else(|| Error::Checkpoint("missing vocab".into()))?;
        let unknown = header
            .remove("unknown_piece")
            .ok_or_else(|| Error::Checkpoint("missing unknown_piece".into()))?;
        let vocab = Vocabulary::new(vocab_line.split(' ').map(str::to_string).collect(), &unknown)?;
        let mut config = IsConfig::default();
        config.apply(&header)?;
        let mut model = IsBertModel::new(config, vocab)?;
        model.params.load_values(&ckpt.params)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Debug, Clone, Default)]
pub struct IsEvaluation {
    pub token: PrfReport,
    pub name: PrfReport,
    /// Per-token exact-label correctness, pooled in document order.
    pub decisions: Vec<bool>,
}

pub fn evaluate_documents(model: &IsBertModel, docs: &[PreparedDocument]) -> Result<IsEvaluation> {
    let mut out = IsEvaluation::default();
    for doc in docs {
        let gold = doc.gold.as_ref().ok_or(Error::MissingGold("document labels"))?;
        let pred = model.predict_prepared(doc)?;
        out.token = out.token.merge(&token_prf(&pred.labels, gold, TokenMode::SpanOnly)?);
        out.name = out.name.merge(&name_prf(&pred.spans, &decode_spans(gold), false));
        out.decisions.extend(pred.labels.iter().zip(gold).map(|(a, b)| a == b));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsEpochLog {
    pub epoch: usize,
    /// Mean training loss per content piece.
    pub loss: f64,
    pub dev_token_f1: f64,
    pub dev_name_f1: f64,
}

#[derive(Debug, Clone)]
pub struct IsTrainOutcome {
    pub model: IsBertModel,
    pub log: Vec<IsEpochLog>,
    pub best_epoch: usize,
}

/// Adam over document mini-batches, documents reshuffled every epoch, early
/// stopping on development name-level F1 (token-level F1 breaks ties). Returns the best checkpoint.
pub fn train_isbert(train: &[AnnotatedDocument], dev: &[AnnotatedDocument], config: IsConfig) -> Result<IsTrainOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("development split"));
    }
    let vocab = IsBertModel::build_vocab(train, config.max_pieces);
    let mut model = IsBertModel::new(config.clone(), vocab)?;
    let prepare = |docs: &[AnnotatedDocument], model: &IsBertModel| -> Result<Vec<PreparedDocument>> {
        docs.iter()
            .map(|d| PreparedDocument::from_annotated(d, &model.vocab))
            .filter(|d| d.as_ref().map_or(true, |d| !d.pieces.is_empty()))
            .collect()
    };
    let train_docs = prepare(train, &model)?;
    let dev_docs = prepare(dev, &model)?;
    let train_chunks: Vec<ChunkedDocument> = train_docs.iter().map(|d| model.chunk(d)).collect::<Result<_>>()?;
    let total_pieces: usize = train_chunks
        .iter()
        .flat_map(|c| &c.chunks)
        .map(|c| c.content_len())
        .sum();

    let mut opt = Adam::new(config.lr, config.decay).with_clip(config.clip);
    let mut log = Vec::new();
    let mut best = ((f64::NEG_INFINITY, f64::NEG_INFINITY), 0usize, model.params.clone());
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let order = shuffle_dataset((0..train_docs.len()).collect(), config.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::new(model.params.len());
            for &i in batch {
                let step = {
                    let mut g = Graph::new(&model.params);
                    let loss = model.loss(&mut g, &train_docs[i], &train_chunks[i])?;
                    epoch_loss += g.value(loss).scalar();
                    g.backward(loss)
                };
                grads.merge(&step);
            }
            opt.step(&mut model.params, &mut grads);
        }
        opt.decay_epoch();
        let eval = evaluate_documents(&model, &dev_docs)?;
        log.push(IsEpochLog {
            epoch,
            loss: epoch_loss / total_pieces.max(1) as f64,
            dev_token_f1: eval.token.f1,
            dev_name_f1: eval.name.f1,
        });
        let score = (eval.name.f1, eval.token.f1);
        if score > best.0 {
            best = (score, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (_, best_epoch, params) = best;
    model.params = params;
    Ok(IsTrainOutcome { model, log, best_epoch })
}
