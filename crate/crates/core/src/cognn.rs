//! Co-guided sequence labeler: a name-token network over BIE tags and a
//! name-form network over FML or FI tags, coupled through co-attention and
//! gated fusion, each with its own CRF head.
//!
//! With [`Architecture::Single`] the same code trains a plain BiLSTM-CRF over
//! the span axis, which serves as the no-fusion baseline.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Graph;
use crate::chunking::split_sentences;
use crate::corpus::{is_initial, AnnotatedDocument};
use crate::crf;
use crate::error::{Error, Result};
use crate::eval::{name_prf, token_prf, PrfReport, TokenMode};
use crate::labels::{decode_spans, positional_forms, Axis, AxisTag, Fi, LabelSpace, NameSpan, TokenLabel};
use crate::nn::{
    birnn_encode, case_matrix, coattention, dropout, gated_fusion, AttentionSharing, BiLstm, CoAttention,
    Embedding, GatedFusion, Linear,
};
use crate::optim::Sgd;
use crate::params::{parse_key_values, Checkpoint, Gradients, ParamId, ParamStore};
use crate::tensor::Matrix;

pub const UNKNOWN_WORD: &str = "<unk>";

/// A sentence with gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceExample {
    pub words: Vec<String>,
    pub labels: Vec<TokenLabel>,
}

/// Split annotated documents into labeled sentences.
pub fn sentences_from_docs(docs: &[AnnotatedDocument]) -> Result<Vec<SentenceExample>> {
    let mut out = Vec::new();
    for d in docs {
        let (tokens, labels) = d.token_labels()?;
        for range in split_sentences(&d.text, &tokens) {
            out.push(SentenceExample {
                words: tokens[range.clone()].iter().map(|t| t.text.clone()).collect(),
                labels: labels[range].to_vec(),
            });
        }
    }
    Ok(out)
}

/// Lowercased word vocabulary; index 0 is the unknown word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordVocab {
    /// Words seen at least `min_count` times.
    pub fn build(sentences: &[SentenceExample], min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in sentences {
            for w in &s.words {
                *counts.entry(w.to_lowercase()).or_default() += 1;
            }
        }
        let words = std::iter::once(UNKNOWN_WORD.to_string())
            .chain(counts.into_iter().filter(|&(_, c)| c >= min_count).map(|(w, _)| w))
            .collect();
        Self::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        WordVocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// Two coupled networks (in-network fusion).
    CoGuided,
    /// One BiLSTM-CRF over the span axis.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CogNNConfig {
    pub architecture: Architecture,
    pub form_axis: Axis,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Co-attention projection width; defaults to the BiLSTM output width.
    pub attention_dim: Option<usize>,
    pub sharing: AttentionSharing,
    pub dropout: f64,
    pub lr: f64,
    pub decay: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_word_count: usize,
    pub seed: u64,
}

impl Default for CogNNConfig {
    fn default() -> Self {
        CogNNConfig {
            architecture: Architecture::CoGuided,
            form_axis: Axis::Fml,
            embed_dim: 50,
            hidden: 100,
            attention_dim: None,
            sharing: AttentionSharing::Shared,
            dropout: 0.5,
            lr: 0.01,
            decay: 0.05,
            clip: 5.0,
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            min_word_count: 2,
            seed: 1,
        }
    }
}

impl CogNNConfig {
    pub fn to_key_values(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let arch = match self.architecture {
            Architecture::CoGuided => "co-guided",
            Architecture::Single => "single",
        };
        let sharing = match self.sharing {
            AttentionSharing::Shared => "shared",
            AttentionSharing::Separate => "separate",
        };
        m.insert("model".into(), "cognn".into());
        m.insert("architecture".into(), arch.into());
        m.insert("form_axis".into(), self.form_axis.to_string());
        m.insert("embed_dim".into(), self.embed_dim.to_string());
        m.insert("hidden".into(), self.hidden.to_string());
        if let Some(k) = self.attention_dim {
            m.insert("attention_dim".into(), k.to_string());
        }
        m.insert("sharing".into(), sharing.into());
        m.insert("dropout".into(), self.dropout.to_string());
        m.insert("lr".into(), self.lr.to_string());
        m.insert("decay".into(), self.decay.to_string());
        m.insert("clip".into(), self.clip.to_string());
        m.insert("batch_size".into(), self.batch_size.to_string());
        m.insert("max_epochs".into(), self.max_epochs.to_string());
        m.insert("patience".into(), self.patience.to_string());
        m.insert("min_word_count".into(), self.min_word_count.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m
    }

    /// Apply `key = value` overrides on top of `self`. Unknown keys are errors.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
        }
        for (k, v) in kv {
            match k.as_str() {
                "model" | "vocab" => {}
                "architecture" => {
                    self.architecture = match v.as_str() {
                        "co-guided" => Architecture::CoGuided,
                        "single" => Architecture::Single,
                        _ => return Err(Error::Config(format!("architecture: {v:?}"))),
                    }
                }
                "form_axis" => self.form_axis = v.parse()?,
                "embed_dim" => self.embed_dim = num(k, v)?,
                "hidden" => self.hidden = num(k, v)?,
                "attention_dim" => self.attention_dim = Some(num(k, v)?),
                "sharing" => {
                    self.sharing = match v.as_str() {
                        "shared" => AttentionSharing::Shared,
                        "separate" => AttentionSharing::Separate,
                        _ => return Err(Error::Config(format!("sharing: {v:?}"))),
                    }
                }
                "dropout" => self.dropout = num(k, v)?,
                "lr" => self.lr = num(k, v)?,
                "decay" => self.decay = num(k, v)?,
                "clip" => self.clip = num(k, v)?,
                "batch_size" => self.batch_size = num(k, v)?,
                "max_epochs" => self.max_epochs = num(k, v)?,
                "patience" => self.patience = num(k, v)?,
                "min_word_count" => self.min_word_count = num(k, v)?,
                "seed" => self.seed = num(k, v)?,
                _ => return Err(Error::Config(format!("unknown key {k:?}"))),
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.form_axis == Axis::Bie {
            return Err(Error::Config("the form network labels FML or FI".into()));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrfHead {
    pub emission: Linear,
    pub transitions: ParamId,
}

impl CrfHead {
    fn new(store: &mut ParamStore, name: &str, d: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        CrfHead {
            emission: Linear::new(store, &format!("{name}.emission"), d, classes, rng),
            transitions: store.add(format!("{name}.transitions"), Matrix::zeros(classes + 2, classes + 2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Network {
    embedding: Embedding,
    encoder: BiLstm,
    fusion: Option<GatedFusion>,
    head: CrfHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CogNNModel {
    pub config: CogNNConfig,
    pub vocab: WordVocab,
    pub params: ParamStore,
    span_space: LabelSpace,
    form_space: LabelSpace,
    span_net: Network,
    form_net: Option<Network>,
    coattention: Option<CoAttention>,
}

/// Emission scores of one sentence.
pub struct Emissions {
    pub span: crate::autograd::Var,
    pub form: Option<crate::autograd::Var>,
}

impl CogNNModel {
    pub fn new(config: CogNNConfig, vocab: WordVocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let span_space = LabelSpace::axis(Axis::Bie);
        let form_space = LabelSpace::axis(config.form_axis);
        let input = config.embed_dim + 3;
        let d = 2 * config.hidden;
        let coupled = config.architecture == Architecture::CoGuided;

        let span_emb = Embedding::new(&mut params, "span.embed", vocab.len(), config.embed_dim, &mut rng);
        let form_emb = coupled.then(|| {
            let e = params.add(
                "form.embed.table",
                params.values(span_emb.table).clone(),
            );
            Embedding { table: e }
        });
        let span_enc = BiLstm::new(&mut params, "span.bilstm", input, config.hidden, &mut rng);
        let form_enc = coupled.then(|| BiLstm::new(&mut params, "form.bilstm", input, config.hidden, &mut rng));
        let coattention = coupled.then(|| {
            CoAttention::new(
                &mut params,
                "coattention",
                d,
                d,
                config.attention_dim.unwrap_or(d),
                config.sharing,
                &mut rng,
            )
        });
        let span_fusion = coupled.then(|| GatedFusion::new(&mut params, "span.fusion", d, &mut rng));
        let form_fusion = coupled.then(|| GatedFusion::new(&mut params, "form.fusion", d, &mut rng));
        let span_head = CrfHead::new(&mut params, "span.crf", d, span_space.len(), &mut rng);
        let form_head = coupled.then(|| CrfHead::new(&mut params, "form.crf", d, form_space.len(), &mut rng));

        let span_net = Network {
            embedding: span_emb,
            encoder: span_enc,
            fusion: span_fusion,
            head: span_head,
        };
        let form_net = match (form_emb, form_enc, form_fusion, form_head) {
            (Some(embedding), Some(encoder), fusion, Some(head)) => Some(Network {
                embedding,
                encoder,
                fusion,
                head,
            }),
            _ => None,
        };
        Ok(CogNNModel {
            config,
            vocab,
            params,
            span_space,
            form_space,
            span_net,
            form_net,
            coattention,
        })
    }

    pub fn span_space(&self) -> &LabelSpace {
        &self.span_space
    }

    pub fn form_space(&self) -> &LabelSpace {
        &self.form_space
    }

    /// Emission matrices for both views. `rng` enables dropout.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        words: &[String],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Emissions> {
        if words.is_empty() {
            return Err(Error::Empty("sentence"));
        }
        let ids: Vec<usize> = words.iter().map(|w| self.vocab.id(w)).collect();
        let cases = case_matrix(words);
        let rate = self.config.dropout;

        let x = self.span_net.embedding.embed(g, &ids, &cases)?;
        let h = birnn_encode(g, x, &self.span_net.encoder)?;
        let h = dropout(g, h, rate, rng.as_deref_mut().map(|r| r as &mut dyn rand::RngCore));

        let (Some(form_net), Some(coatt)) = (&self.form_net, &self.coattention) else {
            let span = self.span_net.head.emission.forward(g, h)?;
            return Ok(Emissions { span, form: None });
        };
        let x2 = form_net.embedding.embed(g, &ids, &cases)?;
        let h2 = birnn_encode(g, x2, &form_net.encoder)?;
        let h2 = dropout(g, h2, rate, rng.as_deref_mut().map(|r| r as &mut dyn rand::RngCore));

        let att = coattention(g, h, h2, coatt)?;
        let fusion_a = self.span_net.fusion.as_ref().expect("coupled model has fusion");
        let fusion_b = form_net.fusion.as_ref().expect("coupled model has fusion");
        let f = gated_fusion(g, h, att.h_tilde, fusion_a)?;
        let f2 = gated_fusion(g, h2, att.h2_tilde, fusion_b)?;
        let span = self.span_net.head.emission.forward(g, f)?;
        let form = form_net.head.emission.forward(g, f2)?;
        Ok(Emissions {
            span,
            form: Some(form),
        })
    }

    /// Gold class indices of both views.
    pub fn encode_gold(&self, labels: &[TokenLabel]) -> (Vec<usize>, Vec<usize>) {
        (
            labels.iter().map(|l| self.span_space.encode(l)).collect(),
            labels.iter().map(|l| self.form_space.encode(l)).collect(),
        )
    }

    /// Summed CRF negative log-likelihood of both views.
    pub fn joint_loss(
        &self,
        g: &mut Graph<'_>,
        words: &[String],
        span_gold: &[usize],
        form_gold: Option<&[usize]>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<crate::autograd::Var> {
        check_gold(words.len(), span_gold, self.span_space.len())?;
        let em = self.forward(g, words, rng)?;
        let t = g.param(self.span_net.head.transitions);
        let loss = g.crf_nll(em.span, t, span_gold);
        match (&self.form_net, em.form) {
            (Some(net), Some(form)) => {
                let form_gold = form_gold.ok_or(Error::MissingGold("form view"))?;
                check_gold(words.len(), form_gold, self.form_space.len())?;
                let t2 = g.param(net.head.transitions);
                let l2 = g.crf_nll(form, t2, form_gold);
                Ok(g.add(loss, l2))
            }
            _ => Ok(loss),
        }
    }

    /// Viterbi paths of both views (the form path is empty for the single network).
    pub fn decode(&self, words: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
        if words.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let mut g = Graph::new(&self.params);
        let em = self.forward(&mut g, words, None)?;
        let (span, _) = crf::viterbi_decode(g.value(em.span), self.params.values(self.span_net.head.transitions))?;
        let form = match (&self.form_net, em.form) {
            (Some(net), Some(f)) => crf::viterbi_decode(g.value(f), self.params.values(net.head.transitions))?.0,
            _ => Vec::new(),
        };
        Ok((span, form))
    }

    pub fn predict(&self, words: &[String]) -> Result<Prediction> {
        let (span, form) = self.decode(words)?;
        let span_tags: Vec<AxisTag> = span
            .iter()
            .map(|&c| self.span_space.axis_tag(c).unwrap_or(AxisTag::Outside))
            .collect();
        let form_tags: Vec<AxisTag> = form
            .iter()
            .map(|&c| self.form_space.axis_tag(c).unwrap_or(AxisTag::Outside))
            .collect();
        let labels = combine_views(words, &span_tags, &form_tags);
        let spans = decode_spans(&labels);
        Ok(Prediction {
            labels,
            spans,
            span_tags,
            form_tags,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut header = self.config.to_key_values();
        header.insert("vocab".into(), self.vocab.words().join(" "));
        Checkpoint {
            header,
            params: self.params.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.header.get("model").map(String::as_str) != Some("cognn") {
            return Err(Error::Checkpoint("not a cognn checkpoint".into()));
        }
        let mut config = CogNNConfig::default();
        config.apply(&ckpt.header)?;
        let words = ckpt
            .header
            .get("vocab")
            .map(|v| v.split(' ').map(str::to_string).collect())
            .unwrap_or_default();
        let mut model = CogNNModel::new(config, WordVocab::from_words(words))?;
        model.params.load_values(&ckpt.params)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Squared gradient norms reaching the other network's encoder from each
    /// view's loss alone: `(span loss -> form encoder, form loss -> span encoder)`.
    /// Both are zero for the single network.
    pub fn cross_gradient_norms(&self, words: &[String], labels: &[TokenLabel]) -> Result<(f64, f64)> {
        let Some(form_net) = &self.form_net else {
            return Ok((0.0, 0.0));
        };
        let (span_gold, form_gold) = self.encode_gold(labels);
        check_gold(words.len(), &span_gold, self.span_space.len())?;
        let norm = |grads: &Gradients, ids: &[ParamId]| -> f64 {
            ids.iter().filter_map(|&id| grads.get(id)).map(Matrix::sum_squares).sum()
        };
        let mut g = Graph::new(&self.params);
        let em = self.forward(&mut g, words, None)?;
        let t = g.param(self.span_net.head.transitions);
        let span_loss = g.crf_nll(em.span, t, &span_gold);
        let to_form = norm(&g.backward(span_loss), &self.form_encoder_params());
        let t2 = g.param(form_net.head.transitions);
        let form = em.form.expect("coupled model emits the form view");
        let form_loss = g.crf_nll(form, t2, &form_gold);
        let to_span = norm(&g.backward(form_loss), &self.span_encoder_params());
        Ok((to_form, to_span))
    }

    /// Parameter ids of the form network's encoder (empty for the single network).
    pub fn form_encoder_params(&self) -> Vec<ParamId> {
        self.params.ids_with_prefix("form.bilstm")
    }

    pub fn span_encoder_params(&self) -> Vec<ParamId> {
        self.params.ids_with_prefix("span.bilstm")
    }
}

fn check_gold(n: usize, gold: &[usize], classes: usize) -> Result<()> {
    if gold.len() != n {
        return Err(Error::LengthMismatch {
            what: "gold labels vs words",
            left: gold.len(),
            right: n,
        });
    }
    if let Some(&bad) = gold.iter().find(|&&c| c >= classes) {
        return Err(Error::OutOfRange {
            what: "gold class",
            index: bad,
            size: classes,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<TokenLabel>,
    pub spans: Vec<NameSpan>,
    pub span_tags: Vec<AxisTag>,
    pub form_tags: Vec<AxisTag>,
}

/// Merge a span view with an optional form view into full token labels.
/// The span view decides which tokens are names; axes the form view does not
/// supply fall back to the positional role and the initial-shape heuristic.
pub fn combine_views(words: &[String], span: &[AxisTag], form: &[AxisTag]) -> Vec<TokenLabel> {
    let mut labels = vec![TokenLabel::Outside; span.len()];
    let mut i = 0;
    while i < span.len() {
        let AxisTag::Bie(_) = span[i] else {
            i += 1;
            continue;
        };
        let start = i;
        i += 1;
        while i < span.len() && matches!(span[i], AxisTag::Bie(b) if b != crate::labels::Bie::Begin) {
            i += 1;
        }
        let roles = positional_forms(i - start);
        for (j, t) in (start..i).enumerate() {
            let AxisTag::Bie(bie) = span[t] else { unreachable!() };
            let fml = match form.get(t) {
                Some(AxisTag::Fml(f)) => *f,
                _ => roles[j],
            };
            let fi = match form.get(t) {
                Some(AxisTag::Fi(f)) => *f,
                _ if words.get(t).is_some_and(|w| is_initial(w)) => Fi::Initial,
                _ => Fi::Full,
            };
            labels[t] = TokenLabel::name(bie, fml, fi);
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: &'static str,
    pub token: PrfReport,
    pub name_f1: f64,
    pub accuracy: f64,
    pub loss: f64,
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,split,tokenP,tokenR,tokenF,nameF\n");
    for m in log {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.split, m.token.precision, m.token.recall, m.token.f1, m.name_f1
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub token: PrfReport,
    pub name: PrfReport,
    /// Fraction of correct tags over the trained views.
    pub accuracy: f64,
}

pub fn evaluate(model: &CogNNModel, data: &[SentenceExample]) -> Result<Evaluation> {
    let mut token = PrfReport::default();
    let mut name = PrfReport::default();
    let (mut correct, mut total) = (0usize, 0usize);
    for ex in data {
        let pred = model.predict(&ex.words)?;
        token = token.merge(&token_prf(&pred.labels, &ex.labels, TokenMode::SpanOnly)?);
        name = name.merge(&name_prf(&pred.spans, &decode_spans(&ex.labels), false));
        let (span_gold, form_gold) = model.encode_gold(&ex.labels);
        let (span, form) = model.decode(&ex.words)?;
        correct += span.iter().zip(&span_gold).filter(|(a, b)| a == b).count();
        total += span.len();
        if !form.is_empty() {
            correct += form.iter().zip(&form_gold).filter(|(a, b)| a == b).count();
            total += form.len();
        }
    }
    Ok(Evaluation {
        token,
        name,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CogNNModel,
    pub log: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Mini-batch SGD with per-epoch learning-rate decay and early stopping on
/// development accuracy. Returns the best development checkpoint.
pub fn train(train_set: &[SentenceExample], dev_set: &[SentenceExample], config: CogNNConfig) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if dev_set.is_empty() {
        return Err(Error::Empty("development split"));
    }
    let vocab = WordVocab::build(train_set, config.min_word_count);
    let mut model = CogNNModel::new(config.clone(), vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut opt = Sgd::new(config.lr, config.decay).with_clip(config.clip);
    let gold: Vec<(Vec<usize>, Vec<usize>)> = train_set.iter().map(|e| model.encode_gold(&e.labels)).collect();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.params.clone());
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::new(model.params.len());
            for &i in batch {
                let ex = &train_set[i];
                if ex.words.is_empty() {
                    continue;
                }
                let g_step = {
                    let mut g = Graph::new(&model.params);
                    let loss = model.joint_loss(&mut g, &ex.words, &gold[i].0, Some(&gold[i].1), Some(&mut rng))?;
                    epoch_loss += g.value(loss).scalar();
                    g.backward(loss)
                };
                grads.merge(&g_step);
            }
            opt.step(&mut model.params, &mut grads);
        }
        opt.decay_epoch();

        let dev = evaluate(&model, dev_set)?;
        log.push(EpochMetrics {
            epoch,
            split: "dev",
            token: dev.token,
            name_f1: dev.name.f1,
            accuracy: dev.accuracy,
            loss: epoch_loss,
        });
        if dev.accuracy > best.0 {
            best = (dev.accuracy, epoch, model.params.clone());
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
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

/// Parse a `key = value` training configuration on top of the defaults.
pub fn config_from_text(text: &str) -> Result<CogNNConfig> {
    let mut c = CogNNConfig::default();
    c.apply(&parse_key_values(text)?)?;
    Ok(c)
}
