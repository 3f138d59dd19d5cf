//! Seeded synthetic experiments comparing model variants under identical
//! training. The examples print them; the acceptance suite checks their
//! direction.

use std::time::Instant;

use crate::chunking::OverlapPolicy;
use crate::cognn::{self, sentences_from_docs, Architecture, CogNNConfig, Evaluation};
use crate::corpus::{synth_generate, AnnotatedDocument, SynthParams};
use crate::error::Result;
use crate::eval::{discordant_pairs, mcnemar, McNemar};
use crate::isbert::{evaluate_documents, train_isbert, EncoderKind, IsConfig, Overlap, PreparedDocument};

/// Held-out result of one trained chunk-encoder variant.
#[derive(Debug, Clone)]
pub struct IsRun {
    pub label: String,
    pub name_f1: f64,
    pub token_f1: f64,
    /// Per-token exact-label correctness on the test documents.
    pub decisions: Vec<bool>,
    pub best_epoch: usize,
    pub epochs: usize,
    pub seconds: f64,
}

/// Small recurrent chunk encoder that trains in seconds on one core.
pub fn small_isbert_config(seed: u64) -> IsConfig {
    IsConfig {
        encoder: EncoderKind::BiRnn,
        capacity: 24,
        layers: 1,
        heads: 2,
        dim: 32,
        ff_dim: 64,
        max_pieces: 2000,
        lr: 0.01,
        max_epochs: 50,
        patience: 10,
        seed,
        ..IsConfig::default()
    }
}

/// Documents several chunks long, with names repeated between prose and
/// context-poor list or citation blocks.
pub fn long_doc_params(num_docs: usize) -> SynthParams {
    SynthParams {
        num_docs,
        min_tokens: 60,
        max_tokens: 110,
        context_richness: 0.3,
        repetition_rate: 0.5,
        ..SynthParams::default()
    }
}

pub fn run_isbert(
    label: &str,
    train: &[AnnotatedDocument],
    dev: &[AnnotatedDocument],
    test: &[AnnotatedDocument],
    config: IsConfig,
) -> Result<IsRun> {
    let started = Instant::now();
    let out = train_isbert(train, dev, config)?;
    let prepared = test
        .iter()
        .map(|d| PreparedDocument::from_annotated(d, &out.model.vocab))
        .collect::<Result<Vec<_>>>()?;
    let eval = evaluate_documents(&out.model, &prepared)?;
    Ok(IsRun {
        label: label.to_string(),
        name_f1: eval.name.f1,
        token_f1: eval.token.f1,
        decisions: eval.decisions,
        best_epoch: out.best_epoch,
        epochs: out.log.len(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// No overlap, overlap 0.5 with one hop and overlap 0.5 with two hops, on
/// one seeded corpus split 70/15/rest.
pub fn overlap_study(seed: u64, num_docs: usize) -> Result<Vec<IsRun>> {
    overlap_study_with(&small_isbert_config(seed), num_docs)
}

/// [`overlap_study`] with every variant trained from `base` (overlap and hop
/// count overridden).
pub fn overlap_study_with(base: &IsConfig, num_docs: usize) -> Result<Vec<IsRun>> {
    let seed = base.seed;
    let docs = synth_generate(seed, &long_doc_params(num_docs));
    let (train, rest) = docs.split_at(70.min(docs.len() / 2));
    let (dev, test) = rest.split_at(15.min(rest.len() / 2));
    let variants = [
        ("overlap 0", Overlap::Fixed(0.0), 1),
        ("overlap 0.5, m=1", Overlap::Fixed(0.5), 1),
        ("overlap 0.5, m=2", Overlap::Fixed(0.5), 2),
    ];
    variants
        .into_iter()
        .map(|(label, overlap, hops)| {
            let config = IsConfig {
                overlap,
                hops,
                ..base.clone()
            };
            run_isbert(label, train, dev, test, config)
        })
        .collect()
}

/// McNemar test on pooled paired decisions (`first` correct and `second`
/// wrong counts as b).
pub fn pooled_mcnemar(first: &[bool], second: &[bool]) -> Result<McNemar> {
    let (b, c) = discordant_pairs(first, second)?;
    mcnemar(b, c)
}

/// Result of training the fixed and adaptive overlap policies on one split.
#[derive(Debug, Clone)]
pub struct PolicyPair {
    pub fixed: IsRun,
    pub adaptive: IsRun,
    /// Share of test documents for which the adaptive ratio differs from 0.5.
    pub differing_docs: f64,
}

fn policy_pair(seed: u64, params: &SynthParams, split: (usize, usize), hops: usize, max_epochs: usize) -> Result<PolicyPair> {
    let docs = synth_generate(seed, params);
    let (train, rest) = docs.split_at(split.0);
    let (dev, test) = rest.split_at(split.1);
    let base = IsConfig {
        hops,
        max_epochs,
        ..small_isbert_config(seed)
    };
    let fixed = run_isbert("fixed 0.5", train, dev, test, IsConfig { overlap: Overlap::Fixed(0.5), ..base.clone() })?;
    let adaptive_config = IsConfig {
        overlap: Overlap::Adaptive,
        ..base
    };
    let policy = adaptive_config.policy();
    let adaptive = run_isbert("adaptive", train, dev, test, adaptive_config)?;
    let vocab = crate::isbert::IsBertModel::build_vocab(train, small_isbert_config(seed).max_pieces);
    let differing = test
        .iter()
        .filter(|d| {
            let p = PreparedDocument::from_text(&d.doc_id, &d.text, &vocab);
            policy.ratio_for(p.pieces.len()) != OverlapPolicy::Fixed(0.5).ratio_for(p.pieces.len())
        })
        .count();
    Ok(PolicyPair {
        fixed,
        adaptive,
        differing_docs: differing as f64 / test.len().max(1) as f64,
    })
}

/// Documents of one to four chunks, where the adaptive table picks ratios
/// below 0.5.
pub fn short_doc_study(seed: u64) -> Result<PolicyPair> {
    let params = SynthParams {
        num_docs: 100,
        min_tokens: 20,
        max_tokens: 80,
        context_richness: 0.3,
        repetition_rate: 0.5,
        ..SynthParams::default()
    };
    policy_pair(seed, &params, (60, 15), 1, 50)
}

/// Documents longer than six chunks, where both policies choose 0.5.
pub fn long_doc_policy_study(seed: u64) -> Result<PolicyPair> {
    let params = SynthParams {
        num_docs: 30,
        min_tokens: 160,
        max_tokens: 200,
        context_richness: 0.3,
        repetition_rate: 0.5,
        ..SynthParams::default()
    };
    policy_pair(seed, &params, (20, 5), 1, 15)
}

/// Sentence-level corpus for the co-guided tagger: short homepage-style
/// documents dominated by citation blocks.
pub fn cognn_sentences(seed: u64) -> Result<Vec<cognn::SentenceExample>> {
    let params = SynthParams {
        num_docs: 150,
        min_tokens: 30,
        max_tokens: 60,
        context_richness: 0.5,
        citation_rate: 1.0,
        ..SynthParams::default()
    };
    sentences_from_docs(&synth_generate(seed, &params))
}

/// Held-out evaluations of the co-guided tagger and the single-network
/// baseline, both trained on the same 50 sentences with the same settings.
pub fn cognn_study(seed: u64) -> Result<(Evaluation, Evaluation)> {
    let sentences = cognn_sentences(seed)?;
    let (train, rest) = sentences.split_at(50);
    let (dev, test) = rest.split_at(50);
    let test = &test[..test.len().min(400)];
    let run = |architecture| -> Result<Evaluation> {
        let config = CogNNConfig {
            architecture,
            seed,
            batch_size: 8,
            lr: 0.05,
            ..CogNNConfig::default()
        };
        let out = cognn::train(train, dev, config)?;
        cognn::evaluate(&out.model, test)
    };
    Ok((run(Architecture::CoGuided)?, run(Architecture::Single)?))
}
