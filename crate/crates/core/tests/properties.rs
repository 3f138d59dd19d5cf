use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use namerec::annotate;
use namerec::autograd::Graph;
use namerec::chunking::{chunk_document, effective_overlap, reassemble, DocumentPieces, OverlapPolicy, Special};
use namerec::corpus::{
    map_labels, parse_conll, read_corpus, synth_generate, write_corpus, AnnotatedDocument, LabelConfig, SynthParams,
};
use namerec::crf::{log_likelihood, sequence_score, viterbi_decode};
use namerec::eval::{cohen_kappa, name_prf, token_prf, TokenMode};
use namerec::labels::{decode_spans, merge_late, spans_to_labels, AxisTag, Bie, Fi, Fml, NameSpan, TokenLabel};
use namerec::nn::{coattention, dropout, transformer_encode, AttentionSharing, CoAttention, Transformer, TransformerConfig};
use namerec::params::ParamStore;
use namerec::tensor::Matrix;
use namerec::tokenizer::{basic_tokenize, propagate_labels, resolve_predictions, tokenize_document, wordpiece, Vocabulary};

fn form() -> impl Strategy<Value = (Fml, Fi)> {
    (0..3usize, 0..2usize).prop_map(|(f, i)| (Fml::ALL[f], Fi::ALL[i]))
}

/// Non-overlapping spans with forms over `len` tokens, built from gaps and lengths.
fn spans(len: usize) -> impl Strategy<Value = Vec<NameSpan>> {
    prop::collection::vec((0..3usize, 1..4usize, prop::collection::vec(form(), 3)), 0..6).prop_map(move |parts| {
        let mut out = Vec::new();
        let mut at = 0;
        for (gap, n, forms) in parts {
            let start = at + gap;
            if start + n > len {
                break;
            }
            out.push(NameSpan::with_forms(start, start + n - 1, forms[..n].to_vec()));
            at = start + n;
        }
        out
    })
}

fn label() -> impl Strategy<Value = TokenLabel> {
    prop_oneof![
        Just(TokenLabel::Outside),
        (0..3usize, form()).prop_map(|(b, (f, i))| TokenLabel::name(Bie::ALL[b], f, i)),
    ]
}

fn vocab() -> Vocabulary {
    let pieces = ["[UNK]", "the", "doe", "john", "jo", "##hn", "##n", "##s", "a", "##b", "##c", "b", "c", ".", ","];
    Vocabulary::new(pieces.iter().map(|s| s.to_string()).collect(), "[UNK]").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spans_survive_label_round_trip(s in spans(20)) {
        let labels = spans_to_labels(&s, 20).unwrap();
        prop_assert_eq!(decode_spans(&labels), s);
    }

    #[test]
    fn fused_labels_parse_back(l in label()) {
        prop_assert_eq!(l.to_string().parse::<TokenLabel>().unwrap(), l);
    }

    #[test]
    fn late_merge_covers_each_axis(marks in prop::collection::vec(prop::collection::vec(any::<bool>(), 12), 1..4)) {
        let tags: Vec<Vec<AxisTag>> = marks
            .iter()
            .map(|m| m.iter().map(|&on| if on { AxisTag::Bie(Bie::Inside) } else { AxisTag::Outside }).collect())
            .collect();
        let merged = merge_late(&tags).unwrap();
        for axis in &tags {
            for (i, t) in axis.iter().enumerate() {
                if t.is_name() {
                    prop_assert!(merged.iter().any(|s| s.start <= i && i <= s.end));
                }
            }
        }
        for s in &merged {
            for i in s.start..=s.end {
                prop_assert!(tags.iter().any(|a| a[i].is_name()));
            }
        }
    }

    #[test]
    fn wordpieces_concatenate_to_the_token(word in "[a-z]{1,10}") {
        let v = vocab();
        let pieces = wordpiece(&word, &v);
        if pieces != ["[UNK]"] {
            let joined: String = pieces.iter().map(|p| p.trim_start_matches("##")).collect();
            prop_assert_eq!(joined, word);
            prop_assert!(pieces.iter().skip(1).all(|p| p.starts_with("##")));
        }
    }

    #[test]
    fn token_offsets_point_into_the_text(text in "[A-Za-z .,;'é-]{0,60}") {
        let chars: Vec<char> = text.chars().collect();
        let mut last_end = 0;
        for t in basic_tokenize(&text) {
            prop_assert!(t.start >= last_end && t.start < t.end);
            prop_assert_eq!(chars[t.start..t.end].iter().collect::<String>(), t.text.clone());
            prop_assert!(!t.text.chars().any(char::is_whitespace));
            last_end = t.end;
        }
    }

    #[test]
    fn propagated_labels_resolve_back(text in "[a-z]{1,8}( [a-z]{1,8}){0,8}", seed in any::<u64>()) {
        let doc = tokenize_document(&text, &vocab());
        let parents = doc.parents();
        let token_classes: Vec<usize> = (0..doc.tokens.len()).map(|i| i % 5).collect();
        let pieces = propagate_labels(&token_classes, &parents).unwrap();
        prop_assert_eq!(resolve_predictions(&pieces, &parents, doc.tokens.len(), seed).unwrap(), token_classes);
    }

    #[test]
    fn chunks_reassemble_with_fixed_overlap(n in 0usize..200, capacity in 2usize..40, ratio in 0.0f64..0.9) {
        prop_assume!(effective_overlap(ratio, capacity) < capacity);
        let doc = DocumentPieces::new("d", (0..n).map(|i| format!("t{i}")).collect(), vec![n / 3, n / 2, n]);
        let cd = chunk_document(&doc, capacity, &OverlapPolicy::Fixed(ratio)).unwrap();
        prop_assert_eq!(reassemble(&cd).unwrap(), doc.pieces.clone());
        for (i, c) in cd.chunks.iter().enumerate() {
            let lead = if i == 0 { Special::Cls } else { Special::Continuation };
            prop_assert_eq!(c.pieces[0].as_str(), lead.as_str());
            prop_assert!(c.content_len() <= capacity);
            if i > 0 {
                prop_assert_eq!(c.overlap_prev, cd.effective_k);
                prop_assert_eq!(c.content_range.0 + cd.effective_k, cd.chunks[i - 1].content_range.1);
            }
        }
    }

    #[test]
    fn adaptive_ratio_grows_with_length(a in 0usize..5000, b in 0usize..5000) {
        let policy = OverlapPolicy::default_adaptive(64);
        let (short, long) = (a.min(b), a.max(b));
        prop_assert!(policy.ratio_for(short) <= policy.ratio_for(long));
    }

    #[test]
    fn crf_scores_stay_finite_and_bounded(seed in any::<u64>(), n in 1usize..8, c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Matrix::uniform(n, c, 50.0, &mut rng);
        let t = Matrix::uniform(c + 2, c + 2, 50.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|i| (seed as usize + i) % c).collect();
        let ll = log_likelihood(&e, &t, &labels).unwrap();
        prop_assert!(ll.is_finite());
        prop_assert!(ll <= 1e-9);
        let (path, best) = viterbi_decode(&e, &t).unwrap();
        prop_assert!((sequence_score(&e, &t, &path).unwrap() - best).abs() < 1e-9);
        prop_assert!(best >= sequence_score(&e, &t, &labels).unwrap() - 1e-9);
    }

    #[test]
    fn prf_swaps_precision_and_recall(pred in prop::collection::vec(label(), 15), gold in prop::collection::vec(label(), 15)) {
        let a = token_prf(&pred, &gold, TokenMode::FineGrained).unwrap();
        let b = token_prf(&gold, &pred, TokenMode::FineGrained).unwrap();
        prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
        prop_assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn strict_matches_are_a_subset(p in spans(20), g in spans(20)) {
        let loose = name_prf(&p, &g, false);
        let strict = name_prf(&p, &g, true);
        prop_assert!(strict.tp <= loose.tp);
        prop_assert_eq!(loose.tp + loose.fp, p.len());
        prop_assert_eq!(loose.tp + loose.fn_, g.len());
    }

    #[test]
    fn kappa_is_one_on_self_and_label_invariant(a in prop::collection::vec(0u8..3, 2..30), b in prop::collection::vec(0u8..3, 30)) {
        let b = &b[..a.len()];
        if a.iter().any(|&x| x != a[0]) {
            prop_assert!((cohen_kappa(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
        let relabel = |v: &[u8]| -> Vec<u8> { v.iter().map(|&x| (x + 1) % 3).collect() };
        if let (Ok(k), Ok(r)) = (cohen_kappa(&a, b), cohen_kappa(&relabel(&a), &relabel(b))) {
            prop_assert!((k - r).abs() < 1e-12);
            prop_assert!(k <= 1.0 + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coattention_weights_are_distributions(seed in any::<u64>(), n in 1usize..7, shared in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let sharing = if shared { AttentionSharing::Shared } else { AttentionSharing::Separate };
        let att = CoAttention::new(&mut store, "c", 4, 3, 5, sharing, &mut rng);
        let (h, h2) = (Matrix::uniform(n, 4, 2.0, &mut rng), Matrix::uniform(n, 3, 2.0, &mut rng));
        let mut g = Graph::new(&store);
        let (hv, h2v) = (g.constant(h), g.constant(h2));
        let out = coattention(&mut g, hv, h2v, &att).unwrap();
        for w in [out.weights, out.second_weights] {
            let total: f64 = g.value(w).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(g.value(w).data().iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn transformer_is_deterministic_and_row_stochastic(seed in any::<u64>(), n in 1usize..8) {
        let cfg = TransformerConfig { layers: 2, heads: 2, dim: 8, ff_dim: 12, max_len: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = Transformer::new(&mut store, "t", cfg, &mut rng).unwrap();
        let x = Matrix::uniform(n, 8, 1.0, &mut rng);
        let run = || {
            let mut g = Graph::new(&store);
            let xv = g.constant(x.clone());
            let out = transformer_encode(&mut g, xv, &enc).unwrap();
            let rows: Vec<Matrix> = out.attention.iter().map(|a| g.value(*a).clone()).collect();
            (g.value(out.output).clone(), rows)
        };
        let (a, attn) = run();
        let (b, _) = run();
        prop_assert_eq!(a, b);
        prop_assert_eq!(attn.len(), 4);
        for m in attn {
            for r in 0..m.rows() {
                prop_assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dropout_is_identity_without_rng(seed in any::<u64>(), rate in 0.0f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = ParamStore::new();
        let x = Matrix::uniform(3, 4, 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let xv = g.constant(x.clone());
        let y = dropout(&mut g, xv, rate, None);
        prop_assert_eq!(g.value(y), &x);
    }

    #[test]
    fn synthetic_corpora_round_trip_and_validate(seed in any::<u64>()) {
        let docs = synth_generate(seed, &SynthParams { num_docs: 2, ..SynthParams::default() });
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&docs, dir.path()).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        prop_assert_eq!(&back, &docs);
        for d in &back {
            prop_assert!(annotate::validate(d).passed());
            let names: usize = d.records.iter().map(|r| r.positions.len()).sum();
            let masked = annotate::mask(d).unwrap();
            prop_assert_eq!(masked.matches(annotate::MASK_TOKEN).count(), names);
            let (_, labels) = d.token_labels().unwrap();
            prop_assert_eq!(decode_spans(&labels).len(), names);
        }
    }

    #[test]
    fn compare_is_antisymmetric(seed in any::<u64>(), drop in 0usize..4) {
        let doc = synth_generate(seed, &SynthParams { num_docs: 1, ..SynthParams::default() }).remove(0);
        let mut other: AnnotatedDocument = doc.clone();
        if !other.records.is_empty() {
            other.records.remove(drop % other.records.len());
        }
        let ab = annotate::compare(&doc, &other).unwrap();
        let ba = annotate::compare(&other, &doc).unwrap();
        prop_assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert_eq!(x.span, y.span);
            prop_assert_eq!(&x.labels_a, &y.labels_b);
        }
        prop_assert!(annotate::compare(&doc, &doc).unwrap().is_empty());
    }
}

#[test]
fn per_and_fml_configurations_mark_the_same_tokens() {
    let conll = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sample.conll")).unwrap();
    let docs = parse_conll(&conll, "sample").unwrap();
    let per = map_labels(&docs, LabelConfig::Per);
    let fml = map_labels(&docs, LabelConfig::Fml);
    let conll_tags = map_labels(&docs, LabelConfig::Conll);
    assert_eq!(per[0][0], ["PER", "PER", "Outside", "Outside", "Outside"]);
    assert_eq!(fml[0][0][..2], ["Begin_First_Full", "End_Last_Full"]);
    assert_eq!(fml[0][1][..2], ["Begin_First_Full", "End_Last_Initial"]);
    assert_eq!(conll_tags[0][1][4], "ORG");
    for (p, f) in per.iter().flatten().flatten().zip(fml.iter().flatten().flatten()) {
        assert_eq!(p == "Outside", f == "Outside");
    }
}
