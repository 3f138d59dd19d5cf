//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-4 and 8-10 are exact checks and fail the run. Criteria 5-7 are
//! directional training experiments; their lines report the measured numbers
//! and do not change the exit status.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use namerec::annotate::{self, DisagreementKind, NameTemplate, ViolationKind};
use namerec::chunking::{chunk_document, effective_overlap, reassemble, DocumentPieces, OverlapPolicy, Special};
use namerec::cognn::{CogNNConfig, CogNNModel, WordVocab};
use namerec::corpus::{read_corpus, synth_generate, write_corpus, AnnotatedDocument, AnnotationRecord, SynthParams};
use namerec::crf::{log_likelihood, sequence_score, viterbi_decode};
use namerec::eval::{cohen_kappa, kappa_from_table, mcnemar, name_prf, token_prf, TokenMode};
use namerec::experiments::{cognn_sentences, cognn_study, long_doc_policy_study, overlap_study, pooled_mcnemar, short_doc_study};
use namerec::gradcheck::check_gradients;
use namerec::isbert::{IsBertModel, IsConfig, Overlap, PreparedDocument};
use namerec::labels::{
    decode_spans, merge_late, name_form_combinations, Axis, AxisTag, Bie, Fi, Fml, LabelScheme, LabelSpace, NameSpan,
    TokenLabel,
};
use namerec::nn::{
    birnn_encode, coattention, gated_fusion, linear_project, transformer_encode, AttentionSharing, BiLstm, CoAttention,
    Embedding, GatedFusion, Linear, Transformer, TransformerConfig,
};
use namerec::params::ParamStore;
use namerec::tensor::{log_sum_exp, Matrix};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Every label sequence of length `n` over `c` classes.
fn all_sequences(n: usize, c: usize) -> Vec<Vec<usize>> {
    (0..c.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let y = code % c;
                    code /= c;
                    y
                })
                .collect()
        })
        .collect()
}

fn crf_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_ll, mut path_mismatches) = (0.0f64, 0);
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let c = rng.gen_range(1..=4);
        let e = Matrix::uniform(n, c, 3.0, &mut rng);
        let t = Matrix::uniform(c + 2, c + 2, 3.0, &mut rng);
        let seqs = all_sequences(n, c);
        let scores: Vec<f64> = seqs.iter().map(|y| sequence_score(&e, &t, y).unwrap()).collect();
        let log_z = log_sum_exp(&scores);
        for _ in 0..3 {
            let y = &seqs[rng.gen_range(0..seqs.len())];
            let expected = sequence_score(&e, &t, y).unwrap() - log_z;
            worst_ll = worst_ll.max((log_likelihood(&e, &t, y).unwrap() - expected).abs());
        }
        let best = (0..seqs.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        if viterbi_decode(&e, &t).unwrap().0 != seqs[best] {
            path_mismatches += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst_ll < 1e-8 && path_mismatches == 0 && secs < 10.0,
        format!("200 instances: max |log-lik error| {worst_ll:.1e}, viterbi mismatches {path_mismatches}, {secs:.2}s"),
    )
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut results: Vec<(&str, f64, f64)> = Vec::new();
    let target = |rows, cols, rng: &mut ChaCha8Rng| Matrix::uniform(rows, cols, 1.0, rng);

    {
        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "e", 5, 3, &mut rng);
        let cases = Matrix::uniform(4, 3, 1.0, &mut rng);
        let w = target(4, 6, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let r = check_gradients(&mut store, &ids, 1e-5, |g| {
            let x = emb.embed(g, &[1, 4, 1, 0], &cases)?;
            let x2 = g.mul(x, x);
            let t = g.constant(w.clone());
            let p = g.mul(x2, t);
            Ok(g.sum(p))
        })
        .unwrap();
        results.push(("embed", r.max_rel_error, 1e-4));
    }
    {
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "l", 3, 3, &mut rng);
        let x = Matrix::uniform(4, 3, 1.0, &mut rng);
        let w = target(4, 6, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let r = check_gradients(&mut store, &ids, 1e-5, |g| {
            let xv = g.constant(x.clone());
            let h = birnn_encode(g, xv, &lstm)?;
            let t = g.constant(w.clone());
            let p = g.mul(h, t);
            Ok(g.sum(p))
        })
        .unwrap();
        results.push(("birnn_encode", r.max_rel_error, 1e-4));
    }
    for sharing in [AttentionSharing::Shared, AttentionSharing::Separate] {
        let mut store = ParamStore::new();
        let att = CoAttention::new(&mut store, "c", 3, 4, 3, sharing, &mut rng);
        let h = Matrix::uniform(5, 3, 1.0, &mut rng);
        let h2 = Matrix::uniform(5, 4, 1.0, &mut rng);
        let (w1, w2) = (target(5, 3, &mut rng), target(5, 4, &mut rng));
        let ids: Vec<_> = store.ids().collect();
        let r = check_gradients(&mut store, &ids, 1e-5, |g| {
            let (hv, h2v) = (g.constant(h.clone()), g.constant(h2.clone()));
            let out = coattention(g, hv, h2v, &att)?;
            let (t1, t2) = (g.constant(w1.clone()), g.constant(w2.clone()));
            let p1 = g.mul(out.h_tilde, t1);
            let p2 = g.mul(out.h2_tilde, t2);
            let (s1, s2) = (g.sum(p1), g.sum(p2));
            Ok(g.add(s1, s2))
        })
        .unwrap();
        results.push(("coattention", r.max_rel_error, 1e-4));
    }
    {
        let mut store = ParamStore::new();
        let fusion = GatedFusion::new(&mut store, "f", 4, &mut rng);
        let h = Matrix::uniform(3, 4, 1.0, &mut rng);
        let ht = Matrix::uniform(3, 4, 1.0, &mut rng);
        let w = target(3, 4, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let r = check_gradients(&mut store, &ids, 1e-5, |g| {
            let (hv, htv) = (g.constant(h.clone()), g.constant(ht.clone()));
            let f = gated_fusion(g, hv, htv, &fusion)?;
            let t = g.constant(w.clone());
            let p = g.mul(f, t);
            Ok(g.sum(p))
        })
        .unwrap();
        results.push(("gated_fusion", r.max_rel_error, 1e-4));
    }
    {
        let mut store = ParamStore::new();
        let cfg = TransformerConfig {
            layers: 2,
            heads: 2,
            dim: 6,
            ff_dim: 8,
            max_len: 6,
        };
        let enc = Transformer::new(&mut store, "t", cfg, &mut rng).unwrap();
        let x = Matrix::uniform(5, 6, 1.0, &mut rng);
        let w = target(5, 6, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let r = check_gradients(&mut store, &ids, 1e-5, |g| {
            let xv = g.constant(x.clone());
            let out = transformer_encode(g, xv, &enc)?;
            let t = g.constant(w.clone());
            let p = g.mul(out.output, t);
            Ok(g.sum(p))
        })
        .unwrap();
        results.push(("transformer_encode", r.max_rel_error, 1e-3));
    }
    {
        let mut store = ParamStore::new();
        let layer = Linear::new(&mut store, "p", 4, 3, &mut rng);
        let x = Matrix::uniform(5, 4, 1.0, &mut rng);
        let w = target(5, 3, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let r = check_gradients(&mut store, &ids, 1e-5, |g| {
            let xv = g.constant(x.clone());
            let out = linear_project(g, xv, &layer)?;
            let o2 = g.tanh(out);
            let t = g.constant(w.clone());
            let p = g.mul(o2, t);
            Ok(g.sum(p))
        })
        .unwrap();
        results.push(("linear_project", r.max_rel_error, 1e-4));
    }
    {
        let mut store = ParamStore::new();
        let e = store.add("emissions", Matrix::uniform(5, 4, 2.0, &mut rng));
        let t = store.add("transitions", Matrix::uniform(6, 6, 2.0, &mut rng));
        let labels = [0, 3, 3, 1, 2];
        let r = check_gradients(&mut store, &[e, t], 1e-5, |g| {
            let (ev, tv) = (g.param(e), g.param(t));
            Ok(g.crf_nll(ev, tv, &labels))
        })
        .unwrap();
        results.push(("crf_loss_grad", r.max_rel_error, 1e-4));
    }
    let secs = started.elapsed().as_secs_f64();
    let passed = results.iter().all(|(_, err, tol)| err < tol) && secs < 60.0;
    let summary: Vec<String> = results.iter().map(|(n, e, _)| format!("{n} {e:.1e}")).collect();
    outcome(passed, format!("max relative errors: {}; {secs:.1}s", summary.join(", ")))
}

fn random_pieces(rng: &mut ChaCha8Rng) -> DocumentPieces {
    let n = rng.gen_range(0..300);
    let pieces: Vec<String> = (0..n).map(|i| format!("p{}", i % 37)).collect();
    let mut ends = Vec::new();
    let mut at = 0;
    while at < n {
        at = (at + rng.gen_range(1..40)).min(n);
        ends.push(at);
    }
    DocumentPieces::new("d", pieces, ends)
}

fn chunker_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    let mut checked = 0;
    while checked < 1000 {
        let doc = random_pieces(&mut rng);
        let capacity = rng.gen_range(1..80);
        let ratio = rng.gen_range(0.0..0.95);
        let policy = OverlapPolicy::Fixed(ratio);
        if effective_overlap(ratio, capacity) >= capacity {
            continue;
        }
        checked += 1;
        let ok = chunk_document(&doc, capacity, &policy).and_then(|cd| {
            let leads_ok = cd.chunks.iter().enumerate().all(|(i, c)| {
                let want = if i == 0 { Special::Cls } else { Special::Continuation };
                c.pieces.first().map(|p| p.as_str()) == Some(want.as_str())
            });
            Ok(leads_ok && reassemble(&cd)? == doc.pieces)
        });
        if !matches!(ok, Ok(true)) {
            failures += 1;
        }
    }
    let big = DocumentPieces::new("long", (0..2000).map(|i| format!("w{i}")).collect(), vec![2000]);
    let cd = chunk_document(&big, 512, &OverlapPolicy::Fixed(0.5)).unwrap();
    let overlaps_ok = cd.effective_k == 256 && cd.chunks.iter().skip(1).all(|c| c.overlap_prev == 256);
    outcome(
        failures == 0 && overlaps_ok,
        format!(
            "{checked} random triples, {failures} failures; capacity 512 at 0.5 gives overlap {} over {} chunks",
            cd.effective_k,
            cd.chunks.len()
        ),
    )
}

fn context_propagation() -> Outcome {
    let docs = synth_generate(11, &SynthParams {
        num_docs: 50,
        min_tokens: 40,
        max_tokens: 90,
        ..SynthParams::default()
    });
    let vocab = IsBertModel::build_vocab(&docs, 400);
    let config = |overlap| IsConfig {
        overlap,
        capacity: 10,
        hops: 1,
        layers: 1,
        heads: 2,
        dim: 8,
        ff_dim: 8,
        max_pieces: 400,
        ..IsConfig::default()
    };
    let plain = IsBertModel::new(config(Overlap::Fixed(0.0)), vocab.clone()).unwrap();
    let overlapped = IsBertModel::new(config(Overlap::Fixed(0.5)), vocab).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut leaks, mut fwd_min, mut bwd_min, mut tested) = (0, f64::INFINITY, f64::INFINITY, 0);
    let perturb = |inputs: &[Matrix], chunk: usize, row: usize| {
        let mut out = inputs.to_vec();
        let v = out[chunk].get(row, 0);
        out[chunk].set(row, 0, v + 0.5);
        out
    };
    for d in &docs {
        let doc = PreparedDocument::from_annotated(d, &plain.vocab).unwrap();
        for (model, zero) in [(&plain, true), (&overlapped, false)] {
            let chunks = model.chunk(&doc).unwrap();
            let m = chunks.chunks.len();
            if m < 2 {
                continue;
            }
            let i = rng.gen_range(0..m);
            // Rows in the leading overlap are overwritten by the previous
            // chunk's outputs, so perturb a piece where it first appears.
            let c = &chunks.chunks[i];
            let rows = &c.content_positions()[c.overlap_prev..];
            let row = rows[rng.gen_range(0..rows.len())];
            let inputs = model.input_blocks(&doc, &chunks).unwrap();
            let base = model.contextual_blocks(&chunks, &inputs).unwrap();
            let after = model.contextual_blocks(&chunks, &perturb(&inputs, i, row)).unwrap();
            if zero {
                leaks += (0..m).filter(|&j| j != i && base[j] != after[j]).count();
            } else {
                tested += 1;
                if i + 1 < m {
                    fwd_min = fwd_min.min(base[i + 1].max_abs_diff(&after[i + 1]));
                }
                if i > 0 {
                    bwd_min = bwd_min.min(base[i - 1].max_abs_diff(&after[i - 1]));
                }
            }
        }
    }
    outcome(
        leaks == 0 && tested == docs.len() && fwd_min > 1e-9 && bwd_min > 1e-9,
        format!(
            "k = 0: {leaks} chunks changed outside the perturbed one; k > 0 over {tested} documents: min forward reach {fwd_min:.1e}, min backward reach {bwd_min:.1e}"
        ),
    )
}

fn directional_overlap() -> Outcome {
    let started = Instant::now();
    let mut sums = [0.0; 3];
    let mut pooled: [Vec<bool>; 3] = Default::default();
    let seeds = [1u64, 2, 3, 4, 5];
    for &seed in &seeds {
        for (i, run) in overlap_study(seed, 140).unwrap().into_iter().enumerate() {
            sums[i] += run.name_f1;
            pooled[i].extend(run.decisions);
        }
    }
    let mean = sums.map(|s| 100.0 * s / seeds.len() as f64);
    let best = (0..3).fold(0, |b, i| if mean[i] > mean[b] { i } else { b });
    let worst = (0..3).fold(0, |w, i| if mean[i] < mean[w] { i } else { w });
    let test = pooled_mcnemar(&pooled[best], &pooled[worst]).unwrap();
    let ordered = mean[2] >= mean[1] && mean[1] >= mean[0];
    let spread = mean[best] - mean[worst];
    let secs = started.elapsed().as_secs_f64();
    outcome(
        ordered && spread >= 2.0 && test.significant && secs <= 900.0,
        format!(
            "mean name F1 over 5 seeds: overlap 0 {:.2}, 0.5/m=1 {:.2}, 0.5/m=2 {:.2}; spread {spread:.2}; McNemar best vs worst {:.1} (significant {}); {:.0}s",
            mean[0], mean[1], mean[2], test.statistic, test.significant, secs
        ),
    )
}

fn adaptive_robustness() -> Outcome {
    let started = Instant::now();
    let (mut wins, mut short_fixed, mut short_adaptive, mut worst_long_gap) = (0, 0.0, 0.0, 0.0f64);
    for seed in 1..=5u64 {
        let short = short_doc_study(seed).unwrap();
        short_fixed += short.fixed.token_f1;
        short_adaptive += short.adaptive.token_f1;
        if short.adaptive.token_f1 >= short.fixed.token_f1 {
            wins += 1;
        }
        let long = long_doc_policy_study(seed).unwrap();
        worst_long_gap = worst_long_gap.max(100.0 * (long.adaptive.token_f1 - long.fixed.token_f1).abs());
    }
    let passed = short_adaptive >= short_fixed && worst_long_gap <= 0.5;
    outcome(
        passed,
        format!(
            "short docs mean token F1: adaptive {:.2} vs fixed {:.2} (adaptive >= fixed on {wins}/5 seeds); long docs max gap {worst_long_gap:.2}; {:.0}s",
            20.0 * short_adaptive,
            20.0 * short_fixed,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn cognn_coupling() -> Outcome {
    let started = Instant::now();
    let sentences = cognn_sentences(1).unwrap();
    let model = CogNNModel::new(
        CogNNConfig {
            min_word_count: 1,
            ..CogNNConfig::default()
        },
        WordVocab::build(&sentences[..50], 1),
    )
    .unwrap();
    let ex = sentences.iter().find(|s| s.labels.iter().any(TokenLabel::is_name)).unwrap();
    let (to_form, to_span) = model.cross_gradient_norms(&ex.words, &ex.labels).unwrap();
    let flows = to_form > 0.0 && to_span > 0.0;
    let (co, single) = cognn_study(1).unwrap();
    let gap = 100.0 * (co.token.f1 - single.token.f1);
    outcome(
        flows && co.token.f1 > 0.9 && gap >= 1.0,
        format!(
            "cross-network gradient norms {to_form:.1e} / {to_span:.1e}; token F1 co-guided {:.2} vs single {:.2} (gap {gap:+.2}); {:.0}s",
            100.0 * co.token.f1,
            100.0 * single.token.f1,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn metrics_exactness() -> Outcome {
    let name = |b, f, i| TokenLabel::name(b, f, i);
    let n = name(Bie::Begin, Fml::First, Fi::Full);
    let o = TokenLabel::Outside;
    let gold = [n, n, n, n, o, o];
    let pred = [n, n, n, o, n, o];
    let t = token_prf(&pred, &gold, TokenMode::SpanOnly).unwrap();
    let token_ok = (t.precision, t.recall, t.f1) == (0.75, 0.75, 0.75);
    let gs = [NameSpan::new(0, 1), NameSpan::new(5, 6)];
    let ps = [NameSpan::new(0, 1), NameSpan::new(5, 5)];
    let r = name_prf(&ps, &gs, false);
    let name_ok = (r.tp, r.fp, r.fn_) == (1, 1, 1) && (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5);
    let kappa = kappa_from_table(&[vec![20, 5], vec![10, 15]]).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, count) in [(0, 0, 20), (0, 1, 5), (1, 0, 10), (1, 1, 15)] {
        a.extend(std::iter::repeat(x).take(count));
        b.extend(std::iter::repeat(y).take(count));
    }
    let kappa_seq = cohen_kappa(&a, &b).unwrap();
    let kappa_ok = (kappa - 0.4).abs() < 1e-12 && (kappa_seq - 0.4).abs() < 1e-12;
    let m = mcnemar(10, 2).unwrap();
    let m_eq = mcnemar(4, 4).unwrap();
    let m_one = mcnemar(1, 0).unwrap();
    let mc_ok = m.statistic == 49.0 / 12.0
        && m.significant
        && m_eq.statistic == 1.0 / 8.0
        && !m_eq.significant
        && m_one.statistic == 0.0
        && mcnemar(0, 0).is_err();
    outcome(
        token_ok && name_ok && kappa_ok && mc_ok,
        format!(
            "token P/R/F {:.2}/{:.2}/{:.2}; name P/R/F {:.2}/{:.2}/{:.2}; kappa {kappa:.4}; McNemar(10, 2) = {:.4}",
            t.precision, t.recall, t.f1, r.precision, r.recall, r.f1, m.statistic
        ),
    )
}

fn label_algebra() -> Outcome {
    let sizes = (
        LabelSpace::fused().len(),
        LabelSpace::axis(Axis::Bie).len(),
        LabelSpace::axis(Axis::Fml).len(),
        LabelSpace::axis(Axis::Fi).len(),
    );
    let early = LabelScheme::early().label_spaces()[0].len();
    let names: Vec<TokenLabel> = Bie::ALL
        .iter()
        .flat_map(|&b| Fml::ALL.iter().flat_map(move |&f| Fi::ALL.iter().map(move |&i| TokenLabel::name(b, f, i))))
        .collect();
    let mut pairs = std::collections::HashSet::new();
    for x in &names {
        for y in &names {
            pairs.insert((x.to_string(), y.to_string()));
        }
    }
    // Union semantics, checked against every per-axis marking of 5 tokens.
    let mut union_ok = true;
    for code in 0..(1u32 << 15) {
        let marks: Vec<Vec<bool>> = (0..3).map(|a| (0..5).map(|t| code >> (a * 5 + t) & 1 == 1).collect()).collect();
        let tags: Vec<Vec<AxisTag>> = marks
            .iter()
            .enumerate()
            .map(|(a, m)| {
                m.iter()
                    .map(|&on| match (on, a) {
                        (false, _) => AxisTag::Outside,
                        (true, 0) => AxisTag::Bie(Bie::Inside),
                        (true, 1) => AxisTag::Fml(Fml::Middle),
                        (true, _) => AxisTag::Fi(Fi::Full),
                    })
                    .collect()
            })
            .collect();
        let union: Vec<bool> = (0..5).map(|t| marks.iter().any(|m| m[t])).collect();
        let mut expected = Vec::new();
        let mut t = 0;
        while t < 5 {
            if union[t] {
                let s = t;
                while t + 1 < 5 && union[t + 1] {
                    t += 1;
                }
                expected.push((s, t));
            }
            t += 1;
        }
        let got: Vec<(usize, usize)> = merge_late(&tags).unwrap().iter().map(|s| (s.start, s.end)).collect();
        union_ok &= got == expected;
    }
    let decode_ok = decode_spans(&[
        names[0],
        TokenLabel::Outside,
    ]) == vec![NameSpan::with_forms(0, 0, vec![(Fml::First, Fi::Full)])];
    let passed = sizes == (19, 4, 4, 3) && early == 19 && pairs.len() == 324 && name_form_combinations(2) == 324 && union_ok && decode_ok;
    outcome(
        passed,
        format!(
            "space sizes {}/{}/{}/{}; two-token combinations {} (enumerated {}); merge_late union over 32768 markings {}",
            sizes.0,
            sizes.1,
            sizes.2,
            sizes.3,
            name_form_combinations(2),
            pairs.len(),
            if union_ok { "holds" } else { "violated" }
        ),
    )
}

fn record(text: &str, positions: &[usize], labels: &[&str]) -> AnnotationRecord {
    AnnotationRecord {
        text: text.into(),
        positions: positions.to_vec(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        comment: None,
    }
}

fn annotation_ops() -> Outcome {
    let mut problems = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            problems.push(what.to_string());
        }
    };
    let bf_el = ["Begin_First_Full", "End_Last_Full"];
    let doc = |text: &str, records: Vec<AnnotationRecord>| AnnotatedDocument {
        doc_id: "d".into(),
        text: text.into(),
        records,
    };

    let works = doc("John Doe works", vec![record("John Doe", &[0], &bf_el)]);
    check(annotate::mask(&works).unwrap() == "ANNOTATED works", "mask single");
    check(annotate::mask(&doc("no names here", vec![])).unwrap() == "no names here", "mask empty");
    let adjacent = doc("Ann Lee Bo Chan", vec![record("Ann Lee", &[0], &bf_el), record("Bo Chan", &[8], &bf_el)]);
    check(annotate::mask(&adjacent).unwrap() == "ANNOTATED ANNOTATED", "mask adjacent");

    check(annotate::validate(&works).passed(), "validate consistent");
    let shifted = doc("John Doe works", vec![record("John Doe", &[1], &bf_el)]);
    check(
        annotate::validate(&shifted).violations.iter().any(|v| v.kind == ViolationKind::PositionMismatch),
        "validate off-by-one",
    );
    let no_fi = doc("John Doe works", vec![record("John Doe", &[0], &["Begin_First_Full", "End_Last"])]);
    check(
        annotate::validate(&no_fi).violations.iter().any(|v| v.kind == ViolationKind::IncompleteForm),
        "validate missing axis",
    );

    let text = "John Doe met Ann Lee";
    let a = doc(text, vec![record("John Doe", &[0], &bf_el)]);
    check(annotate::compare(&a, &a).unwrap().is_empty(), "compare identical");
    let extra = doc(text, vec![record("John Doe", &[0], &bf_el), record("Ann Lee", &[13], &bf_el)]);
    let d = annotate::compare(&extra, &a).unwrap();
    check(d.len() == 1 && d[0].kind == DisagreementKind::SpanOnlyInA, "compare extra span");
    let swapped = doc(text, vec![record("John Doe", &[0], &["Begin_Last_Full", "End_Last_Full"])]);
    let d = annotate::compare(&a, &swapped).unwrap();
    check(d.len() == 1 && d[0].kind == DisagreementKind::FormMismatch, "compare form mismatch");
    check(annotate::compare(&a, &doc("other text", vec![])).is_err(), "compare different texts");

    let page = "Doe said Doesn't matter, and Doe left .";
    check(annotate::index_positions(page, "Doe", false) == vec![0, 29], "index twice");
    check(annotate::index_positions(page, "Smith", false).is_empty(), "index absent");
    check(!annotate::index_positions(page, "Doe", false).contains(&9), "index word boundary");

    let group = doc("Doe J and Roe K wrote with Doe J .", vec![record("Roe K", &[10], &["Begin_Last_Full", "End_First_Initial"])]);
    let template: NameTemplate = "X y".parse().unwrap();
    let labels: Vec<TokenLabel> = ["Begin_Last_Full", "End_First_Initial"].iter().map(|s| s.parse().unwrap()).collect();
    let (labelled, report) = annotate::group_label(&group, &template, &labels).unwrap();
    check(report.labelled == vec![0, 27] && report.collisions.is_empty(), "group-label matches");
    check(labelled.records[0] == group.records[0] && annotate::validate(&labelled).passed(), "group-label keeps records");

    let dir = tempfile::tempdir().unwrap();
    let mut round_trip_failures = 0;
    for seed in 0..100u64 {
        let docs = synth_generate(seed, &SynthParams {
            num_docs: 3,
            ..SynthParams::default()
        });
        let root = dir.path().join(seed.to_string());
        write_corpus(&docs, &root).unwrap();
        match read_corpus(&root) {
            Ok(back) if back == docs && back.iter().all(|d| annotate::validate(d).passed()) => {}
            _ => round_trip_failures += 1,
        }
    }
    check(round_trip_failures == 0, "corpus round trip");
    let passed = problems.is_empty();
    outcome(
        passed,
        if passed {
            "mask, validate, compare, index and group-label fixtures hold; 100 generator seeds round-trip".to_string()
        } else {
            format!("failed: {} ({round_trip_failures} round-trip failures)", problems.join(", "))
        },
    )
}

fn main() {
    let criteria: [(u8, &str, bool, fn() -> Outcome); 10] = [
        (1, "CRF oracle equivalence", true, crf_oracle),
        (2, "gradient suite", true, gradient_suite),
        (3, "chunker round trip", true, chunker_round_trip),
        (4, "context propagation", true, context_propagation),
        (5, "overlap and hops on long documents", false, directional_overlap),
        (6, "adaptive overlap robustness", false, adaptive_robustness),
        (7, "co-guided coupling", false, cognn_coupling),
        (8, "metrics exactness", true, metrics_exactness),
        (9, "label algebra", true, label_algebra),
        (10, "annotation ops", true, annotation_ops),
    ];
    let only: Option<u8> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut hard_failures = 0;
    for (id, title, hard, run) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let r = run();
        let status = if r.passed { "PASS" } else { "FAIL" };
        let kind = if hard { "" } else { " [report-only]" };
        println!("criterion {id:2} {status} {title}{kind}: {}", r.detail);
        if hard && !r.passed {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
