//! Fixed 0.5 overlap against the length-adaptive overlap table, on short
//! documents (where the table picks smaller ratios) and on long ones (where
//! both choose 0.5).
//!
//! Usage: `cargo run --release --example isbert_adaptive [seeds...]`

use namerec::experiments::{long_doc_policy_study, short_doc_study, PolicyPair};

fn show(split: &str, p: &PolicyPair) {
    println!(
        "  {split:>5}: fixed token F {:6.2}  adaptive token F {:6.2}  ({:.0}% of test docs get a different ratio)",
        100.0 * p.fixed.token_f1,
        100.0 * p.adaptive.token_f1,
        100.0 * p.differing_docs
    );
}

fn main() -> namerec::Result<()> {
    let mut seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if seeds.is_empty() {
        seeds.push(1);
    }
    for &seed in &seeds {
        println!("seed {seed}");
        show("short", &short_doc_study(seed)?);
        show("long", &long_doc_policy_study(seed)?);
    }
    Ok(())
}
