//! Generate a seeded synthetic corpus, write it in the on-disk layout and
//! read it back.
//!
//! Usage: `cargo run --example synth_corpus [seed] [out-dir]`

use namerec::corpus::{read_corpus, synth_generate, write_corpus, SynthParams};

fn main() -> namerec::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let docs = synth_generate(seed, &SynthParams {
        num_docs: 3,
        ..SynthParams::default()
    });
    for d in &docs {
        println!("== {} ({} chars, {} records)", d.doc_id, d.text.chars().count(), d.records.len());
        println!("{}", d.text);
        for r in &d.records {
            println!("  {:24} at {:?}: {}", r.text, r.positions, r.labels.join(" "));
        }
    }
    if let Some(out) = args.next() {
        write_corpus(&docs, &out)?;
        assert_eq!(read_corpus(&out)?, docs);
        println!("wrote and re-read {out}");
    }
    Ok(())
}
