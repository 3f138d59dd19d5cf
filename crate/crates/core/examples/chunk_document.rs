//! Cut a long document into overlapped chunks under fixed and adaptive
//! overlap policies, then reassemble it.
//!
//! Usage: `cargo run --example chunk_document [capacity]`

use namerec::chunking::{chunk_document, reassemble, DocumentPieces, OverlapPolicy};

fn main() -> namerec::Result<()> {
    let capacity: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let pieces: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let doc = DocumentPieces::new("demo", pieces, vec![9, 17, 30, 40]);
    let adaptive = OverlapPolicy::default_adaptive(capacity);
    for (name, policy) in [("fixed 0.5", OverlapPolicy::fixed(0.5)?), ("fixed 0", OverlapPolicy::fixed(0.0)?), ("adaptive", adaptive)] {
        let chunked = chunk_document(&doc, capacity, &policy)?;
        println!("{name}: overlap {} over {} chunks", chunked.effective_k, chunked.chunks.len());
        for c in &chunked.chunks {
            println!("  {c}");
        }
        assert_eq!(reassemble(&chunked)?, doc.pieces);
    }
    let adaptive = OverlapPolicy::default_adaptive(512);
    for len in [300, 700, 1200, 1800, 2500, 5000] {
        println!("adaptive ratio for {len} pieces at capacity 512: {}", adaptive.ratio_for(len));
    }
    Ok(())
}
