//! Train the co-guided tagger and the single-network baseline on the same 50
//! synthetic sentences and compare held-out token-level F1.
//!
//! Usage: `cargo run --release --example cognn_vs_baseline [seed]`

use namerec::experiments::cognn_study;

fn main() -> namerec::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let (co, single) = cognn_study(seed)?;
    println!("co-guided: token {}", co.token);
    println!("           name  {}", co.name);
    println!("single:    token {}", single.token);
    println!("           name  {}", single.name);
    println!("difference in token F1: {:+.2}", 100.0 * (co.token.f1 - single.token.f1));
    Ok(())
}
