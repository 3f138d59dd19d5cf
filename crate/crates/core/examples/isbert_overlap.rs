//! Train the chunk encoder without overlap, with overlap 0.5 and one hop, and
//! with overlap 0.5 and two hops, then compare held-out name-level F1.
//!
//! Usage: `cargo run --release --example isbert_overlap [seeds...]`

use namerec::experiments::{overlap_study, pooled_mcnemar};

fn main() -> namerec::Result<()> {
    let mut seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    if seeds.is_empty() {
        seeds.push(1);
    }
    let mut sums = [0.0; 3];
    let mut pooled: [Vec<bool>; 3] = Default::default();
    for &seed in &seeds {
        println!("seed {seed}");
        for (i, run) in overlap_study(seed, 140)?.into_iter().enumerate() {
            println!(
                "  {:>18}: name F {:6.2}  token F {:6.2}  best epoch {:2} of {:2}  {:5.1}s",
                run.label,
                100.0 * run.name_f1,
                100.0 * run.token_f1,
                run.best_epoch,
                run.epochs,
                run.seconds
            );
            sums[i] += run.name_f1;
            pooled[i].extend(run.decisions);
        }
    }
    let n = seeds.len() as f64;
    println!(
        "mean name F: overlap 0 {:.2}, m=1 {:.2}, m=2 {:.2}",
        100.0 * sums[0] / n,
        100.0 * sums[1] / n,
        100.0 * sums[2] / n
    );
    let m = pooled_mcnemar(&pooled[2], &pooled[0])?;
    println!("McNemar m=2 vs overlap 0: b {} c {} statistic {:.2} significant {}", m.b, m.c, m.statistic, m.significant);
    Ok(())
}
