//! Linear-chain CRF: likelihood, marginals and Viterbi decoding on a small
//! random instance, checked against brute-force enumeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use namerec::crf::{log_likelihood, log_partition, marginals, sequence_score, viterbi_decode};
use namerec::tensor::Matrix;

fn main() -> namerec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, c) = (4, 3);
    let emissions = Matrix::uniform(n, c, 2.0, &mut rng);
    // Rows and columns c and c + 1 are the start and stop states.
    let transitions = Matrix::uniform(c + 2, c + 2, 1.0, &mut rng);

    let (path, score) = viterbi_decode(&emissions, &transitions)?;
    println!("viterbi path {path:?} score {score:.4}");
    println!("log partition {:.4}", log_partition(&emissions, &transitions)?);
    println!("log p(path) {:.4}", log_likelihood(&emissions, &transitions, &path)?);

    let mut best = (f64::NEG_INFINITY, Vec::new());
    for code in 0..c.pow(n as u32) {
        let labels: Vec<usize> = (0..n).map(|i| code / c.pow(i as u32) % c).collect();
        let s = sequence_score(&emissions, &transitions, &labels)?;
        if s > best.0 {
            best = (s, labels);
        }
    }
    println!("enumeration agrees: {}", best.1 == path);

    let m = marginals(&emissions, &transitions)?;
    for i in 0..n {
        println!("position {i} marginals {:?}", m.row(i).iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
