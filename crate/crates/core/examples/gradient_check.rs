//! Finite-difference check of the BiLSTM and co-attention gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use namerec::gradcheck::check_gradients;
use namerec::nn::{birnn_encode, coattention, AttentionSharing, BiLstm, CoAttention};
use namerec::params::ParamStore;
use namerec::tensor::Matrix;

fn main() -> namerec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "lstm", 3, 4, &mut rng);
    let att = CoAttention::new(&mut store, "att", 8, 8, 5, AttentionSharing::Shared, &mut rng);
    let x = Matrix::uniform(5, 3, 1.0, &mut rng);
    let probe = Matrix::uniform(5, 8, 1.0, &mut rng);
    let ids: Vec<_> = store.ids().collect();
    let report = check_gradients(&mut store, &ids, 1e-5, |g| {
        let xv = g.constant(x.clone());
        let h = birnn_encode(g, xv, &lstm)?;
        let h2 = g.tanh(h);
        let out = coattention(g, h, h2, &att)?;
        let p = g.constant(probe.clone());
        let y = g.mul(out.h_tilde, p);
        Ok(g.sum(y))
    })?;
    println!("{report:?}");
    Ok(())
}
