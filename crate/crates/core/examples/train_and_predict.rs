//! Train a small chunk encoder on a synthetic corpus, save it, reload it
//! and pre-annotate an unseen page.
//!
//! Usage: `cargo run --release --example train_and_predict [seed]`

use namerec::corpus::{synth_generate, SynthParams};
use namerec::isbert::{train_isbert, IsConfig, Overlap};
use namerec::model::{prediction_records, suggestions, AnyModel};

fn main() -> namerec::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let docs = synth_generate(seed, &SynthParams {
        num_docs: 40,
        ..SynthParams::default()
    });
    let (train, dev) = docs.split_at(32);
    let config = IsConfig {
        overlap: Overlap::Fixed(0.5),
        max_epochs: 8,
        ..namerec::experiments::small_isbert_config(seed)
    };
    let outcome = train_isbert(train, dev, config)?;
    for e in &outcome.log {
        println!("epoch {:2} loss {:9.3} dev name F1 {:.3}", e.epoch, e.loss, e.dev_name_f1);
    }
    let path = std::env::temp_dir().join(format!("namerec-demo-{}.ckpt", std::process::id()));
    outcome.model.save(&path)?;
    let model = AnyModel::load(&path)?;
    std::fs::remove_file(&path).ok();

    let page = "Maria Garcia and J. Smith lead the robotics group . Contact Garcia for details .";
    let found = suggestions(page, &model.predict_document("page", page)?);
    for s in &found {
        println!("{:16} at {:3}: {}", s.text, s.position, s.labels.join(" "));
    }
    println!("{} sidecar records", prediction_records(&found).len());
    Ok(())
}
