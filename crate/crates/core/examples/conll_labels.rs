//! Map CoNLL-style entity tags onto the supported label configurations.

use namerec::corpus::{map_labels, parse_conll, LabelConfig};

const SAMPLE: &str = "\
-DOCSTART- -X- -X- O

Johnny NNP B-NP B-PER
van NNP I-NP I-PER
der NNP I-NP I-PER
Doe NNP I-NP I-PER
joined VBD B-VP O
Acme NNP B-NP B-ORG
in IN B-PP O
Berlin NNP B-NP B-LOC
. . O O
";

fn main() -> namerec::Result<()> {
    let docs = parse_conll(SAMPLE, "inline")?;
    let words: Vec<&str> = docs[0].sentences[0].iter().map(|t| t.text.as_str()).collect();
    for config in [LabelConfig::Per, LabelConfig::Fml, LabelConfig::Conll, LabelConfig::FmlPlusConll] {
        let labels = &map_labels(&docs, config)[0][0];
        println!("{config:?}");
        for (w, l) in words.iter().zip(labels) {
            println!("  {w:8} {l}");
        }
    }
    Ok(())
}
