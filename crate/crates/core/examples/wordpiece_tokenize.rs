//! Basic tokenization, sub-word pieces and the label round trip between
//! tokens and pieces.

use namerec::tokenizer::{basic_tokenize, propagate_labels, resolve_predictions, tokenize_document, Vocabulary};

fn main() -> namerec::Result<()> {
    let text = "Dr. Johnny van der Doe (MIT) co-wrote papers with Jo Ann.";
    // A deliberately small budget, so longer words split into pieces.
    let sample = "John Doe wrote papers with Ann van der Berg . Johnson co-wrote with Doe .";
    let words: Vec<String> = basic_tokenize(sample).into_iter().map(|t| t.text).collect();
    let vocab = Vocabulary::build(words.iter().map(String::as_str), 70, &["[UNK]"]);
    let doc = tokenize_document(text, &vocab);
    for (i, t) in doc.tokens.iter().enumerate() {
        let pieces: Vec<&str> = doc.subtokens.iter().filter(|s| s.parent == i).map(|s| s.piece.as_str()).collect();
        println!("{:2} [{:2},{:2}) {:8} -> {}", i, t.start, t.end, t.text, pieces.join(" "));
    }
    let token_labels: Vec<usize> = (0..doc.tokens.len()).map(|i| i % 3).collect();
    let piece_labels = propagate_labels(&token_labels, &doc.parents())?;
    let back = resolve_predictions(&piece_labels, &doc.parents(), doc.tokens.len(), 7)?;
    println!("token labels survive the piece round trip: {}", back == token_labels);
    Ok(())
}
