//! Token- and name-level scores, agreement and paired significance.

use namerec::eval::{cohen_kappa, discordant_pairs, kappa_from_table, mcnemar, name_prf, token_prf, PrfReport, TokenMode};
use namerec::labels::{Bie, Fi, Fml, NameSpan, TokenLabel};

fn main() -> namerec::Result<()> {
    let first = TokenLabel::name(Bie::Begin, Fml::First, Fi::Full);
    let last = TokenLabel::name(Bie::End, Fml::Last, Fi::Full);
    let o = TokenLabel::Outside;
    let gold = [first, last, o, first, last, o];
    let pred = [first, first, o, first, o, last];

    println!("{}", PrfReport::csv_header());
    println!("{}", token_prf(&pred, &gold, TokenMode::SpanOnly)?.csv_row());
    println!("{}", token_prf(&pred, &gold, TokenMode::FineGrained)?.csv_row());

    let gold_spans = [NameSpan::new(0, 1), NameSpan::new(3, 4)];
    let pred_spans = [NameSpan::new(0, 1), NameSpan::new(3, 3)];
    println!("names: {}", name_prf(&pred_spans, &gold_spans, false));

    println!("kappa from table: {:.3}", kappa_from_table(&[vec![20, 5], vec![10, 15]])?);
    println!("kappa between the two sequences: {:.3}", cohen_kappa(&pred, &gold)?);

    let a = [true, true, true, false, true, true, true, true, false, true];
    let b = [false, true, false, false, false, true, false, true, true, false];
    let (nb, nc) = discordant_pairs(&a, &b)?;
    println!("discordant {nb}/{nc}: {:?}", mcnemar(nb, nc)?);
    Ok(())
}
