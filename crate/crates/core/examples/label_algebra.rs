//! The three-axis name-form labels: label spaces, span decoding and the
//! late-fusion union of per-axis predictions.

use namerec::labels::{
    decode_spans, merge_late, name_form_combinations, spans_to_labels, Axis, AxisTag, Bie, Fi, Fml, LabelSpace, NameSpan,
    TokenLabel,
};

fn main() -> namerec::Result<()> {
    println!("fused space: {} classes", LabelSpace::fused().len());
    for axis in [Axis::Bie, Axis::Fml, Axis::Fi] {
        let space = LabelSpace::axis(axis);
        println!("{axis} axis: {:?}", space.classes());
    }
    println!("two-token name form combinations: {}", name_form_combinations(2));

    // "Johnny van der Doe": First, Middle, Middle, Last.
    let tokens = ["Johnny", "van", "der", "Doe", "visited"];
    let span = NameSpan::with_forms(
        0,
        3,
        vec![(Fml::First, Fi::Full), (Fml::Middle, Fi::Full), (Fml::Middle, Fi::Full), (Fml::Last, Fi::Full)],
    );
    let labels = spans_to_labels(&[span], tokens.len())?;
    for (t, l) in tokens.iter().zip(&labels) {
        println!("  {t:8} {l}");
    }
    println!("decoded back: {:?}", decode_spans(&labels));

    let parsed: TokenLabel = "End_Last_Initial".parse()?;
    println!("parsed {parsed}: bie {:?}, forms {:?}", parsed.bie(), parsed.forms());

    // One axis finds tokens 0-1, another tokens 1-2 and 4.
    let bie = [AxisTag::Bie(Bie::Begin), AxisTag::Bie(Bie::End), AxisTag::Outside, AxisTag::Outside, AxisTag::Outside];
    let fml = [AxisTag::Outside, AxisTag::Fml(Fml::First), AxisTag::Fml(Fml::Last), AxisTag::Outside, AxisTag::Fml(Fml::Last)];
    let merged = merge_late(&[&bie[..], &fml[..]])?;
    println!("late-fusion spans: {:?}", merged.iter().map(NameSpan::bounds).collect::<Vec<_>>());
    Ok(())
}
