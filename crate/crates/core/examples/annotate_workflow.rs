//! The annotation operations on one document: index a name, label a
//! template group, validate, mask and compare two annotators.

use namerec::annotate::{compare, group_label, index_positions, mask, validate, NameTemplate};
use namerec::corpus::{AnnotatedDocument, AnnotationRecord};
use namerec::labels::TokenLabel;

fn main() -> namerec::Result<()> {
    let mut doc = AnnotatedDocument::new(
        "home",
        "John Doe leads the lab . Publications : Doe J , Roe K . Networks . Doe J , Lee A . Graphs .",
    );
    let positions = index_positions(&doc.text, "John Doe", false);
    doc.records.push(AnnotationRecord {
        text: "John Doe".into(),
        positions,
        labels: vec!["Begin_First_Full".into(), "End_Last_Full".into()],
        comment: None,
    });

    let template: NameTemplate = "X x".parse()?;
    let labels: Vec<TokenLabel> = ["Begin_Last_Full", "End_First_Initial"]
        .iter()
        .map(|l| l.parse())
        .collect::<namerec::Result<_>>()?;
    let (labelled, report) = group_label(&doc, &template, &labels)?;
    println!("template matched at {:?}", report.labelled);
    for r in &labelled.records {
        println!("  {:10} {:?} {}", r.text, r.positions, r.labels.join(" "));
    }
    println!("valid: {}", validate(&labelled).passed());
    println!("masked: {}", mask(&labelled)?);

    let mut second = labelled.clone();
    second.records.retain(|r| r.text != "Lee A");
    second.records[0].labels = vec!["Begin_Last_Full".into(), "End_Last_Full".into()];
    for d in compare(&labelled, &second)? {
        println!("disagreement {:?} on {:?}: {:?} vs {:?}", d.kind, d.text, d.labels_a, d.labels_b);
    }
    Ok(())
}
