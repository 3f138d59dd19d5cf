//! Three-axis name-form labels.
//!
//! Every name token is described along three independent axes: its position
//! in the name ([`Bie`]), its anthroponymic role ([`Fml`]) and its surface form
//! ([`Fi`]). Non-name tokens carry [`TokenLabel::Outside`]. Fused class strings
//! have the fixed form `BIE_FML_FI`, e.g. `Begin_First_Full`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// String used for the outside class in every label space.
pub const OUTSIDE: &str = "Outside";

macro_rules! axis_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => stringify!($variant)),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $(stringify!($variant) => Ok($name::$variant),)+
                    _ => Err(Error::UnknownLabel(s.to_string())),
                }
            }
        }
    };
}

axis_enum!(
    /// Position of a token inside a name.
    Bie { Begin, Inside, End }
);
axis_enum!(
    /// Role of a token: first, middle or last name.
    Fml { First, Middle, Last }
);
axis_enum!(
    /// Whether a token is a full word or an initial.
    Fi { Full, Initial }
);

/// One of the three annotation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Bie,
    Fml,
    Fi,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Bie, Axis::Fml, Axis::Fi];

    /// Axis values in canonical order, as class strings.
    pub fn value_names(self) -> Vec<&'static str> {
        match self {
            Axis::Bie => Bie::ALL.iter().map(|v| v.as_str()).collect(),
            Axis::Fml => Fml::ALL.iter().map(|v| v.as_str()).collect(),
            Axis::Fi => Fi::ALL.iter().map(|v| v.as_str()).collect(),
        }
    }

    pub fn cardinality(self) -> usize {
        match self {
            Axis::Bie => Bie::ALL.len(),
            Axis::Fml => Fml::ALL.len(),
            Axis::Fi => Fi::ALL.len(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Bie => "BIE",
            Axis::Fml => "FML",
            Axis::Fi => "FI",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BIE" => Ok(Axis::Bie),
            "FML" => Ok(Axis::Fml),
            "FI" => Ok(Axis::Fi),
            _ => Err(Error::Scheme(format!("unknown axis {s:?}"))),
        }
    }
}

/// A per-token prediction along a single axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisTag {
    Outside,
    Bie(Bie),
    Fml(Fml),
    Fi(Fi),
}

impl AxisTag {
    pub fn is_name(self) -> bool {
        !matches!(self, AxisTag::Outside)
    }
}

/// Label of a single token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenLabel {
    Outside,
    Name { bie: Bie, fml: Fml, fi: Fi },
}

impl TokenLabel {
    pub fn name(bie: Bie, fml: Fml, fi: Fi) -> Self {
        TokenLabel::Name { bie, fml, fi }
    }

    pub fn is_name(&self) -> bool {
        matches!(self, TokenLabel::Name { .. })
    }

    pub fn bie(&self) -> Option<Bie> {
        match *self {
            TokenLabel::Name { bie, .. } => Some(bie),
            TokenLabel::Outside => None,
        }
    }

    pub fn forms(&self) -> Option<(Fml, Fi)> {
        match *self {
            TokenLabel::Name { fml, fi, .. } => Some((fml, fi)),
            TokenLabel::Outside => None,
        }
    }

    /// Projection of this label onto one axis.
    pub fn axis_tag(&self, axis: Axis) -> AxisTag {
        match (*self, axis) {
            (TokenLabel::Outside, _) => AxisTag::Outside,
            (TokenLabel::Name { bie, .. }, Axis::Bie) => AxisTag::Bie(bie),
            (TokenLabel::Name { fml, .. }, Axis::Fml) => AxisTag::Fml(fml),
            (TokenLabel::Name { fi, .. }, Axis::Fi) => AxisTag::Fi(fi),
        }
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TokenLabel::Outside => f.write_str(OUTSIDE),
            TokenLabel::Name { bie, fml, fi } => f.write_str(&fuse_early(bie, fml, fi)),
        }
    }
}

impl FromStr for TokenLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == OUTSIDE {
            return Ok(TokenLabel::Outside);
        }
        let mut parts = s.split('_');
        let (Some(b), Some(f), Some(i), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::UnknownLabel(s.to_string()));
        };
        Ok(TokenLabel::Name {
            bie: b.parse()?,
            fml: f.parse()?,
            fi: i.parse()?,
        })
    }
}

/// Fused class string for one name token, `BIE_FML_FI`.
pub fn fuse_early(bie: Bie, fml: Fml, fi: Fi) -> String {
    format!("{bie}_{fml}_{fi}")
}

/// Number of distinct fused form sequences for a name of `tokens` tokens.
pub fn name_form_combinations(tokens: u32) -> usize {
    (Bie::ALL.len() * Fml::ALL.len() * Fi::ALL.len()).pow(tokens)
}

/// How multi-axis supervision is combined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fusion {
    /// One model on a single axis.
    NoFusion(Axis),
    /// One model on the cartesian product of all three axes.
    Early,
    /// One model per axis, predictions merged afterwards.
    Late,
    /// Two coupled models: the span view (BIE) and one form view.
    InNetwork,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelScheme {
    axes: Vec<Axis>,
    fusion: Fusion,
}

impl LabelScheme {
    pub fn new(mut axes: Vec<Axis>, fusion: Fusion) -> Result<Self> {
        axes.sort();
        axes.dedup();
        match &fusion {
            Fusion::NoFusion(axis) => {
                if axes != [*axis] {
                    return Err(Error::Scheme(format!(
                        "no-fusion scheme must name exactly its axis {axis}"
                    )));
                }
            }
            Fusion::Early => {
                if axes.len() != 3 {
                    return Err(Error::Scheme("early fusion uses all three axes".into()));
                }
            }
            Fusion::Late => {
                if axes.len() < 2 {
                    return Err(Error::Scheme("late fusion needs at least two axes".into()));
                }
            }
            Fusion::InNetwork => {
                if axes.len() != 2 || axes[0] != Axis::Bie {
                    return Err(Error::Scheme(
                        "in-network fusion pairs BIE with exactly one form axis".into(),
                    ));
                }
            }
        }
        Ok(LabelScheme { axes, fusion })
    }

    pub fn no_fusion(axis: Axis) -> Self {
        LabelScheme {
            axes: vec![axis],
            fusion: Fusion::NoFusion(axis),
        }
    }

    pub fn early() -> Self {
        LabelScheme {
            axes: Axis::ALL.to_vec(),
            fusion: Fusion::Early,
        }
    }

    pub fn in_network(form_axis: Axis) -> Result<Self> {
        LabelScheme::new(vec![Axis::Bie, form_axis], Fusion::InNetwork)
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn fusion(&self) -> &Fusion {
        &self.fusion
    }

    /// One label space per model the scheme trains.
    pub fn label_spaces(&self) -> Vec<LabelSpace> {
        match self.fusion {
            Fusion::Early => vec![LabelSpace::fused()],
            _ => self.axes.iter().map(|&a| LabelSpace::axis(a)).collect(),
        }
    }
}

/// Class inventory of a single-model scheme (no fusion or early fusion).
///
/// Multi-model schemes have one space per model; use
/// [`LabelScheme::label_spaces`] for those.
pub fn build_label_space(scheme: &LabelScheme) -> Result<LabelSpace> {
    match scheme.fusion {
        Fusion::NoFusion(axis) => Ok(LabelSpace::axis(axis)),
        Fusion::Early => Ok(LabelSpace::fused()),
        Fusion::Late | Fusion::InNetwork => Err(Error::Scheme(
            "scheme trains several models; it has one label space per model".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Axis(Axis),
    Fused,
}

/// Ordered, duplicate-free list of class strings. Index 0 is always `Outside`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    kind: SpaceKind,
    classes: Vec<String>,
}

impl LabelSpace {
    pub fn axis(axis: Axis) -> Self {
        let mut classes = vec![OUTSIDE.to_string()];
        classes.extend(axis.value_names().into_iter().map(str::to_string));
        LabelSpace {
            kind: SpaceKind::Axis(axis),
            classes,
        }
    }

    pub fn fused() -> Self {
        let mut classes = vec![OUTSIDE.to_string()];
        for &b in Bie::ALL {
            for &f in Fml::ALL {
                for &i in Fi::ALL {
                    classes.push(fuse_early(b, f, i));
                }
            }
        }
        LabelSpace {
            kind: SpaceKind::Fused,
            classes,
        }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_name(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// Class index of a token label in this space.
    pub fn encode(&self, label: &TokenLabel) -> usize {
        match (self.kind, label) {
            (_, TokenLabel::Outside) => 0,
            (SpaceKind::Fused, TokenLabel::Name { bie, fml, fi }) => {
                1 + (*bie as usize) * 6 + (*fml as usize) * 2 + (*fi as usize)
            }
            (SpaceKind::Axis(Axis::Bie), TokenLabel::Name { bie, .. }) => 1 + *bie as usize,
            (SpaceKind::Axis(Axis::Fml), TokenLabel::Name { fml, .. }) => 1 + *fml as usize,
            (SpaceKind::Axis(Axis::Fi), TokenLabel::Name { fi, .. }) => 1 + *fi as usize,
        }
    }

    /// Axis tag of a class index (axis spaces only).
    pub fn axis_tag(&self, index: usize) -> Option<AxisTag> {
        if index == 0 {
            return Some(AxisTag::Outside);
        }
        let i = index - 1;
        match self.kind {
            SpaceKind::Axis(Axis::Bie) => Bie::ALL.get(i).map(|&v| AxisTag::Bie(v)),
            SpaceKind::Axis(Axis::Fml) => Fml::ALL.get(i).map(|&v| AxisTag::Fml(v)),
            SpaceKind::Axis(Axis::Fi) => Fi::ALL.get(i).map(|&v| AxisTag::Fi(v)),
            SpaceKind::Fused => None,
        }
    }

    /// Full token label of a class index (fused space only).
    pub fn token_label(&self, index: usize) -> Option<TokenLabel> {
        match self.kind {
            SpaceKind::Fused => self.class_name(index).and_then(|c| c.parse().ok()),
            SpaceKind::Axis(_) => None,
        }
    }
}

/// A contiguous name, token indices inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NameSpan {
    pub start: usize,
    pub end: usize,
    pub forms: Option<Vec<(Fml, Fi)>>,
}

impl NameSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        NameSpan {
            start,
            end,
            forms: None,
        }
    }

    pub fn with_forms(start: usize, end: usize, forms: Vec<(Fml, Fi)>) -> Self {
        debug_assert_eq!(forms.len(), end - start + 1);
        NameSpan {
            start,
            end,
            forms: Some(forms),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    /// Per-token labels for this span. Missing forms fall back to
    /// [`positional_forms`] with every token `Full`.
    pub fn token_labels(&self) -> Vec<TokenLabel> {
        let len = self.len();
        let forms = self
            .forms
            .clone()
            .unwrap_or_else(|| positional_forms(len).into_iter().map(|f| (f, Fi::Full)).collect());
        forms
            .into_iter()
            .enumerate()
            .map(|(i, (fml, fi))| TokenLabel::name(span_position(i, len), fml, fi))
            .collect()
    }
}

/// BIE tag of the `i`-th token of a `len`-token name. Single-token names are `Begin`.
pub fn span_position(i: usize, len: usize) -> Bie {
    if i == 0 {
        Bie::Begin
    } else if i + 1 == len {
        Bie::End
    } else {
        Bie::Inside
    }
}

/// Role heuristic: first token `First`, last token `Last`, the rest `Middle`.
/// A single-token name is a `Last` name.
pub fn positional_forms(len: usize) -> Vec<Fml> {
    (0..len)
        .map(|i| {
            if i + 1 == len {
                Fml::Last
            } else if i == 0 {
                Fml::First
            } else {
                Fml::Middle
            }
        })
        .collect()
}

/// Maximal runs of name tokens. A `Begin` inside a run starts a new span.
pub fn decode_spans(labels: &[TokenLabel]) -> Vec<NameSpan> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, Vec<(Fml, Fi)>)> = None;
    for (i, label) in labels.iter().enumerate() {
        match *label {
            TokenLabel::Outside => {
                if let Some((start, forms)) = current.take() {
                    spans.push(NameSpan::with_forms(start, i - 1, forms));
                }
            }
            TokenLabel::Name { bie, fml, fi } => {
                if bie == Bie::Begin {
                    if let Some((start, forms)) = current.take() {
                        spans.push(NameSpan::with_forms(start, i - 1, forms));
                    }
                }
                current.get_or_insert_with(|| (i, Vec::new())).1.push((fml, fi));
            }
        }
    }
    if let Some((start, forms)) = current {
        spans.push(NameSpan::with_forms(start, labels.len() - 1, forms));
    }
    spans
}

/// Per-token labels of a span set over `len` tokens.
pub fn spans_to_labels(spans: &[NameSpan], len: usize) -> Result<Vec<TokenLabel>> {
    let mut labels = vec![TokenLabel::Outside; len];
    for span in spans {
        if span.end >= len {
            return Err(Error::OutOfRange {
                what: "token",
                index: span.end,
                size: len,
            });
        }
        for (offset, label) in span.token_labels().into_iter().enumerate() {
            labels[span.start + offset] = label;
        }
    }
    Ok(labels)
}

/// Late-fusion merge: a token is a name token if any axis model says so;
/// connected runs of name tokens become spans.
pub fn merge_late<S: AsRef<[AxisTag]>>(predictions: &[S]) -> Result<Vec<NameSpan>> {
    let Some(first) = predictions.first() else {
        return Ok(Vec::new());
    };
    let len = first.as_ref().len();
    for p in predictions {
        if p.as_ref().len() != len {
            return Err(Error::LengthMismatch {
                what: "per-axis predictions",
                left: len,
                right: p.as_ref().len(),
            });
        }
    }
    let is_name = |i: usize| predictions.iter().any(|p| p.as_ref()[i].is_name());
    let mut spans = Vec::new();
    let mut start = None;
    for i in 0..len {
        match (is_name(i), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(NameSpan::new(s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(NameSpan::new(s, len - 1));
    }
    Ok(spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn l(s: &str) -> TokenLabel {
        s.parse().unwrap()
    }

    #[test]
    fn space_sizes() {
        assert_eq!(LabelSpace::fused().len(), 19);
        assert_eq!(LabelSpace::axis(Axis::Bie).len(), 4);
        assert_eq!(LabelSpace::axis(Axis::Fml).len(), 4);
        assert_eq!(
            build_label_space(&LabelScheme::no_fusion(Axis::Fi)).unwrap().classes(),
            ["Outside", "Full", "Initial"]
        );
        assert_eq!(name_form_combinations(2), 324);
    }

    #[test]
    fn fused_strings_are_injective() {
        let mut seen = HashSet::new();
        for &b in Bie::ALL {
            for &f in Fml::ALL {
                for &i in Fi::ALL {
                    assert!(seen.insert(fuse_early(b, f, i)));
                }
            }
        }
        assert_eq!(seen.len(), 18);
        assert_eq!(fuse_early(Bie::Begin, Fml::First, Fi::Full), "Begin_First_Full");
        assert_eq!(fuse_early(Bie::End, Fml::Last, Fi::Full), "End_Last_Full");
    }

    #[test]
    fn encode_matches_class_names() {
        let space = LabelSpace::fused();
        for (i, name) in space.classes().iter().enumerate() {
            let label = l(name);
            assert_eq!(space.encode(&label), i);
            assert_eq!(space.token_label(i), Some(label));
        }
        for axis in Axis::ALL {
            let space = LabelSpace::axis(axis);
            let label = l("Inside_Middle_Initial");
            let idx = space.encode(&label);
            assert_eq!(space.axis_tag(idx), Some(label.axis_tag(axis)));
        }
    }

    #[test]
    fn scheme_validation() {
        assert!(LabelScheme::new(vec![Axis::Fml], Fusion::NoFusion(Axis::Bie)).is_err());
        assert!(LabelScheme::new(vec![Axis::Fml, Axis::Fi], Fusion::Early).is_err());
        assert!(LabelScheme::new(vec![Axis::Fi], Fusion::Late).is_err());
        assert!(LabelScheme::in_network(Axis::Fi).is_ok());
        assert!(LabelScheme::new(vec![Axis::Fml, Axis::Fi], Fusion::InNetwork).is_err());
        assert_eq!(
            LabelScheme::new(vec![Axis::Bie, Axis::Fml], Fusion::Late)
                .unwrap()
                .label_spaces()
                .len(),
            2
        );
    }

    #[test]
    fn decode_examples() {
        let spans = decode_spans(&[l("Begin_First_Full"), l("End_Last_Full"), TokenLabel::Outside]);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].bounds(), (0, 1));

        assert!(decode_spans(&[TokenLabel::Outside; 4]).is_empty());

        let spans = decode_spans(&[
            l("Begin_First_Full"),
            l("Inside_Last_Full"),
            l("Inside_Last_Full"),
            l("End_Last_Full"),
        ]);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].bounds(), (0, 3));
    }

    #[test]
    fn begin_splits_abutting_names() {
        let spans = decode_spans(&[
            l("Begin_Last_Full"),
            l("End_First_Initial"),
            l("Begin_Last_Full"),
            l("End_First_Initial"),
        ]);
        let bounds: Vec<_> = spans.iter().map(NameSpan::bounds).collect();
        assert_eq!(bounds, [(0, 1), (2, 3)]);
    }

    #[test]
    fn merge_late_union() {
        let mark = |idx: &[usize], n: usize, tag: AxisTag| {
            (0..n)
                .map(|i| if idx.contains(&i) { tag } else { AxisTag::Outside })
                .collect::<Vec<_>>()
        };
        let b = mark(&[0, 1], 4, AxisTag::Bie(Bie::Begin));
        let f = mark(&[1, 2], 4, AxisTag::Fml(Fml::Last));
        let spans = merge_late(&[b.clone(), f]).unwrap();
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].bounds(), (0, 2));

        let none = mark(&[], 4, AxisTag::Outside);
        assert!(merge_late(&[none.clone(), none.clone(), none]).unwrap().is_empty());

        assert!(merge_late(&[b, mark(&[], 3, AxisTag::Outside)]).is_err());
    }

    #[test]
    fn label_string_round_trip() {
        for class in LabelSpace::fused().classes() {
            assert_eq!(&l(class).to_string(), class);
        }
        assert!("Begin_First".parse::<TokenLabel>().is_err());
        assert!("begin_first_full".parse::<TokenLabel>().is_err());
    }
}
