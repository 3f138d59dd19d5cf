//! Precision/recall/F1, Cohen's kappa and McNemar's test.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{AxisTag, NameSpan, TokenLabel, OUTSIDE};

/// Anything with a distinguished non-entity value.
pub trait Tag: PartialEq {
    fn is_outside(&self) -> bool;
}

impl Tag for TokenLabel {
    fn is_outside(&self) -> bool {
        !self.is_name()
    }
}

impl Tag for AxisTag {
    fn is_outside(&self) -> bool {
        !self.is_name()
    }
}

impl Tag for String {
    fn is_outside(&self) -> bool {
        self.as_str().is_outside()
    }
}

impl Tag for &str {
    fn is_outside(&self) -> bool {
        *self == OUTSIDE || *self == "O"
    }
}

impl Tag for usize {
    /// Class index 0 is the outside class in every label space.
    fn is_outside(&self) -> bool {
        *self == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfReport {
    /// Empty denominators give 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PrfReport {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Micro-average: sum the counts and recompute.
    pub fn merge(&self, other: &PrfReport) -> PrfReport {
        PrfReport::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }

    pub fn csv_header() -> &'static str {
        "tp,fp,fn,precision,recall,f1"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1
        )
    }
}

impl fmt::Display for PrfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P {:6.2}  R {:6.2}  F {:6.2}  (tp {}, fp {}, fn {})",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            self.tp,
            self.fp,
            self.fn_
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenMode {
    /// A token counts if both sides mark it as a name, whatever the class.
    SpanOnly,
    /// Classes must match; a class mismatch is one false positive and one false negative.
    FineGrained,
}

pub fn token_prf<T: Tag>(pred: &[T], gold: &[T], mode: TokenMode) -> Result<PrfReport> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch {
            what: "predicted vs gold tokens",
            left: pred.len(),
            right: gold.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        match (p.is_outside(), g.is_outside()) {
            (true, true) => {}
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {
                if mode == TokenMode::SpanOnly || p == g {
                    tp += 1;
                } else {
                    fp += 1;
                    fn_ += 1;
                }
            }
        }
    }
    Ok(PrfReport::from_counts(tp, fp, fn_))
}

/// Exact span matching; with `strict`, per-token forms must match as well.
pub fn name_prf(pred: &[NameSpan], gold: &[NameSpan], strict: bool) -> PrfReport {
    let mut remaining: HashMap<(usize, usize), Vec<&NameSpan>> = HashMap::new();
    for g in gold {
        remaining.entry(g.bounds()).or_default().push(g);
    }
    let mut tp = 0;
    for p in pred {
        let Some(candidates) = remaining.get_mut(&p.bounds()) else {
            continue;
        };
        let hit = candidates
            .iter()
            .position(|g| !strict || g.forms == p.forms);
        if let Some(i) = hit {
            candidates.swap_remove(i);
            tp += 1;
        }
    }
    PrfReport::from_counts(tp, pred.len() - tp, gold.len() - tp)
}

/// Cohen's kappa between two categorical annotation sequences.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "annotation sequences",
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("kappa needs at least one item"));
    }
    let n = a.len() as f64;
    let mut ma: HashMap<&T, usize> = HashMap::new();
    let mut mb: HashMap<&T, usize> = HashMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = ma
        .iter()
        .map(|(k, &ca)| ca as f64 * mb.get(k).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Kappa from a square contingency table (`table[i][j]`: A said i, B said j).
pub fn kappa_from_table(table: &[Vec<usize>]) -> Result<f64> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, row) in table.iter().enumerate() {
        if row.len() != table.len() {
            return Err(Error::shape("kappa_from_table", "table is not square"));
        }
        for (j, &count) in row.iter().enumerate() {
            a.extend(std::iter::repeat(i).take(count));
            b.extend(std::iter::repeat(j).take(count));
        }
    }
    cohen_kappa(&a, &b)
}

/// Chi-square critical value at 0.05 with one degree of freedom.
pub const CHI2_CRITICAL_05: f64 = 3.841;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub b: usize,
    pub c: usize,
    pub statistic: f64,
    pub significant: bool,
}

/// Continuity-corrected McNemar test on the discordant counts.
pub fn mcnemar(b: usize, c: usize) -> Result<McNemar> {
    if b + c == 0 {
        return Err(Error::Empty("McNemar needs at least one discordant pair"));
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff.powi(2) / (b + c) as f64;
    Ok(McNemar {
        b,
        c,
        statistic,
        significant: statistic > CHI2_CRITICAL_05,
    })
}

/// Discordant counts of two systems' per-item correctness:
/// `b` = only the first is right, `c` = only the second is right.
pub fn discordant_pairs(first: &[bool], second: &[bool]) -> Result<(usize, usize)> {
    if first.len() != second.len() {
        return Err(Error::LengthMismatch {
            what: "paired decisions",
            left: first.len(),
            right: second.len(),
        });
    }
    let b = first.iter().zip(second).filter(|(x, y)| **x && !**y).count();
    let c = first.iter().zip(second).filter(|(x, y)| !**x && **y).count();
    Ok((b, c))
}
