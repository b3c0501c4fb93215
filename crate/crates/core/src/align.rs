//! Unit-cost edit-distance alignment for word and phone sequences.

use std::iter::Sum;
use std::str::FromStr;
use std::ops::{Add, AddAssign};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ALIGN_SCHEMA: &str = "capt-align/1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("error rate undefined for an empty reference")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Match,
    Substitute,
    Insert,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ref_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hyp_index: Option<usize>,
}

impl EditOp {
    fn paired(kind: EditKind, r: usize, h: usize) -> Self {
        EditOp {
            kind,
            ref_index: Some(r),
            hyp_index: Some(h),
        }
    }

    fn insert(h: usize) -> Self {
        EditOp {
            kind: EditKind::Insert,
            ref_index: None,
            hyp_index: Some(h),
        }
    }

    fn delete(r: usize) -> Self {
        EditOp {
            kind: EditKind::Delete,
            ref_index: Some(r),
            hyp_index: None,
        }
    }
}

/// I, D, S and match counts plus the reference length N.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditCounts {
    pub insertions: u64,
    pub deletions: u64,
    pub substitutions: u64,
    pub matches: u64,
    pub reference_len: u64,
}

impl EditCounts {
    pub fn errors(&self) -> u64 {
        self.insertions + self.deletions + self.substitutions
    }

    pub fn hypothesis_len(&self) -> u64 {
        self.insertions + self.substitutions + self.matches
    }

    pub fn error_rate(&self) -> Result<ErrorRate, AlignError> {
        if self.reference_len == 0 {
            return Err(AlignError::EmptyReference);
        }
        Ok(ErrorRate {
            errors: self.errors(),
            reference_len: self.reference_len,
        })
    }
}

impl Add for EditCounts {
    type Output = EditCounts;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.substitutions += rhs.substitutions;
        self.matches += rhs.matches;
        self.reference_len += rhs.reference_len;
    }
}

impl Sum for EditCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(EditCounts::default(), Add::add)
    }
}

impl<'a> Sum<&'a EditCounts> for EditCounts {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

/// (I + D + S) / N kept as integers so it can be reduced exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRate {
    pub errors: u64,
    pub reference_len: u64,
}

impl ErrorRate {
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.errors, self.reference_len)
    }

    pub fn value(&self) -> f64 {
        self.errors as f64 / self.reference_len as f64
    }

    pub fn render(&self, precision: usize) -> String {
        format!("{:.*}", precision, self.value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub counts: EditCounts,
}

impl Alignment {
    pub fn distance(&self) -> u64 {
        self.counts.errors()
    }

    /// Op covering each reference position, in reference order.
    pub fn ref_ops(&self) -> impl Iterator<Item = &EditOp> {
        self.ops.iter().filter(|op| op.ref_index.is_some())
    }

    pub fn error_rate(&self) -> Result<ErrorRate, AlignError> {
        error_rate(self)
    }
}

pub fn error_rate(alignment: &Alignment) -> Result<ErrorRate, AlignError> {
    alignment.counts.error_rate()
}

/// Minimal unit-cost alignment of `hypothesis` against `reference`.
///
/// Traceback runs from the end of both sequences and prefers
/// match > substitute > delete > insert at every step.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut cost = vec![0u32; (n + 1) * width];
    for (j, c) in cost.iter_mut().take(width).enumerate() {
        *c = j as u32;
    }
    for i in 1..=n {
        cost[i * width] = i as u32;
        for j in 1..=m {
            let sub = cost[(i - 1) * width + j - 1]
                + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let del = cost[(i - 1) * width + j] + 1;
            let ins = cost[i * width + j - 1] + 1;
            cost[i * width + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = EditCounts {
        reference_len: n as u64,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * width + j];
        if i > 0 && j > 0 {
            let diag = cost[(i - 1) * width + j - 1];
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && diag == here {
                ops.push(EditOp::paired(EditKind::Match, i - 1, j - 1));
                counts.matches += 1;
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == here {
                ops.push(EditOp::paired(EditKind::Substitute, i - 1, j - 1));
                counts.substitutions += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[(i - 1) * width + j] + 1 == here {
            ops.push(EditOp::delete(i - 1));
            counts.deletions += 1;
            i -= 1;
        } else {
            ops.push(EditOp::insert(j - 1));
            counts.insertions += 1;
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops, counts }
}

/// Edit distance only, using a single row sized to the shorter input.
pub fn distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, x) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = (diag + usize::from(x != y))
                .min(above + 1)
                .min(row[j] + 1);
            diag = above;
        }
    }
    row[short.len()]
}

const TERMINAL_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"'];

/// Lowercases, strips surrounding `.,!?;:"` from each token and splits on
/// whitespace. Apostrophes inside tokens are kept.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(TERMINAL_PUNCT).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Word splitting applied to both sides before WER.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordNormalization {
    /// [`normalize_words`].
    #[default]
    Standard,
    /// Whitespace split only.
    Verbatim,
}

impl WordNormalization {
    pub fn apply(self, text: &str) -> Vec<String> {
        match self {
            WordNormalization::Standard => normalize_words(text),
            WordNormalization::Verbatim => text.split_whitespace().map(str::to_owned).collect(),
        }
    }
}

impl FromStr for WordNormalization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(WordNormalization::Standard),
            "verbatim" => Ok(WordNormalization::Verbatim),
            other => Err(format!("unknown word normalization {other:?} (expected standard or verbatim)")),
        }
    }
}
