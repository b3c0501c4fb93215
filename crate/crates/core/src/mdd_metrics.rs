//! Mispronunciation detection counts, precision, recall and F1.
//!
//! A canonical position is *detected* when the hypothesis aligns to it with
//! a substitution or deletion, and *truly* mispronounced when the human
//! annotation says so. Counts are pooled over the corpus before scores are
//! taken.

use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align, EditCounts, EditKind, ErrorRate};
use crate::corpus::{Corpus, Utterance};
use crate::parsing::ParseOutcome;
use crate::phoneset::{Phone, PhoneSequence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MddError {
    #[error("flag vectors differ in length: {detected} detected vs {truth} annotated")]
    LengthMismatch { detected: usize, truth: usize },
    #[error("no utterance has a scorable MDD outcome")]
    NoScorableUtterances,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MddCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl MddCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for MddCounts {
    type Output = MddCounts;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for MddCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
        self.tn += rhs.tn;
    }
}

impl Sum for MddCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(MddCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MddScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MddCounts,
    /// Set when a denominator was zero and the affected score defaulted to 0.
    pub degenerate: bool,
}

/// Which sequence PER is measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerReference {
    #[default]
    Perceived,
    Canonical,
}

impl FromStr for PerReference {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "perceived" => Ok(PerReference::Perceived),
            "canonical" => Ok(PerReference::Canonical),
            other => Err(format!("unknown PER reference {other:?} (expected perceived or canonical)")),
        }
    }
}

/// One flag per canonical position: true where the hypothesis substitutes
/// or deletes it.
pub fn flag_detected(canonical: &PhoneSequence, hypothesis: &PhoneSequence) -> Vec<bool> {
    align(canonical.phones(), hypothesis.phones())
        .ref_ops()
        .map(|op| matches!(op.kind, EditKind::Substitute | EditKind::Delete))
        .collect()
}

pub fn mdd_counts(detected: &[bool], truth: &[bool]) -> Result<MddCounts, MddError> {
    if detected.len() != truth.len() {
        return Err(MddError::LengthMismatch {
            detected: detected.len(),
            truth: truth.len(),
        });
    }
    let mut c = MddCounts::default();
    for (&d, &t) in detected.iter().zip(truth) {
        match (d, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio_or_zero(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn mdd_scores(counts: MddCounts) -> MddScores {
    let (precision, p_degenerate) = ratio_or_zero(counts.tp, counts.tp + counts.fp);
    let (recall, r_degenerate) = ratio_or_zero(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MddScores {
        precision,
        recall,
        f1,
        counts,
        degenerate: p_degenerate || r_degenerate,
    }
}

/// For each canonical position, the phone aligned to it in `other`, or
/// `None` where `other` deletes it.
fn aligned_phones<'a>(canonical: &PhoneSequence, other: &'a PhoneSequence) -> Vec<Option<&'a Phone>> {
    align(canonical.phones(), other.phones())
        .ref_ops()
        .map(|op| op.hyp_index.map(|h| &other.phones()[h]))
        .collect()
}

/// Per-utterance MDD result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMdd {
    pub utt_id: String,
    pub counts: MddCounts,
    /// Hypothesis phones with no canonical anchor.
    pub insertions: u64,
    /// True positives where the hypothesis heard the same phone (or the same
    /// deletion) as the annotators.
    pub diagnosis_correct: u64,
    pub per_counts: EditCounts,
    pub per: ErrorRate,
}

pub fn utterance_mdd(utt: &Utterance, hypothesis: &PhoneSequence, reference: PerReference) -> Result<UtteranceMdd, MddError> {
    let alignment = align(utt.canonical_phones.phones(), hypothesis.phones());
    let detected: Vec<bool> = alignment
        .ref_ops()
        .map(|op| matches!(op.kind, EditKind::Substitute | EditKind::Delete))
        .collect();
    let counts = mdd_counts(&detected, &utt.mispronounced)?;

    let heard = aligned_phones(&utt.canonical_phones, &utt.perceived_phones);
    let said: Vec<Option<&Phone>> = alignment
        .ref_ops()
        .map(|op| op.hyp_index.map(|h| &hypothesis.phones()[h]))
        .collect();
    let diagnosis_correct = (0..detected.len())
        .filter(|&i| detected[i] && utt.mispronounced[i] && heard[i] == said[i])
        .count() as u64;

    let per_ref = match reference {
        PerReference::Perceived => &utt.perceived_phones,
        PerReference::Canonical => &utt.canonical_phones,
    };
    let per_alignment = align(per_ref.phones(), hypothesis.phones());
    let per = per_alignment
        .error_rate()
        .map_err(|_| MddError::NoScorableUtterances)?;
    Ok(UtteranceMdd {
        utt_id: utt.utt_id.clone(),
        counts,
        insertions: alignment.counts.insertions,
        diagnosis_correct,
        per_counts: per_alignment.counts,
        per,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMdd {
    pub scores: MddScores,
    pub per: ErrorRate,
    pub per_counts: EditCounts,
    pub per_reference: PerReference,
    pub insertions: u64,
    pub diagnosis_correct: u64,
    /// diagnosis_correct / TP, absent when TP is 0.
    pub diagnosis_accuracy: Option<f64>,
    pub n: usize,
    pub utterances: Vec<UtteranceMdd>,
}

/// Micro-averaged MDD over every outcome with a parsed MDD payload whose
/// utterance is in `corpus`, ordered by utt_id.
pub fn corpus_mdd(corpus: &Corpus, outcomes: &[ParseOutcome], reference: PerReference) -> Result<CorpusMdd, MddError> {
    let mut rows = Vec::new();
    for o in outcomes {
        let (Some(m), Some(utt)) = (o.mdd(), corpus.get(&o.utt_id)) else {
            continue;
        };
        rows.push(utterance_mdd(utt, &m.phoneme_transcript, reference)?);
    }
    aggregate(rows, reference)
}

/// Pools per-utterance rows. Order of `rows` does not affect the scores.
pub fn aggregate(mut rows: Vec<UtteranceMdd>, reference: PerReference) -> Result<CorpusMdd, MddError> {
    if rows.is_empty() {
        return Err(MddError::NoScorableUtterances);
    }
    rows.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let counts: MddCounts = rows.iter().map(|r| r.counts).sum();
    let per_counts: EditCounts = rows.iter().map(|r| r.per_counts).sum();
    let diagnosis_correct = rows.iter().map(|r| r.diagnosis_correct).sum();
    Ok(CorpusMdd {
        scores: mdd_scores(counts),
        per: per_counts.error_rate().map_err(|_| MddError::NoScorableUtterances)?,
        per_counts,
        per_reference: reference,
        insertions: rows.iter().map(|r| r.insertions).sum(),
        diagnosis_correct,
        diagnosis_accuracy: (counts.tp > 0).then(|| diagnosis_correct as f64 / counts.tp as f64),
        n: rows.len(),
        utterances: rows,
    })
}
