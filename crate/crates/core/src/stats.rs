//! Pearson correlation with two-sided significance, the APA correlation
//! table, and the accuracy vs PER study.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::mdd_metrics::CorpusMdd;
use crate::parsing::ParseOutcome;

pub const SCATTER_HEADER: &str = "utt_id,per,human_accuracy,predicted_accuracy";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("series lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("{what} needs at least {needed} samples, got {got}")]
    TooFewSamples {
        what: &'static str,
        needed: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Absent when either series is constant.
    pub r: Option<f64>,
    /// Absent when `r` is, or when n < 3.
    pub p_value: Option<f64>,
    pub n: usize,
    pub degenerate: bool,
}

impl CorrelationResult {
    /// `None` when no p-value exists.
    pub fn significant(&self, alpha: f64) -> Option<bool> {
        self.p_value.map(|p| p < alpha)
    }
}

/// Two-sided tail probability P(|T| >= |t|) of Student's t with `df`
/// degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation, computed around the means.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples {
            what: "pcc",
            needed: 2,
            got: n,
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(CorrelationResult {
            r: None,
            p_value: None,
            n,
            degenerate: true,
        });
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = (n >= 3).then(|| {
        let df = (n - 2) as f64;
        if r.abs() == 1.0 {
            0.0
        } else {
            beta_reg(df / 2.0, 0.5, 1.0 - r * r)
        }
    });
    Ok(CorrelationResult {
        r: Some(r),
        p_value,
        n,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Accuracy,
    Fluency,
    Prosodic,
    Total,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Accuracy, Dimension::Fluency, Dimension::Prosodic, Dimension::Total];

    pub fn key(self) -> &'static str {
        match self {
            Dimension::Accuracy => "accuracy",
            Dimension::Fluency => "fluency",
            Dimension::Prosodic => "prosodic",
            Dimension::Total => "total",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Dimension::Accuracy => "Accuracy",
            Dimension::Fluency => "Fluency",
            Dimension::Prosodic => "Prosodic",
            Dimension::Total => "Total",
        }
    }
}

/// Human and predicted scores for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePairSeries {
    pub dimension: Dimension,
    pub human: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl ScorePairSeries {
    pub fn n(&self) -> usize {
        self.human.len()
    }

    pub fn correlate(&self) -> Result<CorrelationResult, StatsError> {
        pcc(&self.predicted, &self.human)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApaPcc {
    pub accuracy: CorrelationResult,
    pub fluency: CorrelationResult,
    pub prosodic: CorrelationResult,
    pub total: CorrelationResult,
}

impl ApaPcc {
    pub fn get(&self, d: Dimension) -> &CorrelationResult {
        match d {
            Dimension::Accuracy => &self.accuracy,
            Dimension::Fluency => &self.fluency,
            Dimension::Prosodic => &self.prosodic,
            Dimension::Total => &self.total,
        }
    }
}

/// Series for each dimension from the parsed APA outcomes whose utterance
/// is in `corpus`. Failed parses are left out.
pub fn apa_series(corpus: &Corpus, outcomes: &[ParseOutcome]) -> Vec<ScorePairSeries> {
    let pairs: Vec<_> = outcomes
        .iter()
        .filter_map(|o| Some((o.apa()?, &corpus.get(&o.utt_id)?.scores)))
        .collect();
    Dimension::ALL
        .iter()
        .map(|&dimension| {
            let (predicted, human) = pairs
                .iter()
                .map(|(p, h)| {
                    let human = match dimension {
                        Dimension::Accuracy => h.accuracy,
                        Dimension::Fluency => h.fluency,
                        Dimension::Prosodic => h.prosodic,
                        Dimension::Total => h.total,
                    };
                    (f64::from(p.get(dimension.key()).expect("dimension key")), f64::from(human))
                })
                .unzip();
            ScorePairSeries {
                dimension,
                human,
                predicted,
            }
        })
        .collect()
}

pub fn apa_pcc_table(corpus: &Corpus, outcomes: &[ParseOutcome]) -> Result<ApaPcc, StatsError> {
    let series = apa_series(corpus, outcomes);
    let n = series[0].n();
    if n < 3 {
        return Err(StatsError::TooFewSamples {
            what: "APA correlation",
            needed: 3,
            got: n,
        });
    }
    let r: Vec<CorrelationResult> = series.iter().map(|s| s.correlate()).collect::<Result<_, _>>()?;
    Ok(ApaPcc {
        accuracy: r[0],
        fluency: r[1],
        prosodic: r[2],
        total: r[3],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub utt_id: String,
    pub per: f64,
    pub human_accuracy: u8,
    pub predicted_accuracy: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStudy {
    /// r(PER, human accuracy).
    pub human: CorrelationResult,
    /// r(PER, predicted accuracy).
    pub predicted: CorrelationResult,
    pub rows: Vec<ScatterRow>,
}

/// Rows for utterances with both a PER and a parsed accuracy score.
pub fn scatter_rows(corpus: &Corpus, outcomes: &[ParseOutcome], mdd: &CorpusMdd) -> Vec<ScatterRow> {
    mdd.utterances
        .iter()
        .filter_map(|u| {
            let predicted = outcomes
                .iter()
                .filter(|o| o.utt_id == u.utt_id)
                .find_map(|o| o.apa())?;
            let utt = corpus.get(&u.utt_id)?;
            Some(ScatterRow {
                utt_id: u.utt_id.clone(),
                per: u.per.value(),
                human_accuracy: utt.scores.accuracy,
                predicted_accuracy: predicted.accuracy,
            })
        })
        .collect()
}

pub fn accuracy_per_correlation(rows: Vec<ScatterRow>) -> Result<CorrelationStudy, StatsError> {
    if rows.len() < 3 {
        return Err(StatsError::TooFewSamples {
            what: "accuracy/PER correlation",
            needed: 3,
            got: rows.len(),
        });
    }
    let per: Vec<f64> = rows.iter().map(|r| r.per).collect();
    let human: Vec<f64> = rows.iter().map(|r| f64::from(r.human_accuracy)).collect();
    let predicted: Vec<f64> = rows.iter().map(|r| f64::from(r.predicted_accuracy)).collect();
    Ok(CorrelationStudy {
        human: pcc(&per, &human)?,
        predicted: pcc(&per, &predicted)?,
        rows,
    })
}

pub fn write_scatter_csv<W: Write>(mut out: W, rows: &[ScatterRow]) -> std::io::Result<()> {
    writeln!(out, "{SCATTER_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.utt_id, r.per, r.human_accuracy, r.predicted_accuracy)?;
    }
    out.flush()
}
