use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AgeBand, Corpus, Gender, Split, Utterance};

/// A count and its percentage of the split's speakers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub files: usize,
    pub speakers: usize,
    pub age: BTreeMap<String, Share>,
    pub gender: BTreeMap<String, Share>,
    pub canonical_phones: usize,
    pub mispronounced_phones: usize,
    pub mispronounced_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: SplitStats,
    pub test: SplitStats,
    pub mispronounced_rate: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn split_stats<'a>(utts: impl Iterator<Item = &'a Utterance>) -> SplitStats {
    let mut files = 0;
    let mut canonical_phones = 0;
    let mut mispronounced_phones = 0;
    // Speaker metadata is taken from the first utterance seen per speaker.
    let mut speakers: BTreeMap<&str, (AgeBand, Gender)> = BTreeMap::new();
    for u in utts {
        files += 1;
        canonical_phones += u.canonical_phones.len();
        mispronounced_phones += u.mispronounced_count();
        speakers
            .entry(u.speaker.speaker_id.as_str())
            .or_insert((u.speaker.age_band, u.speaker.gender));
    }
    let n = speakers.len();
    let share = |count: usize| Share {
        count,
        percent: 100.0 * ratio(count, n),
    };
    let age = AgeBand::ALL
        .iter()
        .map(|&band| {
            let c = speakers.values().filter(|(b, _)| *b == band).count();
            (band.label().to_owned(), share(c))
        })
        .collect();
    let gender = Gender::ALL
        .iter()
        .map(|&g| {
            let c = speakers.values().filter(|(_, x)| *x == g).count();
            (g.label().to_owned(), share(c))
        })
        .collect();
    SplitStats {
        files,
        speakers: n,
        age,
        gender,
        canonical_phones,
        mispronounced_phones,
        mispronounced_rate: ratio(mispronounced_phones, canonical_phones),
    }
}

/// Per-split file, speaker and demographic counts plus mispronounced-phone
/// rates. Demographic percentages are over speakers, not files.
pub fn stats(corpus: &Corpus) -> CorpusStats {
    let train = split_stats(corpus.split(Split::Train));
    let test = split_stats(corpus.split(Split::Test));
    let rate = ratio(
        train.mispronounced_phones + test.mispronounced_phones,
        train.canonical_phones + test.canonical_phones,
    );
    CorpusStats {
        train,
        test,
        mispronounced_rate: rate,
    }
}

impl CorpusStats {
    /// Plain-text table, percentages to one decimal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let cell = |s: &Share| format!("{:.1}% ({})", s.percent, s.count);
        let _ = writeln!(out, "{:<24}{:>16}{:>16}", "", "train", "test");
        let _ = writeln!(out, "{:<24}{:>16}{:>16}", "files", self.train.files, self.test.files);
        let _ = writeln!(
            out,
            "{:<24}{:>16}{:>16}",
            "speakers", self.train.speakers, self.test.speakers
        );
        for band in AgeBand::ALL {
            let k = band.label();
            let _ = writeln!(
                out,
                "{:<24}{:>16}{:>16}",
                format!("age {k}"),
                cell(&self.train.age[k]),
                cell(&self.test.age[k])
            );
        }
        for g in Gender::ALL {
            let k = g.label();
            let _ = writeln!(
                out,
                "{:<24}{:>16}{:>16}",
                format!("gender {k}"),
                cell(&self.train.gender[k]),
                cell(&self.test.gender[k])
            );
        }
        let _ = writeln!(
            out,
            "{:<24}{:>16.4}{:>16.4}",
            "mispronounced rate", self.train.mispronounced_rate, self.test.mispronounced_rate
        );
        let _ = writeln!(out, "overall mispronounced-phone rate: {:.4}", self.mispronounced_rate);
        out
    }
}
