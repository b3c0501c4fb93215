//! Canonical corpus schema and ingestion.
//!
//! Upstream corpora are mapped by an adapter (see [`speechocean762`]) into
//! [`Utterance`] records. The canonical on-disk form is newline-delimited
//! JSON with a `capt-corpus/1` header line.

pub mod speechocean762;
mod summary;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phoneset::{Phone, PhoneError, PhoneInventory, PhoneSequence};

pub use summary::{stats, CorpusStats, Share, SplitStats};

pub const CORPUS_SCHEMA: &str = "capt-corpus/1";

/// Default per-phone accuracy below which a phone counts as mispronounced.
pub const DEFAULT_PHONE_ACC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("schema mismatch in field `{field}` of utterance {utt_id}: {detail}")]
    SchemaMismatch {
        field: String,
        utt_id: String,
        detail: String,
    },
    #[error("invalid phone in utterance {utt_id} at position {position}: {source}")]
    PhoneValidation {
        utt_id: String,
        position: usize,
        #[source]
        source: PhoneError,
    },
    #[error("duplicate utterance id {0}")]
    DuplicateUtterance(String),
    #[error("malformed corpus file at line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn schema(field: &str, utt_id: &str, detail: impl Into<String>) -> Self {
        CorpusError::SchemaMismatch {
            field: field.to_owned(),
            utt_id: utt_id.to_owned(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBand {
    Under20,
    Twenties,
    Thirties,
    Forties,
    FiftyPlus,
    Unknown,
}

impl AgeBand {
    pub const ALL: [AgeBand; 6] = [
        AgeBand::Under20,
        AgeBand::Twenties,
        AgeBand::Thirties,
        AgeBand::Forties,
        AgeBand::FiftyPlus,
        AgeBand::Unknown,
    ];

    pub fn from_age(age: u32) -> Self {
        match age {
            0..=19 => AgeBand::Under20,
            20..=29 => AgeBand::Twenties,
            30..=39 => AgeBand::Thirties,
            40..=49 => AgeBand::Forties,
            _ => AgeBand::FiftyPlus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Under20 => "under20",
            AgeBand::Twenties => "twenties",
            AgeBand::Thirties => "thirties",
            AgeBand::Forties => "forties",
            AgeBand::FiftyPlus => "fifty_plus",
            AgeBand::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::Male, Gender::Female, Gender::Unknown];

    pub fn label(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerMeta {
    pub speaker_id: String,
    pub age_band: AgeBand,
    pub gender: Gender,
}

/// Sentence-level human scores on the 0–10 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScores")]
pub struct HumanScores {
    pub accuracy: u8,
    pub fluency: u8,
    pub prosodic: u8,
    pub completeness: u8,
    pub total: u8,
}

#[derive(Deserialize)]
struct RawScores {
    accuracy: u8,
    fluency: u8,
    prosodic: u8,
    completeness: u8,
    total: u8,
}

impl TryFrom<RawScores> for HumanScores {
    type Error = String;
    fn try_from(r: RawScores) -> Result<Self, String> {
        HumanScores::new(r.accuracy, r.fluency, r.prosodic, r.completeness, r.total)
    }
}

impl HumanScores {
    pub fn new(
        accuracy: u8,
        fluency: u8,
        prosodic: u8,
        completeness: u8,
        total: u8,
    ) -> Result<Self, String> {
        for (name, v) in [
            ("accuracy", accuracy),
            ("fluency", fluency),
            ("prosodic", prosodic),
            ("completeness", completeness),
            ("total", total),
        ] {
            if v > 10 {
                return Err(format!("{name} score {v} outside 0..=10"));
            }
        }
        Ok(HumanScores {
            accuracy,
            fluency,
            prosodic,
            completeness,
            total,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub utt_id: String,
    pub speaker: SpeakerMeta,
    pub audio_ref: String,
    pub word_text: String,
    pub canonical_phones: PhoneSequence,
    pub perceived_phones: PhoneSequence,
    pub mispronounced: Vec<bool>,
    pub scores: HumanScores,
    pub split: Split,
    /// Upstream canonical phone tokens before stress stripping, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_canonical: Option<String>,
}

impl Utterance {
    /// Checks the per-record invariants against an inventory.
    pub fn validate(&self, inventory: &PhoneInventory) -> Result<(), CorpusError> {
        if self.utt_id.is_empty() {
            return Err(CorpusError::schema("utt_id", "", "empty utterance id"));
        }
        if self.speaker.speaker_id.is_empty() {
            return Err(CorpusError::schema("speaker_id", &self.utt_id, "empty speaker id"));
        }
        if self.word_text.trim().is_empty() {
            return Err(CorpusError::schema("word_text", &self.utt_id, "empty word text"));
        }
        if self.mispronounced.len() != self.canonical_phones.len() {
            return Err(CorpusError::schema(
                "mispronounced",
                &self.utt_id,
                format!(
                    "{} flags for {} canonical phones",
                    self.mispronounced.len(),
                    self.canonical_phones.len()
                ),
            ));
        }
        for seq in [&self.canonical_phones, &self.perceived_phones] {
            if let Err(e) = inventory.validate(seq) {
                let position = match &e {
                    PhoneError::UnknownPhone { position, .. } => *position,
                    _ => 0,
                };
                return Err(CorpusError::PhoneValidation {
                    utt_id: self.utt_id.clone(),
                    position,
                    source: e,
                });
            }
        }
        Ok(())
    }

    pub fn mispronounced_count(&self) -> usize {
        self.mispronounced.iter().filter(|&&f| f).count()
    }
}

/// What an annotator heard at one canonical position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Heard {
    Phone(Phone),
    Deleted,
}

/// Per-phone annotation; the default value means "pronounced correctly".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhoneAnnotation {
    pub heard: Option<Heard>,
    pub accuracy: Option<f64>,
}

/// Builds the perceived sequence and per-position mispronunciation flags.
///
/// A position is flagged when its annotation records a different heard
/// phone, a deletion, or an accuracy below `threshold`. Flagged positions
/// with no heard phone are perceived as `<unk>`. Missing annotations
/// (including positions past the end of `annotations`) count as correct.
pub fn derive_perceived(
    canonical: &PhoneSequence,
    annotations: &[PhoneAnnotation],
    threshold: f64,
) -> (PhoneSequence, Vec<bool>) {
    let correct = PhoneAnnotation::default();
    let mut perceived = Vec::with_capacity(canonical.len());
    let mut flags = Vec::with_capacity(canonical.len());
    for (pos, phone) in canonical.iter().enumerate() {
        let ann = annotations.get(pos).unwrap_or(&correct);
        let low = ann.accuracy.is_some_and(|a| a < threshold);
        match &ann.heard {
            Some(Heard::Deleted) => flags.push(true),
            Some(Heard::Phone(h)) if h != phone => {
                flags.push(true);
                perceived.push(h.clone());
            }
            _ if low => {
                flags.push(true);
                perceived.push(Phone::unk());
            }
            _ => {
                flags.push(false);
                perceived.push(phone.clone());
            }
        }
    }
    (PhoneSequence::new(perceived), flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusHeader {
    schema: String,
    provenance: String,
    inventory: InventoryHeader,
    counts: SplitCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InventoryHeader {
    name: String,
    phones: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    inventory: PhoneInventory,
    provenance: String,
}

impl Corpus {
    /// Validates every utterance and the uniqueness of ids.
    pub fn new(
        utterances: Vec<Utterance>,
        inventory: PhoneInventory,
        provenance: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for u in &utterances {
            u.validate(&inventory)?;
            if !seen.insert(u.utt_id.as_str()) {
                return Err(CorpusError::DuplicateUtterance(u.utt_id.clone()));
            }
        }
        Ok(Corpus {
            utterances,
            inventory,
            provenance: provenance.into(),
        })
    }

    pub fn empty(inventory: PhoneInventory) -> Self {
        Corpus {
            utterances: Vec::new(),
            inventory,
            provenance: String::new(),
        }
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn get(&self, utt_id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.utt_id == utt_id)
    }

    pub fn split_counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.split(Split::Train).count(),
            test: self.split(Split::Test).count(),
        }
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = CorpusHeader {
            schema: CORPUS_SCHEMA.to_owned(),
            provenance: self.provenance.clone(),
            inventory: InventoryHeader {
                name: self.inventory.name().to_owned(),
                phones: self.inventory.phones().map(|p| p.symbol().to_owned()).collect(),
            },
            counts: self.split_counts(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for u in &self.utterances {
            serde_json::to_writer(&mut out, u)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_ndjson_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
        self.write_ndjson(std::io::BufWriter::new(file))
            .map_err(|e| CorpusError::io(path, e))
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self, CorpusError> {
        let mut lines = input.lines().enumerate();
        let header: CorpusHeader = loop {
            match lines.next() {
                None => {
                    return Err(CorpusError::Format {
                        line: 1,
                        detail: "missing header".into(),
                    })
                }
                Some((i, line)) => {
                    let line = line.map_err(|e| CorpusError::Format {
                        line: i + 1,
                        detail: e.to_string(),
                    })?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                        line: i + 1,
                        detail: format!("bad header: {e}"),
                    })?;
                }
            }
        };
        if header.schema != CORPUS_SCHEMA {
            return Err(CorpusError::Format {
                line: 1,
                detail: format!("expected schema {CORPUS_SCHEMA}, found {}", header.schema),
            });
        }
        let inventory = PhoneInventory::parse(&header.inventory.name, &header.inventory.phones.join("\n"))
            .map_err(|e| CorpusError::Format {
                line: 1,
                detail: format!("bad inventory: {e}"),
            })?;
        let mut utterances = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| CorpusError::Format {
                line: i + 1,
                detail: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let u: Utterance = serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                line: i + 1,
                detail: e.to_string(),
            })?;
            utterances.push(u);
        }
        let corpus = Corpus::new(utterances, inventory, header.provenance)?;
        if corpus.split_counts() != header.counts {
            return Err(CorpusError::Format {
                line: 1,
                detail: "header split counts disagree with records".into(),
            });
        }
        Ok(corpus)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
        Self::read_ndjson(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub phone_acc_threshold: f64,
    /// Skip bad records and collect their errors instead of failing.
    pub lenient: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            phone_acc_threshold: DEFAULT_PHONE_ACC_THRESHOLD,
            lenient: false,
        }
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub corpus: Corpus,
    /// Records skipped in lenient mode.
    pub skipped: Vec<CorpusError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapter {
    Speechocean762,
}

impl std::str::FromStr for Adapter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            speechocean762::ADAPTER_NAME => Ok(Adapter::Speechocean762),
            other => Err(format!("unknown adapter {other:?}")),
        }
    }
}

/// Ingests an upstream corpus tree through the chosen adapter.
pub fn ingest(
    source_dir: &Path,
    adapter: Adapter,
    inventory: &PhoneInventory,
    options: &IngestOptions,
) -> Result<IngestOutcome, CorpusError> {
    match adapter {
        Adapter::Speechocean762 => speechocean762::ingest(source_dir, inventory, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> PhoneSequence {
        PhoneInventory::default_inventory().tokenize_strict(s).unwrap()
    }

    fn p(s: &str) -> Phone {
        Phone::new(s).unwrap()
    }

    #[test]
    fn substitution_annotation() {
        let anns = vec![
            PhoneAnnotation::default(),
            PhoneAnnotation::default(),
            PhoneAnnotation {
                heard: Some(Heard::Phone(p("D"))),
                accuracy: None,
            },
        ];
        let (perceived, flags) = derive_perceived(&seq("K AE T"), &anns, 0.5);
        assert_eq!(perceived, seq("K AE D"));
        assert_eq!(flags, vec![false, false, true]);
    }

    #[test]
    fn no_annotations_is_identity() {
        let (perceived, flags) = derive_perceived(&seq("K AE T"), &[], 0.5);
        assert_eq!(perceived, seq("K AE T"));
        assert_eq!(flags, vec![false; 3]);
    }

    #[test]
    fn deletion_annotation() {
        let anns = vec![
            PhoneAnnotation::default(),
            PhoneAnnotation {
                heard: Some(Heard::Deleted),
                accuracy: Some(0.0),
            },
        ];
        let (perceived, flags) = derive_perceived(&seq("K AE T"), &anns, 0.5);
        assert_eq!(perceived, seq("K T"));
        assert_eq!(flags, vec![false, true, false]);
    }

    #[test]
    fn low_accuracy_without_heard_phone_is_unk() {
        let anns = vec![PhoneAnnotation {
            heard: None,
            accuracy: Some(0.0),
        }];
        let (perceived, flags) = derive_perceived(&seq("K AE"), &anns, 0.5);
        assert_eq!(perceived.render(), "<unk> AE");
        assert_eq!(flags, vec![true, false]);
    }

    #[test]
    fn heard_same_phone_is_not_flagged() {
        let anns = vec![PhoneAnnotation {
            heard: Some(Heard::Phone(p("K"))),
            accuracy: Some(2.0),
        }];
        let (perceived, flags) = derive_perceived(&seq("K AE"), &anns, 0.5);
        assert_eq!(perceived, seq("K AE"));
        assert_eq!(flags, vec![false, false]);
    }

    /// Every single-edit annotation on every 3-phone input over a small
    /// alphabet: exactly one flag, the unflagged phones survive in order,
    /// and the perceived sequence is one edit away from the canonical one.
    #[test]
    fn single_edit_annotations_exhaustive() {
        let alphabet = ["K", "AE", "T", "D"];
        for a in alphabet {
            for b in alphabet {
                for c in alphabet {
                    let canonical = seq(&format!("{a} {b} {c}"));
                    for pos in 0..3 {
                        let mut edits: Vec<Heard> = vec![Heard::Deleted];
                        edits.extend(
                            alphabet
                                .iter()
                                .filter(|&&x| x != canonical.phones()[pos].symbol())
                                .map(|x| Heard::Phone(p(x))),
                        );
                        for heard in edits {
                            let deleted = heard == Heard::Deleted;
                            let mut anns = vec![PhoneAnnotation::default(); 3];
                            anns[pos].heard = Some(heard.clone());
                            let (perceived, flags) = derive_perceived(&canonical, &anns, 0.5);
                            let expected_flags: Vec<bool> = (0..3).map(|i| i == pos).collect();
                            assert_eq!(flags, expected_flags);
                            assert_eq!(perceived.len(), if deleted { 2 } else { 3 });
                            let kept: Vec<&Phone> = canonical
                                .iter()
                                .enumerate()
                                .filter(|(i, _)| !flags[*i])
                                .map(|(_, ph)| ph)
                                .collect();
                            let surviving: Vec<&Phone> = if deleted {
                                perceived.iter().collect()
                            } else {
                                perceived
                                    .iter()
                                    .enumerate()
                                    .filter(|(i, _)| *i != pos)
                                    .map(|(_, ph)| ph)
                                    .collect()
                            };
                            assert_eq!(kept, surviving);
                            assert_eq!(
                                crate::align::distance(canonical.phones(), perceived.phones()),
                                1
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn derive_is_order_independent() {
        // Annotations are positional, so building them in any order yields
        // the same result.
        let canonical = seq("K AE T S");
        let mut forward = vec![PhoneAnnotation::default(); 4];
        forward[1].heard = Some(Heard::Phone(p("EH")));
        forward[3].heard = Some(Heard::Deleted);
        let mut backward = vec![PhoneAnnotation::default(); 4];
        backward[3].heard = Some(Heard::Deleted);
        backward[1].heard = Some(Heard::Phone(p("EH")));
        assert_eq!(
            derive_perceived(&canonical, &forward, 0.5),
            derive_perceived(&canonical, &backward, 0.5)
        );
    }

    fn sample_utterance(id: &str) -> Utterance {
        Utterance {
            utt_id: id.into(),
            speaker: SpeakerMeta {
                speaker_id: "0001".into(),
                age_band: AgeBand::Twenties,
                gender: Gender::Female,
            },
            audio_ref: format!("WAVE/{id}.WAV"),
            word_text: "CAT".into(),
            canonical_phones: seq("K AE T"),
            perceived_phones: seq("K AE D"),
            mispronounced: vec![false, false, true],
            scores: HumanScores::new(8, 7, 9, 10, 8).unwrap(),
            split: Split::Test,
            raw_canonical: None,
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let corpus = Corpus::new(
            vec![sample_utterance("a"), sample_utterance("b")],
            PhoneInventory::default_inventory(),
            "unit",
        )
        .unwrap();
        let text = corpus.to_ndjson_string();
        assert!(text.starts_with("{\"schema\":\"capt-corpus/1\""));
        let back = Corpus::read_ndjson(text.as_bytes()).unwrap();
        assert_eq!(back.utterances(), corpus.utterances());
        assert_eq!(back.to_ndjson_string(), text);
    }

    #[test]
    fn rejects_flag_length_mismatch() {
        let mut u = sample_utterance("a");
        u.mispronounced.pop();
        let err = Corpus::new(vec![u], PhoneInventory::default_inventory(), "").unwrap_err();
        assert!(matches!(err, CorpusError::SchemaMismatch { ref field, .. } if field == "mispronounced"));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = Corpus::new(
            vec![sample_utterance("a"), sample_utterance("a")],
            PhoneInventory::default_inventory(),
            "",
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateUtterance(_)));
    }

    #[test]
    fn rejects_out_of_range_scores() {
        assert!(HumanScores::new(11, 0, 0, 0, 0).is_err());
        let json = r#"{"accuracy":8,"fluency":7,"prosodic":12,"completeness":10,"total":8}"#;
        assert!(serde_json::from_str::<HumanScores>(json).is_err());
    }

    #[test]
    fn rejects_phone_outside_inventory() {
        let small = PhoneInventory::parse("small", "K\nAE\n<unk>\n").unwrap();
        let err = Corpus::new(vec![sample_utterance("a")], small, "").unwrap_err();
        match err {
            CorpusError::PhoneValidation { position, .. } => assert_eq!(position, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
