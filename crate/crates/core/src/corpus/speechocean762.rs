//! Adapter for the Speechocean762 release layout.
//!
//! ```text
//! <root>/resource/scores.json          utterance id -> score/annotation record
//! <root>/{train,test}/text             "<utt> <WORDS...>" (optional if scores carry "text")
//! <root>/{train,test}/utt2spk          "<utt> <speaker>"
//! <root>/{train,test}/wav.scp          "<utt> <audio path>" (optional)
//! <root>/{train,test}/spk2age          "<speaker> <age>" (optional)
//! <root>/{train,test}/spk2gender       "<speaker> m|f" (optional)
//! ```
//!
//! See `docs/adapters/speechocean762.md` for the field mapping.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{Map, Value};

use super::{
    derive_perceived, AgeBand, Corpus, CorpusError, Gender, Heard, HumanScores, IngestOptions,
    IngestOutcome, PhoneAnnotation, SpeakerMeta, Split, Utterance,
};
use crate::phoneset::{strip_stress, PhoneError, PhoneInventory, PhoneSequence};

pub const ADAPTER_NAME: &str = "speechocean762";

type KaldiTable = BTreeMap<String, String>;

fn read_optional(path: &Path) -> Result<Option<String>, CorpusError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(CorpusError::io(path, e)),
    }
}

/// Parses "<key> <value...>" lines; the value is the rest of the line.
fn parse_kaldi_table(text: &str) -> KaldiTable {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            if line.is_empty() {
                return None;
            }
            let (k, v) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            Some((k.to_owned(), v.trim().to_owned()))
        })
        .collect()
}

fn read_table(dir: &Path, name: &str) -> Result<Option<KaldiTable>, CorpusError> {
    Ok(read_optional(&dir.join(name))?.map(|t| parse_kaldi_table(&t)))
}

struct SplitTables {
    split: Split,
    ids: Vec<String>,
    text: KaldiTable,
    utt2spk: KaldiTable,
    wav: KaldiTable,
    spk2age: KaldiTable,
    spk2gender: KaldiTable,
}

fn read_split(root: &Path, split: Split) -> Result<Option<SplitTables>, CorpusError> {
    let dir = root.join(split.label());
    if !dir.is_dir() {
        return Ok(None);
    }
    let text = read_table(&dir, "text")?;
    let wav = read_table(&dir, "wav.scp")?;
    let utt2spk = read_table(&dir, "utt2spk")?;
    let ids: Vec<String> = text
        .as_ref()
        .or(wav.as_ref())
        .or(utt2spk.as_ref())
        .map(|t| t.keys().cloned().collect())
        .unwrap_or_default();
    Ok(Some(SplitTables {
        split,
        ids,
        text: text.unwrap_or_default(),
        utt2spk: utt2spk.unwrap_or_default(),
        wav: wav.unwrap_or_default(),
        spk2age: read_table(&dir, "spk2age")?.unwrap_or_default(),
        spk2gender: read_table(&dir, "spk2gender")?.unwrap_or_default(),
    }))
}

fn score_field(rec: &Map<String, Value>, key: &str, utt: &str) -> Result<u8, CorpusError> {
    let v = rec
        .get(key)
        .ok_or_else(|| CorpusError::schema(key, utt, "missing"))?;
    let x = v
        .as_f64()
        .ok_or_else(|| CorpusError::schema(key, utt, format!("expected a number, found {v}")))?;
    if x.fract() != 0.0 || !(0.0..=10.0).contains(&x) {
        return Err(CorpusError::schema(key, utt, format!("{x} is not an integer in 0..=10")));
    }
    Ok(x as u8)
}

/// Word phones may be a JSON list of tokens or one space-separated string.
fn word_phone_tokens(word: &Map<String, Value>, utt: &str) -> Result<Vec<String>, CorpusError> {
    match word.get("phones") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| CorpusError::schema("phones", utt, "non-string phone"))
            })
            .collect(),
        Some(Value::String(s)) => Ok(s.split_whitespace().map(str::to_owned).collect()),
        Some(other) => Err(CorpusError::schema("phones", utt, format!("unexpected {other}"))),
        None => Err(CorpusError::schema("phones", utt, "missing")),
    }
}

fn is_deletion_mark(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("<del>") || s.eq_ignore_ascii_case("<deletion>")
}

fn normalized(token: &str) -> String {
    strip_stress(&token.to_ascii_uppercase()).to_owned()
}

struct Annotated {
    canonical: PhoneSequence,
    raw_tokens: Vec<String>,
    annotations: Vec<PhoneAnnotation>,
}

fn read_words(
    rec: &Map<String, Value>,
    utt: &str,
    inventory: &PhoneInventory,
) -> Result<Annotated, CorpusError> {
    let words = rec
        .get("words")
        .and_then(Value::as_array)
        .ok_or_else(|| CorpusError::schema("words", utt, "missing or not a list"))?;
    let mut canonical = Vec::new();
    let mut raw_tokens = Vec::new();
    let mut annotations = Vec::new();
    for word in words {
        let word = word
            .as_object()
            .ok_or_else(|| CorpusError::schema("words", utt, "word entry is not an object"))?;
        let tokens = word_phone_tokens(word, utt)?;
        let base = canonical.len();
        for (i, tok) in tokens.iter().enumerate() {
            let phone = inventory
                .lookup(tok)
                .cloned()
                .ok_or_else(|| CorpusError::PhoneValidation {
                    utt_id: utt.to_owned(),
                    position: base + i,
                    source: PhoneError::UnknownPhone {
                        symbol: tok.clone(),
                        position: base + i,
                    },
                })?;
            canonical.push(phone);
            raw_tokens.push(tok.clone());
        }
        let mut word_anns = vec![PhoneAnnotation::default(); tokens.len()];

        if let Some(acc) = word.get("phones-accuracy") {
            let acc = acc
                .as_array()
                .ok_or_else(|| CorpusError::schema("phones-accuracy", utt, "not a list"))?;
            if acc.len() != tokens.len() {
                return Err(CorpusError::schema(
                    "phones-accuracy",
                    utt,
                    format!("{} accuracies for {} phones", acc.len(), tokens.len()),
                ));
            }
            for (ann, v) in word_anns.iter_mut().zip(acc) {
                ann.accuracy = Some(v.as_f64().ok_or_else(|| {
                    CorpusError::schema("phones-accuracy", utt, format!("non-numeric {v}"))
                })?);
            }
        }

        if let Some(mis) = word.get("mispronunciations") {
            let mis = mis
                .as_array()
                .ok_or_else(|| CorpusError::schema("mispronunciations", utt, "not a list"))?;
            for m in mis {
                let index = m
                    .get("index")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| CorpusError::schema("mispronunciations.index", utt, "missing"))?
                    as usize;
                if index >= tokens.len() {
                    return Err(CorpusError::schema(
                        "mispronunciations.index",
                        utt,
                        format!("index {index} outside word of {} phones", tokens.len()),
                    ));
                }
                if let Some(c) = m.get("canonical-phone").and_then(Value::as_str) {
                    if normalized(c) != normalized(&tokens[index]) {
                        return Err(CorpusError::schema(
                            "mispronunciations.canonical-phone",
                            utt,
                            format!("{c} does not match phone {} at index {index}", tokens[index]),
                        ));
                    }
                }
                let pronounced = m
                    .get("pronounced-phone")
                    .and_then(Value::as_str)
                    .ok_or_else(|| {
                        CorpusError::schema("mispronunciations.pronounced-phone", utt, "missing")
                    })?;
                let heard = if is_deletion_mark(pronounced.trim()) {
                    Heard::Deleted
                } else {
                    let phone = inventory.lookup(pronounced.trim()).cloned().ok_or_else(|| {
                        CorpusError::PhoneValidation {
                            utt_id: utt.to_owned(),
                            position: base + index,
                            source: PhoneError::UnknownPhone {
                                symbol: pronounced.to_owned(),
                                position: base + index,
                            },
                        }
                    })?;
                    Heard::Phone(phone)
                };
                word_anns[index].heard = Some(heard);
            }
        }
        annotations.extend(word_anns);
    }
    Ok(Annotated {
        canonical: PhoneSequence::new(canonical),
        raw_tokens,
        annotations,
    })
}

fn build_utterance(
    utt: &str,
    rec: &Value,
    tables: &SplitTables,
    inventory: &PhoneInventory,
    options: &IngestOptions,
) -> Result<Utterance, CorpusError> {
    let rec = rec
        .as_object()
        .ok_or_else(|| CorpusError::schema("scores.json", utt, "record is not an object"))?;
    let word_text = rec
        .get("text")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .or_else(|| tables.text.get(utt).cloned())
        .ok_or_else(|| CorpusError::schema("text", utt, "no word transcript"))?;
    let scores = HumanScores {
        accuracy: score_field(rec, "accuracy", utt)?,
        fluency: score_field(rec, "fluency", utt)?,
        prosodic: score_field(rec, "prosodic", utt)?,
        completeness: score_field(rec, "completeness", utt)?,
        total: score_field(rec, "total", utt)?,
    };
    let speaker_id = tables
        .utt2spk
        .get(utt)
        .cloned()
        .ok_or_else(|| CorpusError::schema("utt2spk", utt, "no speaker"))?;
    let age_band = tables
        .spk2age
        .get(&speaker_id)
        .and_then(|a| a.parse::<u32>().ok())
        .map(AgeBand::from_age)
        .unwrap_or(AgeBand::Unknown);
    let gender = match tables.spk2gender.get(&speaker_id).map(|g| g.to_ascii_lowercase()) {
        Some(g) if g == "m" || g == "male" => Gender::Male,
        Some(g) if g == "f" || g == "female" => Gender::Female,
        _ => Gender::Unknown,
    };
    let audio_ref = tables
        .wav
        .get(utt)
        .cloned()
        .unwrap_or_else(|| format!("WAVE/SPEAKER{speaker_id}/{utt}.WAV"));

    let annotated = read_words(rec, utt, inventory)?;
    let (perceived, flags) = derive_perceived(
        &annotated.canonical,
        &annotated.annotations,
        options.phone_acc_threshold,
    );
    let raw = annotated.raw_tokens.join(" ");
    let raw_canonical = (raw != annotated.canonical.render()).then_some(raw);

    let u = Utterance {
        utt_id: utt.to_owned(),
        speaker: SpeakerMeta {
            speaker_id,
            age_band,
            gender,
        },
        audio_ref,
        word_text,
        canonical_phones: annotated.canonical,
        perceived_phones: perceived,
        mispronounced: flags,
        scores,
        split: tables.split,
        raw_canonical,
    };
    u.validate(inventory)?;
    Ok(u)
}

/// Reads a Speechocean762 tree into a canonical corpus.
pub fn ingest(
    root: &Path,
    inventory: &PhoneInventory,
    options: &IngestOptions,
) -> Result<IngestOutcome, CorpusError> {
    let scores_path = root.join("resource").join("scores.json");
    let scores_text =
        std::fs::read_to_string(&scores_path).map_err(|e| CorpusError::io(&scores_path, e))?;
    let scores: Map<String, Value> =
        serde_json::from_str(&scores_text).map_err(|e| CorpusError::Format {
            line: e.line(),
            detail: format!("{}: {e}", scores_path.display()),
        })?;

    let mut utterances = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for split in [Split::Train, Split::Test] {
        let Some(tables) = read_split(root, split)? else {
            continue;
        };
        for utt in &tables.ids {
            let result = if !seen.insert(utt.clone()) {
                Err(CorpusError::DuplicateUtterance(utt.clone()))
            } else {
                match scores.get(utt) {
                    Some(rec) => build_utterance(utt, rec, &tables, inventory, options),
                    None => Err(CorpusError::schema("scores.json", utt, "no score record")),
                }
            };
            match result {
                Ok(u) => utterances.push(u),
                Err(e) if options.lenient => skipped.push(e),
                Err(e) => return Err(e),
            }
        }
    }
    let corpus = Corpus::new(
        utterances,
        inventory.clone(),
        format!("{ADAPTER_NAME}:{}", root.display()),
    )?;
    Ok(IngestOutcome { corpus, skipped })
}
