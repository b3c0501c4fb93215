//! Extraction of structured payloads from raw model text.
//!
//! Models are asked for a Python-dict-like object such as
//! `{'accuracy': 8, 'fluency': 7, 'prosodic': 9, 'total': 8}`. The parser
//! takes the last object-like span in the text, so an echoed format example
//! earlier in the output is ignored, and accepts single- or double-quoted
//! keys and values. Every tolerance applied on the way is recorded as a
//! [`Repair`]; text produced by [`serialize_apa`] / [`serialize_mdd`]
//! parses with no repairs.
//!
//! Single-quoted strings may contain bare apostrophes (`'That's it.'`): a
//! quote only closes the string when the next non-space character is `,`,
//! `:` or `}` or the object ends. A backslash escapes the next character.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::RawResponse;
use crate::phoneset::{PhoneInventory, PhoneSequence};
use crate::prompts::Task;

pub const PARSED_SCHEMA: &str = "capt-parsed/1";

pub const APA_KEYS: [&str; 4] = ["accuracy", "fluency", "prosodic", "total"];

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ParseError {
    #[error("no object found in model output")]
    NoObjectFound,
    #[error("missing key `{name}`")]
    MissingKey { name: String },
    #[error("value of `{name}` is not numeric: {value:?}")]
    NonNumericValue { name: String, value: String },
    #[error("malformed object: {detail}")]
    Malformed { detail: String },
    #[error("backend error: {message}")]
    Backend { message: String },
}

/// A leniency step applied while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "repair", rename_all = "kebab-case")]
pub enum Repair {
    ProsePrefixSkipped,
    TrailingTextSkipped,
    EarlierObjectSkipped { count: usize },
    UnquotedKey { key: String },
    TrailingComma,
    DuplicateKey { key: String },
    ExtraKeyIgnored { key: String },
    NumericString { key: String },
    Rounded { key: String },
    Clamped { key: String },
    UnknownPhones { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ApaScores {
    pub accuracy: u8,
    pub fluency: u8,
    pub prosodic: u8,
    pub total: u8,
}

impl ApaScores {
    pub fn get(&self, key: &str) -> Option<u8> {
        match key {
            "accuracy" => Some(self.accuracy),
            "fluency" => Some(self.fluency),
            "prosodic" => Some(self.prosodic),
            "total" => Some(self.total),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MddTranscripts {
    pub word_transcript: String,
    pub phoneme_transcript: PhoneSequence,
    pub raw_phoneme_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Apa(ApaScores),
    Mdd(MddTranscripts),
    Failure(ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub utt_id: String,
    pub task: Task,
    pub payload: Payload,
    pub repairs: Vec<Repair>,
}

impl ParseOutcome {
    pub fn is_failure(&self) -> bool {
        matches!(self.payload, Payload::Failure(_))
    }

    pub fn apa(&self) -> Option<&ApaScores> {
        match &self.payload {
            Payload::Apa(s) => Some(s),
            _ => None,
        }
    }

    pub fn mdd(&self) -> Option<&MddTranscripts> {
        match &self.payload {
            Payload::Mdd(m) => Some(m),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// serialization

fn quote_single(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '\\' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '\'' if closes_string(&chars, i + 1) => out.push_str("\\'"),
            _ => out.push(c),
        }
    }
    out.push('\'');
    out
}

pub fn serialize_apa(s: &ApaScores) -> String {
    format!(
        "{{'accuracy': {}, 'fluency': {}, 'prosodic': {}, 'total': {}}}",
        s.accuracy, s.fluency, s.prosodic, s.total
    )
}

pub fn serialize_mdd(word_transcript: &str, phonemes: &PhoneSequence) -> String {
    format!(
        "{{'word_transcript': {}, 'phoneme_transcript': {}}}",
        quote_single(word_transcript),
        quote_single(&phonemes.render())
    )
}

// ---------------------------------------------------------------------------
// object extraction

/// Byte ranges of every balanced top-level `{...}` span.
fn object_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if depth > 0 => escaped = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Quoted(String),
    Bare(String),
}

impl Value {
    fn text(&self) -> &str {
        match self {
            Value::Quoted(s) | Value::Bare(s) => s,
        }
    }
}

/// True when position `i` is followed (after spaces) by a delimiter that
/// may legitimately come right after a closing quote.
fn closes_string(chars: &[char], i: usize) -> bool {
    let mut j = i;
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    j >= chars.len() || matches!(chars[j], ',' | ':' | '}')
}

struct Scanner<'a> {
    chars: &'a [char],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn malformed(&self, detail: &str) -> ParseError {
        ParseError::Malformed {
            detail: format!("{detail} at character {}", self.pos),
        }
    }

    fn single_quoted(&mut self) -> Result<String, ParseError> {
        self.pos += 1;
        let mut out = String::new();
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            match c {
                '\\' if self.pos + 1 < self.chars.len() => {
                    out.push(self.chars[self.pos + 1]);
                    self.pos += 2;
                }
                '\'' if closes_string(self.chars, self.pos + 1) => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
        Err(self.malformed("unterminated string"))
    }

    fn double_quoted(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.chars.len() {
            match self.chars[self.pos] {
                '\\' => self.pos += 2,
                '"' => {
                    self.pos += 1;
                    let literal: String = self.chars[start..self.pos].iter().collect();
                    return serde_json::from_str(&literal)
                        .map_err(|e| self.malformed(&format!("bad string literal ({e})")));
                }
                _ => self.pos += 1,
            }
        }
        Err(self.malformed("unterminated string"))
    }

    fn quoted(&mut self) -> Result<Option<String>, ParseError> {
        match self.peek() {
            Some('\'') => self.single_quoted().map(Some),
            Some('"') => self.double_quoted().map(Some),
            _ => Ok(None),
        }
    }

    fn bare(&mut self, stop: &[char]) -> String {
        let start = self.pos;
        while self.pos < self.chars.len() && !stop.contains(&self.chars[self.pos]) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect::<String>().trim().to_owned()
    }
}

/// Parses the inside of an object span into ordered key/value pairs.
fn parse_pairs(inner: &str, repairs: &mut Vec<Repair>) -> Result<Vec<(String, Value)>, ParseError> {
    let chars: Vec<char> = inner.chars().collect();
    let mut sc = Scanner {
        chars: &chars,
        pos: 0,
    };
    let mut pairs: Vec<(String, Value)> = Vec::new();
    loop {
        sc.skip_ws();
        if sc.peek().is_none() {
            break;
        }
        let key = match sc.quoted()? {
            Some(k) => k,
            None => {
                let k = sc.bare(&[':', ',']);
                if k.is_empty() {
                    return Err(sc.malformed("expected a key"));
                }
                repairs.push(Repair::UnquotedKey { key: k.clone() });
                k
            }
        };
        sc.skip_ws();
        if sc.peek() != Some(':') {
            return Err(sc.malformed("expected ':'"));
        }
        sc.pos += 1;
        sc.skip_ws();
        let value = match sc.quoted()? {
            Some(v) => Value::Quoted(v),
            None => Value::Bare(sc.bare(&[','])),
        };
        if let Some(slot) = pairs.iter_mut().find(|(k, _)| *k == key) {
            repairs.push(Repair::DuplicateKey { key: key.clone() });
            slot.1 = value;
        } else {
            pairs.push((key, value));
        }
        sc.skip_ws();
        match sc.peek() {
            None => break,
            Some(',') => {
                sc.pos += 1;
                sc.skip_ws();
                if sc.peek().is_none() {
                    repairs.push(Repair::TrailingComma);
                    break;
                }
            }
            Some(_) => return Err(sc.malformed("expected ',' between entries")),
        }
    }
    Ok(pairs)
}

/// Locates the last object in `text` and returns its pairs.
fn extract_object(text: &str, repairs: &mut Vec<Repair>) -> Result<Vec<(String, Value)>, ParseError> {
    let spans = object_spans(text);
    let &(start, end) = spans.last().ok_or(ParseError::NoObjectFound)?;
    if !text[..start].trim().is_empty() {
        repairs.push(Repair::ProsePrefixSkipped);
    }
    if spans.len() > 1 {
        repairs.push(Repair::EarlierObjectSkipped {
            count: spans.len() - 1,
        });
    }
    if !text[end..].trim().is_empty() {
        repairs.push(Repair::TrailingTextSkipped);
    }
    parse_pairs(&text[start + 1..end - 1], repairs)
}

fn find<'v>(pairs: &'v [(String, Value)], name: &str) -> Result<&'v Value, ParseError> {
    pairs
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v)
        .ok_or_else(|| ParseError::MissingKey {
            name: name.to_owned(),
        })
}

fn score_value(name: &str, value: &Value, repairs: &mut Vec<Repair>) -> Result<u8, ParseError> {
    let text = value.text().trim();
    let non_numeric = || ParseError::NonNumericValue {
        name: name.to_owned(),
        value: text.to_owned(),
    };
    let x: f64 = text.parse().map_err(|_| non_numeric())?;
    if !x.is_finite() {
        return Err(non_numeric());
    }
    if matches!(value, Value::Quoted(_)) {
        repairs.push(Repair::NumericString {
            key: name.to_owned(),
        });
    }
    let rounded = (x + 0.5).floor();
    if rounded != x {
        repairs.push(Repair::Rounded {
            key: name.to_owned(),
        });
    }
    let clamped = rounded.clamp(0.0, 10.0);
    if clamped != rounded {
        repairs.push(Repair::Clamped {
            key: name.to_owned(),
        });
    }
    Ok(clamped as u8)
}

fn note_extra_keys(pairs: &[(String, Value)], known: &[&str], repairs: &mut Vec<Repair>) {
    for (k, _) in pairs {
        if !known.contains(&k.as_str()) {
            repairs.push(Repair::ExtraKeyIgnored { key: k.clone() });
        }
    }
}

/// Parses an APA score object, returning the scores and applied repairs.
pub fn parse_apa_with_repairs(text: &str) -> Result<(ApaScores, Vec<Repair>), ParseError> {
    let mut repairs = Vec::new();
    let pairs = extract_object(text, &mut repairs)?;
    let mut vals = [0u8; 4];
    for (slot, key) in vals.iter_mut().zip(APA_KEYS) {
        *slot = score_value(key, find(&pairs, key)?, &mut repairs)?;
    }
    note_extra_keys(&pairs, &APA_KEYS, &mut repairs);
    let [accuracy, fluency, prosodic, total] = vals;
    Ok((
        ApaScores {
            accuracy,
            fluency,
            prosodic,
            total,
        },
        repairs,
    ))
}

pub fn parse_apa(text: &str) -> Result<ApaScores, ParseError> {
    parse_apa_with_repairs(text).map(|(s, _)| s)
}

pub fn parse_mdd_with_repairs(
    text: &str,
    inventory: &PhoneInventory,
) -> Result<(MddTranscripts, Vec<Repair>), ParseError> {
    let mut repairs = Vec::new();
    let pairs = extract_object(text, &mut repairs)?;
    let word_transcript = find(&pairs, "word_transcript")?.text().to_owned();
    let raw_phoneme_text = find(&pairs, "phoneme_transcript")?.text().to_owned();
    note_extra_keys(&pairs, &["word_transcript", "phoneme_transcript"], &mut repairs);
    let tokenized = inventory.tokenize_lenient(&raw_phoneme_text);
    if tokenized.unknown > 0 {
        repairs.push(Repair::UnknownPhones {
            count: tokenized.unknown,
        });
    }
    Ok((
        MddTranscripts {
            word_transcript,
            phoneme_transcript: tokenized.sequence,
            raw_phoneme_text,
        },
        repairs,
    ))
}

pub fn parse_mdd(text: &str, inventory: &PhoneInventory) -> Result<MddTranscripts, ParseError> {
    parse_mdd_with_repairs(text, inventory).map(|(m, _)| m)
}

pub fn parse_response(raw: &RawResponse, inventory: &PhoneInventory) -> ParseOutcome {
    let backend = |message: &str| {
        (
            Payload::Failure(ParseError::Backend {
                message: message.to_owned(),
            }),
            Vec::new(),
        )
    };
    let (payload, repairs) = match (&raw.error, &raw.text) {
        (Some(message), _) => backend(message),
        (None, None) => backend("no text in response"),
        (None, Some(text)) => match raw.task {
            Task::Apa => match parse_apa_with_repairs(text) {
                Ok((s, r)) => (Payload::Apa(s), r),
                Err(e) => (Payload::Failure(e), Vec::new()),
            },
            Task::Mdd => match parse_mdd_with_repairs(text, inventory) {
                Ok((m, r)) => (Payload::Mdd(m), r),
                Err(e) => (Payload::Failure(e), Vec::new()),
            },
        },
    };
    ParseOutcome {
        utt_id: raw.utt_id.clone(),
        task: raw.task,
        payload,
        repairs,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskParseCounts {
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Failures caused by backend errors rather than unparseable text.
    pub backend_errors: usize,
    /// Successful parses that needed at least one repair.
    pub repaired: usize,
}

impl TaskParseCounts {
    pub fn failure_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.failed as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseSummary {
    pub apa: TaskParseCounts,
    pub mdd: TaskParseCounts,
}

impl ParseSummary {
    pub fn failures(&self) -> usize {
        self.apa.failed + self.mdd.failed
    }

    pub fn successes(&self) -> usize {
        self.apa.succeeded + self.mdd.succeeded
    }
}

/// Parses every response. Failures are kept as data.
pub fn parse_all(raw: &[RawResponse], inventory: &PhoneInventory) -> (Vec<ParseOutcome>, ParseSummary) {
    let outcomes: Vec<ParseOutcome> = raw.iter().map(|r| parse_response(r, inventory)).collect();
    let mut summary = ParseSummary::default();
    for o in &outcomes {
        let counts = match o.task {
            Task::Apa => &mut summary.apa,
            Task::Mdd => &mut summary.mdd,
        };
        counts.total += 1;
        match &o.payload {
            Payload::Failure(ParseError::Backend { .. }) => {
                counts.failed += 1;
                counts.backend_errors += 1;
            }
            Payload::Failure(_) => counts.failed += 1,
            _ => {
                counts.succeeded += 1;
                if !o.repairs.is_empty() {
                    counts.repaired += 1;
                }
            }
        }
    }
    (outcomes, summary)
}

#[derive(Serialize)]
struct ParsedHeader<'a> {
    schema: &'a str,
    summary: &'a ParseSummary,
}

/// Writes outcomes as `capt-parsed/1` newline-delimited JSON.
pub fn write_parsed<W: std::io::Write>(
    mut out: W,
    outcomes: &[ParseOutcome],
    summary: &ParseSummary,
) -> std::io::Result<()> {
    serde_json::to_writer(
        &mut out,
        &ParsedHeader {
            schema: PARSED_SCHEMA,
            summary,
        },
    )?;
    out.write_all(b"\n")?;
    for o in outcomes {
        serde_json::to_writer(&mut out, o)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
