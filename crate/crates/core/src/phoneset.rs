//! Phone inventory and phoneme-transcript tokenization.
//!
//! Phones are ARPABET-style symbols. The default inventory carries the 39
//! ARPABET phones, the `<unk>` tag and six L2 extension phones, and is read
//! from a plain text file so that it can be corrected without a rebuild.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Literal used for unknown or unintelligible phones.
pub const UNK: &str = "<unk>";

/// The 39 phones of the ARPABET set used by the CMU Pronouncing Dictionary.
pub const ARPABET: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

const DEFAULT_INVENTORY: &str = include_str!("../data/phones.txt");

#[derive(Debug, Error)]
pub enum PhoneError {
    #[error("unknown phone {symbol:?} at position {position}")]
    UnknownPhone { symbol: String, position: usize },
    #[error("invalid phone symbol {0:?}")]
    InvalidSymbol(String),
    #[error("duplicate phone {symbol:?} on line {line}")]
    DuplicatePhone { symbol: String, line: usize },
    #[error("inventory has no `<unk>` entry")]
    MissingUnk,
    #[error("failed to read inventory {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneKind {
    StandardArpabet,
    UnknownTag,
    L2Extension,
}

/// A single validated phone symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phone(String);

impl Phone {
    /// Builds a phone from an already-normalized symbol.
    ///
    /// The symbol must be `<unk>` or 1–3 uppercase ASCII letters.
    pub fn new(symbol: &str) -> Result<Self, PhoneError> {
        if symbol.eq_ignore_ascii_case(UNK) {
            return Ok(Phone::unk());
        }
        let valid = (1..=3).contains(&symbol.len())
            && symbol.bytes().all(|b| b.is_ascii_uppercase());
        if valid {
            Ok(Phone(symbol.to_owned()))
        } else {
            Err(PhoneError::InvalidSymbol(symbol.to_owned()))
        }
    }

    pub fn unk() -> Self {
        Phone(UNK.to_owned())
    }

    pub fn symbol(&self) -> &str {
        &self.0
    }

    pub fn kind(&self) -> PhoneKind {
        if self.0 == UNK {
            PhoneKind::UnknownTag
        } else if ARPABET.contains(&self.0.as_str()) {
            PhoneKind::StandardArpabet
        } else {
            PhoneKind::L2Extension
        }
    }

    pub fn is_unk(&self) -> bool {
        self.0 == UNK
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered phone sequence. Serializes as the space-joined symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PhoneSequence(Vec<Phone>);

impl PhoneSequence {
    pub fn new(phones: Vec<Phone>) -> Self {
        PhoneSequence(phones)
    }

    pub fn phones(&self) -> &[Phone] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Phone> {
        self.0.iter()
    }

    pub fn first(&self) -> Option<&Phone> {
        self.0.first()
    }

    pub fn last(&self) -> Option<&Phone> {
        self.0.last()
    }

    /// Joins the symbols with single spaces.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(p.symbol());
        }
        out
    }

    /// Parses a rendered sequence without consulting an inventory. Symbols
    /// are only checked for shape; use [`PhoneInventory::validate`] for
    /// membership.
    pub fn parse_unchecked(text: &str) -> Result<Self, PhoneError> {
        text.split_whitespace()
            .map(|t| Phone::new(&normalize_token(t)))
            .collect::<Result<Vec<_>, _>>()
            .map(PhoneSequence)
    }

    pub fn into_vec(self) -> Vec<Phone> {
        self.0
    }
}

impl From<Vec<Phone>> for PhoneSequence {
    fn from(v: Vec<Phone>) -> Self {
        PhoneSequence(v)
    }
}

impl FromIterator<Phone> for PhoneSequence {
    fn from_iter<I: IntoIterator<Item = Phone>>(iter: I) -> Self {
        PhoneSequence(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PhoneSequence {
    type Item = &'a Phone;
    type IntoIter = std::slice::Iter<'a, Phone>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl fmt::Display for PhoneSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for PhoneSequence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for PhoneSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        PhoneSequence::parse_unchecked(&text).map_err(serde::de::Error::custom)
    }
}

/// Removes trailing stress digits (0, 1 or 2) from a raw token.
pub fn strip_stress(token: &str) -> &str {
    token.trim_end_matches(['0', '1', '2'])
}

/// Uppercases and strips stress; `<unk>` is matched case-insensitively.
fn normalize_token(token: &str) -> String {
    if token.eq_ignore_ascii_case(UNK) {
        return UNK.to_owned();
    }
    strip_stress(&token.to_ascii_uppercase()).to_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizeMode {
    /// Unknown tokens are an error.
    Strict,
    /// Unknown tokens become `<unk>` and are counted.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenized {
    pub sequence: PhoneSequence,
    /// Number of tokens mapped to `<unk>` in lenient mode.
    pub unknown: usize,
}

/// A validated, immutable set of phone symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    name: String,
    phones: BTreeSet<Phone>,
}

impl PhoneInventory {
    /// The inventory bundled with the crate.
    pub fn default_inventory() -> Self {
        Self::parse("default", DEFAULT_INVENTORY).expect("bundled inventory is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PhoneError> {
        let text = std::fs::read_to_string(path).map_err(|source| PhoneError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "inventory".to_owned());
        Self::parse(&name, &text)
    }

    /// Parses inventory text: one symbol per line, `#` comments and blank
    /// lines ignored, symbols uppercased before validation.
    pub fn parse(name: &str, text: &str) -> Result<Self, PhoneError> {
        let mut phones = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let symbol = if line.eq_ignore_ascii_case(UNK) {
                UNK.to_owned()
            } else {
                line.to_ascii_uppercase()
            };
            let phone = Phone::new(&symbol)?;
            if !phones.insert(phone) {
                return Err(PhoneError::DuplicatePhone {
                    symbol,
                    line: idx + 1,
                });
            }
        }
        if !phones.contains(&Phone::unk()) {
            return Err(PhoneError::MissingUnk);
        }
        Ok(PhoneInventory {
            name: name.to_owned(),
            phones,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }

    pub fn contains(&self, phone: &Phone) -> bool {
        self.phones.contains(phone)
    }

    pub fn lookup(&self, symbol: &str) -> Option<&Phone> {
        self.phones.get(&Phone(normalize_token(symbol)))
    }

    /// Phones in symbol order.
    pub fn phones(&self) -> impl Iterator<Item = &Phone> {
        self.phones.iter()
    }

    /// Every phone except `<unk>`, in symbol order.
    pub fn known_phones(&self) -> Vec<&Phone> {
        self.phones.iter().filter(|p| !p.is_unk()).collect()
    }

    pub fn count_kind(&self, kind: PhoneKind) -> usize {
        self.phones.iter().filter(|p| p.kind() == kind).count()
    }

    /// Returns the position of the first phone not in the inventory.
    pub fn validate(&self, seq: &PhoneSequence) -> Result<(), PhoneError> {
        match seq.iter().position(|p| !self.contains(p)) {
            None => Ok(()),
            Some(position) => Err(PhoneError::UnknownPhone {
                symbol: seq.phones()[position].symbol().to_owned(),
                position,
            }),
        }
    }

    pub fn tokenize(&self, text: &str, mode: TokenizeMode) -> Result<Tokenized, PhoneError> {
        tokenize(text, self, mode)
    }

    pub fn tokenize_strict(&self, text: &str) -> Result<PhoneSequence, PhoneError> {
        tokenize(text, self, TokenizeMode::Strict).map(|t| t.sequence)
    }

    pub fn tokenize_lenient(&self, text: &str) -> Tokenized {
        tokenize(text, self, TokenizeMode::Lenient).expect("lenient tokenization never fails")
    }
}

/// Splits a phoneme transcript on whitespace and validates each token
/// against the inventory after uppercasing and stress stripping.
pub fn tokenize(
    text: &str,
    inventory: &PhoneInventory,
    mode: TokenizeMode,
) -> Result<Tokenized, PhoneError> {
    let mut phones = Vec::new();
    let mut unknown = 0;
    for (position, raw) in text.split_whitespace().enumerate() {
        match inventory.lookup(raw) {
            Some(p) => phones.push(p.clone()),
            None => match mode {
                TokenizeMode::Strict => {
                    return Err(PhoneError::UnknownPhone {
                        symbol: raw.to_owned(),
                        position,
                    })
                }
                TokenizeMode::Lenient => {
                    unknown += 1;
                    phones.push(Phone::unk());
                }
            },
        }
    }
    Ok(Tokenized {
        sequence: PhoneSequence(phones),
        unknown,
    })
}
