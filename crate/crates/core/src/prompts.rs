//! Task prompts, control tokens and supervised fine-tuning pairs.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Split, Utterance};
use crate::parsing::{serialize_apa, serialize_mdd, ApaScores};

pub const SFT_SCHEMA: &str = "capt-sft/1";

/// Marks where the audio token goes in an [`SftPair`]'s user text until
/// [`render_chat`] substitutes the configured token.
pub const AUDIO_PLACEHOLDER: &str = "<|audio|>";

pub const DEFAULT_AUDIO_TOKEN: &str = "<|audio_1|>";

const APA_PROMPT: &str = include_str!("../data/prompts/apa.txt");
const MDD_PROMPT: &str = include_str!("../data/prompts/mdd.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "APA")]
    Apa,
    #[serde(rename = "MDD")]
    Mdd,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Apa, Task::Mdd];

    pub fn label(self) -> &'static str {
        match self {
            Task::Apa => "APA",
            Task::Mdd => "MDD",
        }
    }

    pub fn control_token(self) -> ControlToken {
        match self {
            Task::Apa => ControlToken::Apa,
            Task::Mdd => ControlToken::Mdd,
        }
    }

    /// Task instruction text, without any control token.
    pub fn prompt_text(self) -> &'static str {
        match self {
            Task::Apa => APA_PROMPT.trim_end(),
            Task::Mdd => MDD_PROMPT.trim_end(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "apa" => Ok(Task::Apa),
            "mdd" => Ok(Task::Mdd),
            other => Err(format!("unknown task {other:?} (expected apa or mdd)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlToken {
    Apa,
    Mdd,
    None,
}

impl ControlToken {
    pub fn render(self) -> &'static str {
        match self {
            ControlToken::Apa => "<|APA|>",
            ControlToken::Mdd => "<|MDD|>",
            ControlToken::None => "",
        }
    }
}

/// The task prompt, prefixed by its control token and a newline when
/// `use_control_token` is set.
pub fn build_prompt(task: Task, use_control_token: bool) -> String {
    if use_control_token {
        format!("{}\n{}", task.control_token().render(), task.prompt_text())
    } else {
        task.prompt_text().to_owned()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("audio token must be nonempty")]
    EmptyAudioToken,
    #[error("audio token {token:?} occurs {count} times in the user turn of {utt_id}")]
    AudioTokenCount {
        utt_id: String,
        token: String,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftPair {
    pub utt_id: String,
    pub task: Task,
    pub user_text: String,
    pub assistant_text: String,
    pub audio_ref: String,
}

/// The assistant target for one utterance and task.
pub fn target_text(utt: &Utterance, task: Task) -> String {
    match task {
        Task::Apa => serialize_apa(&ApaScores {
            accuracy: utt.scores.accuracy,
            fluency: utt.scores.fluency,
            prosodic: utt.scores.prosodic,
            total: utt.scores.total,
        }),
        Task::Mdd => serialize_mdd(&utt.word_text, &utt.perceived_phones),
    }
}

pub fn build_pair(utt: &Utterance, task: Task, use_control_token: bool) -> SftPair {
    SftPair {
        utt_id: utt.utt_id.clone(),
        task,
        user_text: format!("{}\n{AUDIO_PLACEHOLDER}", build_prompt(task, use_control_token)),
        assistant_text: target_text(utt, task),
        audio_ref: utt.audio_ref.clone(),
    }
}

/// One APA and one MDD pair per utterance of `split`, ordered by
/// (utt_id, task).
pub fn build_sft(corpus: &Corpus, split: Split, use_control_token: bool) -> Vec<SftPair> {
    let mut utts: Vec<&Utterance> = corpus.split(split).collect();
    utts.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    utts.into_iter()
        .flat_map(|u| Task::ALL.map(|t| build_pair(u, t, use_control_token)))
        .collect()
}

/// A two-turn training record in `capt-sft/1` form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub utt_id: String,
    pub task: Task,
    pub user: String,
    pub assistant: String,
    pub audio: String,
}

impl ChatRecord {
    pub fn turns(&self) -> [(&'static str, &str); 2] {
        [("user", &self.user), ("assistant", &self.assistant)]
    }
}

pub fn render_chat(pair: &SftPair, audio_token: &str) -> Result<ChatRecord, PromptError> {
    if audio_token.is_empty() {
        return Err(PromptError::EmptyAudioToken);
    }
    Ok(ChatRecord {
        utt_id: pair.utt_id.clone(),
        task: pair.task,
        user: pair.user_text.replacen(AUDIO_PLACEHOLDER, audio_token, 1),
        assistant: pair.assistant_text.clone(),
        audio: pair.audio_ref.clone(),
    })
}

/// Inverse of [`render_chat`].
pub fn parse_chat(record: &ChatRecord, audio_token: &str) -> Result<SftPair, PromptError> {
    if audio_token.is_empty() {
        return Err(PromptError::EmptyAudioToken);
    }
    let count = record.user.matches(audio_token).count();
    if count != 1 {
        return Err(PromptError::AudioTokenCount {
            utt_id: record.utt_id.clone(),
            token: audio_token.to_owned(),
            count,
        });
    }
    Ok(SftPair {
        utt_id: record.utt_id.clone(),
        task: record.task,
        user_text: record.user.replacen(audio_token, AUDIO_PLACEHOLDER, 1),
        assistant_text: record.assistant.clone(),
        audio_ref: record.audio.clone(),
    })
}

#[derive(Serialize)]
struct SftHeader<'a> {
    schema: &'a str,
    split: Split,
    control_tokens: bool,
    audio_token: &'a str,
    records: usize,
}

/// Writes rendered pairs as `capt-sft/1` newline-delimited JSON.
pub fn write_sft<W: Write>(
    mut out: W,
    pairs: &[SftPair],
    split: Split,
    control_tokens: bool,
    audio_token: &str,
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    serde_json::to_writer(
        &mut out,
        &SftHeader {
            schema: SFT_SCHEMA,
            split,
            control_tokens,
            audio_token,
            records: pairs.len(),
        },
    )?;
    out.write_all(b"\n")?;
    for p in pairs {
        serde_json::to_writer(&mut out, &render_chat(p, audio_token)?)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
