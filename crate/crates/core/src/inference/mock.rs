//! Deterministic stand-in for a model.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{CallError, InferenceError, InferenceRequest};
use crate::corpus::Utterance;
use crate::parsing::{serialize_apa, serialize_mdd, ApaScores};
use crate::phoneset::{Phone, PhoneInventory, PhoneSequence};
use crate::prompts::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Human scores and perceived phones, verbatim.
    Oracle,
    /// Human scores and the canonical phones, so nothing is flagged.
    Canonical,
    /// Oracle output with seeded random substitutions and score jitter.
    Noisy,
    /// Fixed scores and the canonical phones.
    Constant,
}

impl MockMode {
    pub fn label(self) -> &'static str {
        match self {
            MockMode::Oracle => "oracle",
            MockMode::Canonical => "canonical",
            MockMode::Noisy => "noisy",
            MockMode::Constant => "constant",
        }
    }
}

impl FromStr for MockMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(MockMode::Oracle),
            "canonical" => Ok(MockMode::Canonical),
            "noisy" => Ok(MockMode::Noisy),
            "constant" => Ok(MockMode::Constant),
            other => Err(format!(
                "unknown mock mode {other:?} (expected oracle, canonical, noisy or constant)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockPolicy {
    pub mode: MockMode,
    pub seed: u64,
    pub substitution_rate: f64,
    pub constant_scores: ApaScores,
}

impl MockPolicy {
    pub fn new(mode: MockMode) -> Self {
        MockPolicy {
            mode,
            seed: 0,
            substitution_rate: 0.0,
            constant_scores: ApaScores {
                accuracy: 5,
                fluency: 5,
                prosodic: 5,
                total: 5,
            },
        }
    }

    pub fn noisy(seed: u64, substitution_rate: f64) -> Self {
        MockPolicy {
            seed,
            substitution_rate,
            ..MockPolicy::new(MockMode::Noisy)
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(0.0..=1.0).contains(&self.substitution_rate) {
            return Err(InferenceError::InvalidPolicy(format!(
                "substitution rate {} is outside [0, 1]",
                self.substitution_rate
            )));
        }
        let s = &self.constant_scores;
        if [s.accuracy, s.fluency, s.prosodic, s.total].iter().any(|&v| v > 10) {
            return Err(InferenceError::InvalidPolicy("constant scores must be within 0..=10".into()));
        }
        Ok(())
    }

    pub fn backend_id(&self) -> String {
        match self.mode {
            MockMode::Noisy => format!("mock:noisy:seed={}:rate={}", self.seed, self.substitution_rate),
            m => format!("mock:{}", m.label()),
        }
    }
}

fn rng_for(seed: u64, utt_id: &str, task: Task) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(utt_id.as_bytes());
    h.update([0]);
    h.update(task.label().as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn human_scores(utt: &Utterance) -> ApaScores {
    ApaScores {
        accuracy: utt.scores.accuracy,
        fluency: utt.scores.fluency,
        prosodic: utt.scores.prosodic,
        total: utt.scores.total,
    }
}

fn jitter(rng: &mut ChaCha8Rng, v: u8, rate: f64) -> u8 {
    if rng.random::<f64>() >= rate {
        return v;
    }
    if rng.random::<bool>() {
        (v + 1).min(10)
    } else {
        v.saturating_sub(1)
    }
}

fn substitute(rng: &mut ChaCha8Rng, seq: &PhoneSequence, pool: &[&Phone], rate: f64) -> PhoneSequence {
    seq.iter()
        .map(|p| {
            if rng.random::<f64>() >= rate {
                return p.clone();
            }
            let others: Vec<&&Phone> = pool.iter().filter(|q| **q != p).collect();
            if others.is_empty() {
                p.clone()
            } else {
                (*others[rng.random_range(0..others.len())]).clone()
            }
        })
        .collect()
}

/// Response text the mock gives for one utterance and task. Depends only on
/// the policy, the utterance and the task.
pub fn mock_respond(utt: &Utterance, task: Task, policy: &MockPolicy, inventory: &PhoneInventory) -> String {
    match (task, policy.mode) {
        (Task::Apa, MockMode::Constant) => serialize_apa(&policy.constant_scores),
        (Task::Apa, MockMode::Noisy) => {
            let mut rng = rng_for(policy.seed, &utt.utt_id, task);
            let s = human_scores(utt);
            let rate = policy.substitution_rate;
            serialize_apa(&ApaScores {
                accuracy: jitter(&mut rng, s.accuracy, rate),
                fluency: jitter(&mut rng, s.fluency, rate),
                prosodic: jitter(&mut rng, s.prosodic, rate),
                total: jitter(&mut rng, s.total, rate),
            })
        }
        (Task::Apa, _) => serialize_apa(&human_scores(utt)),
        (Task::Mdd, MockMode::Oracle) => serialize_mdd(&utt.word_text, &utt.perceived_phones),
        (Task::Mdd, MockMode::Canonical | MockMode::Constant) => {
            serialize_mdd(&utt.word_text, &utt.canonical_phones)
        }
        (Task::Mdd, MockMode::Noisy) => {
            let mut rng = rng_for(policy.seed, &utt.utt_id, task);
            let pool = inventory.known_phones();
            let heard = substitute(&mut rng, &utt.perceived_phones, &pool, policy.substitution_rate);
            serialize_mdd(&utt.word_text, &heard)
        }
    }
}

/// In-process backend around [`mock_respond`], with an in-flight counter.
pub struct MockBackend {
    policy: MockPolicy,
    inventory: Arc<PhoneInventory>,
    delay: Duration,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(policy: MockPolicy, inventory: Arc<PhoneInventory>) -> Result<Self, InferenceError> {
        policy.validate()?;
        Ok(MockBackend {
            policy,
            inventory,
            delay: Duration::ZERO,
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        })
    }

    /// Simulated per-call latency.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn id(&self) -> String {
        self.policy.backend_id()
    }

    pub fn policy(&self) -> &MockPolicy {
        &self.policy
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    /// Highest number of simultaneous calls seen so far.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub(crate) fn enter(&self) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
    }

    pub(crate) fn leave(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }

    pub(crate) async fn respond(&self, utt: &Utterance, task: Task) -> String {
        self.enter();
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let text = mock_respond(utt, task, &self.policy, &self.inventory);
        self.leave();
        text
    }

    pub(crate) async fn call(&self, req: &InferenceRequest, utt: &Utterance) -> Result<String, CallError> {
        Ok(self.respond(utt, req.task).await)
    }
}
