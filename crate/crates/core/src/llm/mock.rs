//! Deterministic provider for tests and simulation.
//!
//! Completions come from scripted rules first (prompt substring -> queued
//! responses), otherwise from templated text keyed by a hash of the seed and
//! the prompt. The templated responder reads the marker lines the shipped
//! prompt templates emit (`STAGE:`, `OPTIONS:`, `LEANINGS:`, `LEANING:` and the
//! `HISTORY:` block). Embeddings are 256-dim L2-normalized bags of hashed tokens.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionParams, LlmProvider, ProviderConfig};
use crate::error::LlmError;
use crate::pipeline::EmbeddingVector;

pub const MOCK_EMBEDDING_DIMS: usize = 256;

/// Scripted override: any prompt containing `pattern` gets the next queued
/// response; the last response repeats once the queue is drained. A response
/// equal to [`MockRule::FAIL`] makes the call fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    pub responses: Vec<String>,
}

impl MockRule {
    pub const FAIL: &'static str = "<provider-error>";

    pub fn new(pattern: impl Into<String>, responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            pattern: pattern.into(),
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Default)]
struct MockState {
    rules: Vec<(MockRule, usize)>,
    prompts: Vec<String>,
    embed_calls: usize,
}

#[derive(Debug)]
pub struct MockProvider {
    seed: u64,
    latency: Duration,
    fail_completions: bool,
    fail_embeddings: bool,
    state: Mutex<MockState>,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            latency: Duration::ZERO,
            fail_completions: false,
            fail_embeddings: false,
            state: Mutex::new(MockState::default()),
        }
    }

    pub fn from_config(cfg: &ProviderConfig) -> Self {
        let mut mock = Self::new(cfg.seed.unwrap_or_default())
            .with_latency(Duration::from_millis(cfg.mock_latency_ms))
            .failing_completions(cfg.mock_fail_completions);
        for rule in &cfg.mock_rules {
            mock.add_rule(rule.clone());
        }
        mock
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn failing_completions(mut self, fail: bool) -> Self {
        self.fail_completions = fail;
        self
    }

    pub fn failing_embeddings(mut self, fail: bool) -> Self {
        self.fail_embeddings = fail;
        self
    }

    pub fn add_rule(&mut self, rule: MockRule) {
        self.state.get_mut().expect("mock state poisoned").rules.push((rule, 0));
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.add_rule(rule);
        self
    }

    /// Every completion prompt received so far, in call order.
    pub fn prompts(&self) -> Vec<String> {
        self.state.lock().expect("mock state poisoned").prompts.clone()
    }

    pub fn completion_calls(&self) -> usize {
        self.state.lock().expect("mock state poisoned").prompts.len()
    }

    pub fn embed_calls(&self) -> usize {
        self.state.lock().expect("mock state poisoned").embed_calls
    }

    fn scripted(&self, state: &mut MockState, prompt: &str) -> Option<String> {
        for (rule, cursor) in state.rules.iter_mut() {
            if !prompt.contains(&rule.pattern) || rule.responses.is_empty() {
                continue;
            }
            let idx = (*cursor).min(rule.responses.len() - 1);
            *cursor += 1;
            return Some(rule.responses[idx].clone());
        }
        None
    }

    fn templated(&self, prompt: &str) -> String {
        let key = keyed_hash(self.seed, prompt);
        let markers = Markers::parse(prompt);
        match markers.stage.as_deref() {
            Some("summary") => summary_json(&markers),
            Some("counterargument") => counterargument(&markers, key),
            Some("persona") => persona_line(&markers, key),
            _ => format!("Mock response {key:016x}. Could we look at this from another angle?"),
        }
    }
}

#[async_trait]
impl LlmProvider for MockProvider {
    async fn complete(&self, prompt: &str, _params: &CompletionParams) -> Result<String, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let scripted = {
            let mut state = self.state.lock().expect("mock state poisoned");
            state.prompts.push(prompt.to_string());
            self.scripted(&mut state, prompt)
        };
        if self.fail_completions {
            return Err(LlmError::ProviderUnavailable("mock completions disabled".into()));
        }
        match scripted {
            Some(text) if text == MockRule::FAIL => Err(LlmError::ProviderUnavailable("scripted failure".into())),
            Some(text) => Ok(text),
            None => Ok(self.templated(prompt)),
        }
    }

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::EmptyText);
        }
        self.state.lock().expect("mock state poisoned").embed_calls += 1;
        if self.fail_embeddings {
            return Err(LlmError::ProviderUnavailable("mock embeddings disabled".into()));
        }
        Ok(mock_embedding(text))
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn keyed_hash(seed: u64, text: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(text.as_bytes());
    fnv1a64(&bytes)
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Bag of hashed tokens, one count per `fnv1a64(token) % 256`, L2-normalized.
/// Text without any alphanumeric token hashes as a single token.
pub fn mock_embedding(text: &str) -> EmbeddingVector {
    let mut counts = vec![0.0f64; MOCK_EMBEDDING_DIMS];
    let mut tokens = tokenize(text);
    if tokens.is_empty() {
        tokens.push(text.trim().to_string());
    }
    for token in &tokens {
        counts[(fnv1a64(token.as_bytes()) % MOCK_EMBEDDING_DIMS as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    let values = counts.into_iter().map(|c| c / norm).collect();
    EmbeddingVector::new(values).expect("mock embedding has fixed positive dims")
}

#[derive(Debug, Default)]
struct Markers {
    stage: Option<String>,
    options: Vec<String>,
    leanings: BTreeMap<String, String>,
    leaning: Option<String>,
    history: Vec<String>,
}

impl Markers {
    fn parse(prompt: &str) -> Self {
        let mut markers = Markers::default();
        let mut in_history = false;
        for line in prompt.lines() {
            let trimmed = line.trim();
            if in_history {
                if trimmed == "END HISTORY" {
                    in_history = false;
                } else if !trimmed.is_empty() {
                    markers.history.push(trimmed.to_string());
                }
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("STAGE:") {
                markers.stage = Some(rest.trim().to_lowercase());
            } else if let Some(rest) = trimmed.strip_prefix("OPTIONS:") {
                markers.options = rest.split('|').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            } else if let Some(rest) = trimmed.strip_prefix("LEANINGS:") {
                for pair in rest.split(';') {
                    if let Some((label, lean)) = pair.split_once('=') {
                        markers.leanings.insert(label.trim().to_string(), lean.trim().to_string());
                    }
                }
            } else if let Some(rest) = trimmed.strip_prefix("LEANING:") {
                let rest = rest.trim();
                if !rest.is_empty() {
                    markers.leaning = Some(rest.to_string());
                }
            } else if trimmed == "HISTORY:" {
                in_history = true;
            }
        }
        markers
    }

    fn favored(&self) -> Option<&str> {
        self.leanings.iter().find(|(_, lean)| lean.as_str() == "For").map(|(label, _)| label.as_str())
    }
}

fn mentions(text: &str, label: &str) -> bool {
    text.to_lowercase().contains(&label.to_lowercase())
}

fn summary_json(markers: &Markers) -> String {
    let mut counts: Vec<(usize, &str)> = markers
        .options
        .iter()
        .map(|label| (markers.history.iter().filter(|line| mentions(line, label)).count(), label.as_str()))
        .collect();
    // Stable: highest count first, ties keep option order.
    counts.sort_by_key(|c| std::cmp::Reverse(c.0));
    let top = counts.first().filter(|(n, _)| *n > 0).map(|(_, label)| *label);
    let mut leanings = serde_json::Map::new();
    for label in &markers.options {
        let lean = if Some(label.as_str()) == top { "For" } else { "Neutral" };
        leanings.insert(label.clone(), json!(lean));
    }
    let (majority, minority): (String, Vec<String>) = match top {
        Some(label) => (
            format!("Most members favor {label}"),
            counts
                .iter()
                .filter(|(n, l)| *n > 0 && *l != label)
                .map(|(_, l)| format!("Some support for {l}"))
                .collect(),
        ),
        None => ("The group has not settled on an option yet".into(), Vec::new()),
    };
    json!({
        "majority_stance": majority,
        "minority_stances": minority,
        "option_leanings": leanings,
    })
    .to_string()
}

const OPENINGS: [&str; 8] = [
    "I can see why {fav} feels like the safe choice, and that instinct makes sense.",
    "It is understandable that everyone is drawn to {fav}; steadiness matters.",
    "You have all made thoughtful points in favor of {fav}, and I respect that.",
    "Choosing {fav} sounds reasonable, especially given how much weight experience carries here.",
    "I hear a lot of agreement around {fav}, which shows real care for the team.",
    "There is clear comfort in {fav}, and nobody wants an avoidable mistake.",
    "Your confidence in {fav} is easy to follow, given what the profiles show.",
    "Backing {fav} reflects a genuine wish to protect the organization.",
];

const CHALLENGES: [&str; 8] = [
    "Still, {alt} brings a track record of measurable results that deserves a closer look.",
    "Yet {alt} might offer precisely the fresh perspective this situation calls for.",
    "However, awards and contribution scores suggest {alt} could outperform expectations.",
    "On the other hand, {alt} shows momentum, ambition, and recent achievements.",
    "Meanwhile, overlooking {alt} could mean missing strong long-term potential.",
    "At the same time, {alt} may handle change better than tenure alone predicts.",
    "Even so, the evidence behind {alt} points toward growth rather than risk.",
    "But consider that {alt} could raise standards for everyone involved.",
];

const QUESTIONS: [&str; 8] = [
    "What would we lose if we never seriously considered {alt}?",
    "Which concrete evidence makes {fav} stronger than {alt}, beyond familiarity?",
    "How might our decision look a year from now if {alt} had been chosen?",
    "Are we agreeing because the case is convincing, or because agreement feels comfortable?",
    "Could someone argue the opposite side, just to test our reasoning?",
    "What risks does {fav} carry that nobody has mentioned yet?",
    "If we had to defend this choice to an outside reviewer, would {fav} still win?",
    "Has everyone had a chance to share doubts before we settle?",
];

fn pick<'a>(pool: &'a [&'a str], key: u64, shift: u32) -> &'a str {
    pool[((key >> shift) % pool.len() as u64) as usize]
}

fn counterargument(markers: &Markers, key: u64) -> String {
    let fav = markers
        .favored()
        .map(str::to_string)
        .or_else(|| markers.options.first().cloned())
        .unwrap_or_else(|| "the current favorite".into());
    let alternatives: Vec<&String> = markers.options.iter().filter(|o| **o != fav).collect();
    let alt = if alternatives.is_empty() {
        "another option".to_string()
    } else {
        alternatives[((key >> 40) % alternatives.len() as u64) as usize].clone()
    };
    let fill = |s: &str| s.replace("{fav}", &fav).replace("{alt}", &alt);
    format!(
        "{} {} {}",
        fill(pick(&OPENINGS, key, 0)),
        fill(pick(&CHALLENGES, key, 8)),
        fill(pick(&QUESTIONS, key, 16))
    )
}

const REASONS: [&str; 6] = [
    "the record speaks for itself",
    "it fits what our team needs right now",
    "the numbers in the profile are convincing",
    "it balances risk and reward well",
    "I think it would hold up under scrutiny",
    "the long-term outlook seems better",
];

fn persona_line(markers: &Markers, key: u64) -> String {
    let label = markers
        .leaning
        .clone()
        .or_else(|| {
            (!markers.options.is_empty())
                .then(|| markers.options[(key % markers.options.len() as u64) as usize].clone())
        })
        .unwrap_or_else(|| "this option".into());
    format!("I lean toward {label} because {}.", pick(&REASONS, key, 24))
}
