use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::counter::{ends_with_question, rejected_section, RejectedDraft};
use super::prompts::{render, PromptStore};
use super::similarity::{check_duplicate, EmbeddingVector};
use super::summary::{parse_summary, StanceSummary};
use super::trigger::InterventionRequest;
use crate::domain::{InterventionConfig, Message, MessageKind, TaskSpec};
use crate::error::PipelineError;
use crate::llm::{CompletionParams, LlmProvider};

/// What the pipeline knows about the task under discussion.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiscussionContext {
    pub task_title: String,
    pub option_labels: Vec<String>,
}

impl From<&TaskSpec> for DiscussionContext {
    fn from(task: &TaskSpec) -> Self {
        Self {
            task_title: task.title.clone(),
            option_labels: task.options.iter().map(|o| o.label.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDraft {
    pub text: String,
    pub embedding: EmbeddingVector,
    /// Highest cosine similarity to any earlier agent message; -1 when there
    /// is no earlier message.
    pub max_similarity_to_history: f64,
    pub attempt_index: u32,
}

/// Result of one pipeline run, ready to be posted.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub draft: AgentDraft,
    pub summary: StanceSummary,
    /// Every attempt was a duplicate and the least similar draft was chosen.
    pub fallback: bool,
    pub attempts_used: u32,
}

/// Metadata persisted next to each agent message.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub attempt_index: u32,
    pub max_similarity: Option<f64>,
    pub fallback: bool,
    pub degraded_summary: bool,
}

impl AgentOutcome {
    pub fn meta(&self) -> AgentMeta {
        AgentMeta {
            attempt_index: self.draft.attempt_index,
            max_similarity: (self.draft.max_similarity_to_history > -1.0).then_some(self.draft.max_similarity_to_history),
            fallback: self.fallback,
            degraded_summary: self.summary.degraded,
        }
    }
}

pub struct DevilsAdvocate {
    provider: Arc<dyn LlmProvider>,
    prompts: Arc<PromptStore>,
    config: InterventionConfig,
}

fn format_history(history: &[Message]) -> String {
    history
        .iter()
        .filter(|m| m.kind == MessageKind::HumanPublic)
        .map(|m| format!("{}: {}", m.author.pseudonym().unwrap_or("?"), m.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl DevilsAdvocate {
    pub fn new(provider: Arc<dyn LlmProvider>, prompts: Arc<PromptStore>, config: InterventionConfig) -> Self {
        Self { provider, prompts, config }
    }

    pub fn config(&self) -> &InterventionConfig {
        &self.config
    }

    /// Summarizes the public part of `history`. A completion that cannot be
    /// parsed is retried once; after that the summary degrades to the last
    /// `cadence_k` public messages.
    pub async fn summarize(&self, ctx: &DiscussionContext, history: &[Message]) -> Result<StanceSummary, PipelineError> {
        let public: Vec<&Message> = history.iter().filter(|m| m.kind == MessageKind::HumanPublic).collect();
        if public.is_empty() {
            return Err(PipelineError::EmptyWindow);
        }
        let templates = self.prompts.current()?;
        let mut values = BTreeMap::new();
        values.insert("task_title", ctx.task_title.clone());
        values.insert("options", ctx.option_labels.join(" | "));
        values.insert("history", format_history(history));
        let prompt = render(&templates.summary, &values)?;
        let params = CompletionParams {
            temperature: 0.2,
            json_output: true,
            ..CompletionParams::default()
        };
        for attempt in 1..=2 {
            let completion = self.provider.complete(&prompt, &params).await?;
            if let Some(summary) = parse_summary(&completion) {
                return Ok(summary);
            }
            debug!(attempt, "summary completion did not parse");
        }
        let k = self.config.cadence_k as usize;
        let tail: Vec<&str> = public[public.len().saturating_sub(k)..].iter().map(|m| m.text.as_str()).collect();
        info!("summary degraded to the raw discussion tail");
        Ok(StanceSummary::degraded_from(&tail))
    }

    pub fn counterargument_prompt(
        &self,
        ctx: &DiscussionContext,
        summary: &StanceSummary,
        history: &[Message],
        rejected: &[RejectedDraft],
    ) -> Result<String, PipelineError> {
        let templates = self.prompts.current()?;
        let leanings = ctx
            .option_labels
            .iter()
            .map(|label| {
                let lean = summary.option_leanings.get(label).map_or("Neutral", |l| match l {
                    super::Leaning::For => "For",
                    super::Leaning::Against => "Against",
                    super::Leaning::Neutral => "Neutral",
                });
                format!("{label}={lean}")
            })
            .collect::<Vec<_>>()
            .join("; ");
        let minority = if summary.minority_stances.is_empty() {
            "none stated".to_string()
        } else {
            summary.minority_stances.join("; ")
        };
        let mut values = BTreeMap::new();
        values.insert("task_title", ctx.task_title.clone());
        values.insert("options", ctx.option_labels.join(" | "));
        values.insert("majority_stance", summary.majority_stance.replace('\n', " / "));
        values.insert("leanings", leanings);
        values.insert("minority_stances", minority);
        values.insert("history", format_history(history));
        values.insert("rejected_drafts", rejected_section(rejected));
        render(&templates.counterargument, &values)
    }

    /// One generation attempt. The returned text always ends with a question;
    /// a draft that does not comes back as `InvalidDraft` carrying its text so
    /// the caller can feed it into the next attempt.
    pub async fn generate_counterargument(
        &self,
        ctx: &DiscussionContext,
        summary: &StanceSummary,
        history: &[Message],
        rejected: &[RejectedDraft],
        attempt_index: u32,
    ) -> Result<String, PipelineError> {
        if attempt_index == 0 || attempt_index > self.config.max_regen_attempts {
            return Err(PipelineError::BudgetExhausted {
                attempt: attempt_index,
                max: self.config.max_regen_attempts,
            });
        }
        let prompt = self.counterargument_prompt(ctx, summary, history, rejected)?;
        let text = self.provider.complete(&prompt, &CompletionParams::default()).await?;
        let text = text.trim().to_string();
        if text.is_empty() || !ends_with_question(&text) {
            return Err(PipelineError::InvalidDraft(text));
        }
        Ok(text)
    }

    /// Summarize, then generate/embed/check up to `max_regen_attempts` times.
    /// The first unique draft wins; if every valid draft is a duplicate the
    /// least similar one is returned flagged as a fallback.
    pub async fn run(
        &self,
        request: &InterventionRequest,
        ctx: &DiscussionContext,
        history: &[Message],
        agent_history: &[EmbeddingVector],
    ) -> Result<AgentOutcome, PipelineError> {
        debug!(room = %request.room_id, seq = request.trigger_seq, "pipeline started");
        let summary = self.summarize(ctx, history).await?;
        let max = self.config.max_regen_attempts;
        let mut rejected: Vec<RejectedDraft> = Vec::new();
        let mut duplicates: Vec<AgentDraft> = Vec::new();
        for attempt in 1..=max {
            let text = match self.generate_counterargument(ctx, &summary, history, &rejected, attempt).await {
                Ok(text) => text,
                Err(PipelineError::InvalidDraft(invalid)) => {
                    rejected.push(RejectedDraft {
                        text: invalid,
                        reason: "does not end with a question".into(),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let embedding = self.provider.embed(&text).await?;
            let verdict = check_duplicate(&embedding, agent_history, self.config.similarity_threshold)?;
            let draft = AgentDraft {
                text,
                embedding,
                max_similarity_to_history: verdict.max_similarity().unwrap_or(-1.0),
                attempt_index: attempt,
            };
            if !verdict.is_duplicate() {
                return Ok(AgentOutcome {
                    draft,
                    summary,
                    fallback: false,
                    attempts_used: attempt,
                });
            }
            debug!(attempt, similarity = draft.max_similarity_to_history, "draft rejected as duplicate");
            rejected.push(RejectedDraft {
                text: draft.text.clone(),
                reason: "too similar to an earlier message".into(),
            });
            duplicates.push(draft);
        }
        // min_by keeps the first of equal elements.
        let least = duplicates
            .into_iter()
            .min_by(|a, b| a.max_similarity_to_history.total_cmp(&b.max_similarity_to_history))
            .ok_or(PipelineError::BudgetExhausted {
                attempt: max + 1,
                max,
            })?;
        Ok(AgentOutcome {
            draft: least,
            summary,
            fallback: true,
            attempts_used: max,
        })
    }
}
