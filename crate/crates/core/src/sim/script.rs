use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{pseudonym_for, ParticipantId, RoleKind, TaskSpec};
use crate::error::{Result, SimError};
use crate::pipeline::render;

pub const REFERENCE_SCRIPT: &str = include_str!("../../assets/scripts/reference_flow.json");
pub const REFERENCE_PERSONAS: &str = include_str!("../../assets/personas/promotion_team.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    #[default]
    Public,
    Dm,
}

/// One scripted post. `delay_ms` counts from the participant's previous
/// action, or from the task start for the first one. Text may use
/// `{option1}`..`{option3}`, filled with the current task's option labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptAction {
    pub delay_ms: u64,
    #[serde(default)]
    pub kind: ActionKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipient: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptParticipant {
    pub id: ParticipantId,
    #[serde(default)]
    pub actions: Vec<ScriptAction>,
}

/// When the driver ends a task: after every action has run, after a number
/// of public human messages, or after a fixed time from task start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    #[default]
    Exhausted,
    Messages(u64),
    TimeMs(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvaluationScript {
    /// Posted by the seniors in turn, 2 s apart. `{junior}` is replaced by
    /// the junior's pseudonym.
    #[serde(default)]
    pub messages: Vec<String>,
    #[serde(default)]
    pub bonus_awarded: bool,
    #[serde(default)]
    pub note: Option<String>,
}

/// A deterministic schedule for four participants, replayed in every task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub participants: Vec<ScriptParticipant>,
    #[serde(default)]
    pub stop: StopCondition,
    /// Quiet time after the stop condition so running pipelines can finish.
    #[serde(default = "default_settle")]
    pub settle_ms: u64,
    #[serde(default)]
    pub evaluation: EvaluationScript,
}

fn default_settle() -> u64 {
    5_000
}

impl Script {
    pub fn from_json(json: &str) -> Result<Self> {
        let script: Script = serde_json::from_str(json).map_err(|e| SimError::InvalidScript(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn reference() -> Self {
        Self::from_json(REFERENCE_SCRIPT).expect("shipped script is valid")
    }

    pub fn participant_ids(&self) -> Vec<ParticipantId> {
        self.participants.iter().map(|p| p.id.clone()).collect()
    }

    /// Participants get "Member A".."Member D" in script order, so DM
    /// recipients can be checked up front.
    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<&ParticipantId> = self.participants.iter().map(|p| &p.id).collect();
        if self.participants.len() != 4 || ids.len() != 4 {
            return Err(SimError::ScriptParticipantMismatch(ids.len()).into());
        }
        let names: Vec<String> = (0..4).map(pseudonym_for).collect();
        for (i, p) in self.participants.iter().enumerate() {
            for a in &p.actions {
                match (a.kind, a.recipient.as_deref()) {
                    (ActionKind::Dm, Some(to)) if names.iter().any(|n| n == to) && to != names[i] => {}
                    (ActionKind::Dm, other) => {
                        return Err(SimError::InvalidScript(format!("{}: bad DM recipient {other:?}", p.id)).into())
                    }
                    (ActionKind::Public, Some(_)) => {
                        return Err(SimError::InvalidScript(format!("{}: public action with recipient", p.id)).into())
                    }
                    (ActionKind::Public, None) => {}
                }
            }
        }
        Ok(())
    }

    /// Counts of public actions across all participants.
    pub fn public_actions(&self) -> usize {
        self.participants
            .iter()
            .flat_map(|p| &p.actions)
            .filter(|a| a.kind == ActionKind::Public)
            .count()
    }
}

/// Fills `{option1}`..`{option3}` from the task.
pub fn fill_options(text: &str, task: &TaskSpec) -> String {
    let keys = ["option1", "option2", "option3"];
    let values: BTreeMap<&str, String> = keys
        .iter()
        .zip(task.option_labels())
        .map(|(k, v)| (*k, v.to_string()))
        .collect();
    render(text, &values).unwrap_or_else(|_| text.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: ParticipantId,
    pub profile: String,
    /// Role this persona should play; matched against the seeded assignment.
    #[serde(default)]
    pub role: Option<RoleKind>,
    /// Index of the option the persona starts out favoring.
    #[serde(default)]
    pub leaning: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSet {
    pub personas: Vec<Persona>,
    #[serde(default = "default_turns")]
    pub turns_per_task: usize,
    #[serde(default = "default_interval")]
    pub turn_interval_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    #[serde(default = "default_window")]
    pub history_window: usize,
}

fn default_turns() -> usize {
    16
}

fn default_interval() -> u64 {
    10_000
}

fn default_window() -> usize {
    12
}

impl PersonaSet {
    pub fn from_json(json: &str) -> Result<Self> {
        let set: PersonaSet = serde_json::from_str(json).map_err(|e| SimError::InvalidScript(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn reference() -> Self {
        Self::from_json(REFERENCE_PERSONAS).expect("shipped personas are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let ids: BTreeSet<&ParticipantId> = self.personas.iter().map(|p| &p.id).collect();
        if self.personas.len() != 4 || ids.len() != 4 {
            return Err(SimError::ScriptParticipantMismatch(ids.len()).into());
        }
        let juniors = self.personas.iter().filter(|p| p.role == Some(RoleKind::Junior)).count();
        let seniors = self.personas.iter().filter(|p| p.role == Some(RoleKind::Senior)).count();
        if juniors > 1 || seniors > 3 {
            return Err(SimError::InvalidScript("at most one junior and three senior personas".into()).into());
        }
        if self.turns_per_task == 0 {
            return Err(SimError::InvalidScript("turns_per_task must be positive".into()).into());
        }
        Ok(())
    }

    /// Matches personas to seeded roles: role-tagged personas go to a
    /// participant of that role, the rest fill the remaining slots in order.
    /// Returns the persona index for each participant position.
    pub fn assign(&self, roles: &[RoleKind]) -> Vec<usize> {
        let mut slots: Vec<Option<usize>> = vec![None; roles.len()];
        for (pi, persona) in self.personas.iter().enumerate() {
            if let Some(want) = persona.role {
                if let Some(slot) = (0..roles.len()).find(|&s| slots[s].is_none() && roles[s] == want) {
                    slots[slot] = Some(pi);
                }
            }
        }
        let taken: Vec<usize> = slots.iter().flatten().copied().collect();
        let mut rest = (0..self.personas.len()).filter(|pi| !taken.contains(pi));
        slots
            .into_iter()
            .map(|s| s.or_else(|| rest.next()).expect("four personas for four slots"))
            .collect()
    }
}
