use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instrument::InstrumentSet;
use super::questionnaire::QuestionnaireResponse;
use crate::domain::{pseudonym_for, Condition, ParticipantId, ParticipantRole, RoleKind, SessionId, TaskSpec};
use crate::error::{Result, SessionError};

pub const PARTY_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    TeamBuilding,
    Task { index: usize, condition: Condition },
    Questionnaire { index: usize },
    Evaluation,
    Completed,
    Aborted,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Lobby => "lobby",
            Phase::TeamBuilding => "team_building",
            Phase::Task { .. } => "task",
            Phase::Questionnaire { .. } => "questionnaire",
            Phase::Evaluation => "evaluation",
            Phase::Completed => "completed",
            Phase::Aborted => "aborted",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Phase::Completed | Phase::Aborted)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Task { index, condition } => write!(f, "task({index}, {condition:?})"),
            Phase::Questionnaire { index } => write!(f, "questionnaire({index})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTrigger {
    Admin,
    Timer,
    AllQuestionnairesIn,
}

impl fmt::Display for PhaseTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseTrigger::Admin => "admin",
            PhaseTrigger::Timer => "timer",
            PhaseTrigger::AllQuestionnairesIn => "all-questionnaires-in",
        })
    }
}

/// Picks the junior uniformly at random from four distinct participants; the
/// other three are seniors. Deterministic for a given seed.
pub fn assign_roles(participants: &[ParticipantId], seed: u64) -> Result<BTreeMap<ParticipantId, ParticipantRole>> {
    let distinct: BTreeSet<&ParticipantId> = participants.iter().collect();
    if participants.len() != PARTY_SIZE || distinct.len() != PARTY_SIZE {
        return Err(SessionError::WrongPartySize(distinct.len().min(participants.len())).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let junior = rng.random_range(0..PARTY_SIZE);
    Ok(participants
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let kind = if i == junior { RoleKind::Junior } else { RoleKind::Senior };
            (p.clone(), ParticipantRole::new(kind))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Even-numbered sessions in a batch run baseline first, odd ones treatment first.
    Counterbalance,
    Fixed([Condition; 2]),
}

pub fn condition_order_for(batch_index: usize, policy: OrderPolicy) -> [Condition; 2] {
    match policy {
        OrderPolicy::Fixed(order) => order,
        OrderPolicy::Counterbalance if batch_index.is_multiple_of(2) => [Condition::Baseline, Condition::Treatment],
        OrderPolicy::Counterbalance => [Condition::Treatment, Condition::Baseline],
    }
}

/// One experiment instance and its phase machine:
/// Lobby, TeamBuilding, (Task, Questionnaire) twice, Evaluation, Completed.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: SessionId,
    pub participants: Vec<ParticipantId>,
    pub roles: BTreeMap<ParticipantId, ParticipantRole>,
    pub condition_order: [Condition; 2],
    pub tasks: Vec<TaskSpec>,
    pub phase: Phase,
    pub rng_seed: u64,
    pseudonyms: BTreeMap<ParticipantId, String>,
    submissions: BTreeSet<(usize, ParticipantId)>,
}

impl Session {
    pub fn new(
        id: SessionId,
        participants: Vec<ParticipantId>,
        seed: u64,
        condition_order: [Condition; 2],
        tasks: Vec<TaskSpec>,
    ) -> Result<Self> {
        let roles = assign_roles(&participants, seed)?;
        if condition_order[0] == condition_order[1] {
            return Err(SessionError::InvalidResponse("condition order must contain both conditions".into()).into());
        }
        if tasks.len() != 2 {
            return Err(SessionError::UnknownTask(format!("expected 2 tasks, got {}", tasks.len())).into());
        }
        Ok(Self {
            id,
            participants,
            roles,
            condition_order,
            tasks,
            phase: Phase::Lobby,
            rng_seed: seed,
            pseudonyms: BTreeMap::new(),
            submissions: BTreeSet::new(),
        })
    }

    pub fn role(&self, participant: &ParticipantId) -> Result<ParticipantRole> {
        self.roles
            .get(participant)
            .copied()
            .ok_or_else(|| SessionError::UnknownParticipant(participant.to_string()).into())
    }

    pub fn pseudonym(&self, participant: &ParticipantId) -> Option<&str> {
        self.pseudonyms.get(participant).map(String::as_str)
    }

    pub fn pseudonyms(&self) -> &BTreeMap<ParticipantId, String> {
        &self.pseudonyms
    }

    /// Gives the participant the next free "Member X" handle on first join.
    pub fn ensure_pseudonym(&mut self, participant: &ParticipantId) -> Result<String> {
        self.role(participant)?;
        if let Some(name) = self.pseudonyms.get(participant) {
            return Ok(name.clone());
        }
        let name = pseudonym_for(self.pseudonyms.len());
        self.pseudonyms.insert(participant.clone(), name.clone());
        Ok(name)
    }

    /// Handles for all four participants, assigning any still missing in
    /// participant order.
    pub fn all_pseudonyms(&mut self) -> Vec<String> {
        let participants = self.participants.clone();
        participants
            .iter()
            .map(|p| self.ensure_pseudonym(p).expect("session participant"))
            .collect()
    }

    pub fn participant_by_pseudonym(&self, pseudonym: &str) -> Option<&ParticipantId> {
        self.pseudonyms.iter().find(|(_, n)| n.as_str() == pseudonym).map(|(p, _)| p)
    }

    pub fn condition_of(&self, task_index: usize) -> Option<Condition> {
        self.condition_order.get(task_index).copied()
    }

    pub fn current_task(&self) -> Option<(usize, &TaskSpec, Condition)> {
        match self.phase {
            Phase::Task { index, condition } => Some((index, &self.tasks[index], condition)),
            _ => None,
        }
    }

    /// Senior or junior briefing for the running task; never broadcast.
    pub fn deliver_briefing(&self, participant: &ParticipantId) -> Result<&str> {
        let role = self.role(participant)?;
        match self.phase {
            Phase::Task { index, .. } => Ok(self.tasks[index].briefing_for(role.kind())),
            other => Err(SessionError::WrongPhase(other.to_string()).into()),
        }
    }

    pub fn submissions_for(&self, task_index: usize) -> usize {
        self.submissions.iter().filter(|(t, _)| *t == task_index).count()
    }

    pub fn has_submitted(&self, task_index: usize, participant: &ParticipantId) -> bool {
        self.submissions.contains(&(task_index, participant.clone()))
    }

    /// Moves to the next phase if `trigger` is legal here. A questionnaire
    /// phase that has not heard from everyone stays put on
    /// `AllQuestionnairesIn`; the admin can still force it.
    pub fn advance_phase(&mut self, trigger: PhaseTrigger) -> Result<Phase> {
        use PhaseTrigger::*;
        let illegal = || SessionError::IllegalTransition {
            from: self.phase.to_string(),
            trigger: trigger.to_string(),
        };
        let next = match (self.phase, trigger) {
            (Phase::Lobby, Admin) => Phase::TeamBuilding,
            (Phase::TeamBuilding, Admin | Timer) => Phase::Task {
                index: 0,
                condition: self.condition_order[0],
            },
            (Phase::Task { index, .. }, Admin | Timer) => Phase::Questionnaire { index },
            (Phase::Questionnaire { index }, AllQuestionnairesIn) if self.submissions_for(index) < PARTY_SIZE => {
                return Ok(self.phase);
            }
            (Phase::Questionnaire { index }, Admin | AllQuestionnairesIn) => {
                if index + 1 < self.tasks.len() {
                    Phase::Task {
                        index: index + 1,
                        condition: self.condition_order[index + 1],
                    }
                } else {
                    Phase::Evaluation
                }
            }
            (Phase::Evaluation, Admin) => Phase::Completed,
            _ => return Err(illegal().into()),
        };
        self.phase = next;
        Ok(next)
    }

    pub fn abort(&mut self) -> Result<Phase> {
        if self.phase.is_terminal() {
            return Err(SessionError::IllegalTransition {
                from: self.phase.to_string(),
                trigger: "abort".into(),
            }
            .into());
        }
        self.phase = Phase::Aborted;
        Ok(self.phase)
    }

    /// Validates and registers a questionnaire; persistence is the caller's job.
    pub fn record_questionnaire(&mut self, response: &QuestionnaireResponse, instruments: &InstrumentSet) -> Result<String> {
        match self.phase {
            Phase::Questionnaire { index } if index == response.task_index => {}
            other => return Err(SessionError::WrongPhase(other.to_string()).into()),
        }
        if response.session_id != self.id {
            return Err(SessionError::UnknownSession(response.session_id.to_string()).into());
        }
        self.role(&response.participant_id)?;
        if self.has_submitted(response.task_index, &response.participant_id) {
            return Err(SessionError::DuplicateSubmission {
                participant: response.participant_id.to_string(),
                task_index: response.task_index,
            }
            .into());
        }
        let condition = self.condition_order[response.task_index];
        response.validate(condition, instruments)?;
        self.submissions.insert((response.task_index, response.participant_id.clone()));
        Ok(response.response_id())
    }
}
