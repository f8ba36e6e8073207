use serde::{Deserialize, Serialize};

use crate::domain::{InterventionConfig, Message, MessageKind, RoomId, TriggerStrategyId};

/// Per-room counter of public human messages since the last agent post.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerState {
    pub humans_since_last_agent: u32,
    pub pipeline_in_flight: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionRequest {
    pub room_id: RoomId,
    /// Seq of the public message that completed the window.
    pub trigger_seq: u64,
    pub humans_counted: u32,
}

/// Decides when the agent speaks. Implementations must keep at most one
/// pipeline in flight per room.
pub trait TriggerStrategy {
    fn on_human_message(
        &self,
        state: &mut TriggerState,
        cfg: &InterventionConfig,
        msg: &Message,
    ) -> Option<InterventionRequest>;

    fn on_agent_posted(&self, state: &mut TriggerState) {
        state.humans_since_last_agent = 0;
        state.pipeline_in_flight = false;
    }

    /// A failed pipeline starts a fresh window instead of retrying at once.
    fn on_pipeline_failed(&self, state: &mut TriggerState) {
        state.humans_since_last_agent = 0;
        state.pipeline_in_flight = false;
    }
}

/// Fires once `cadence_k` public human messages have arrived since the last
/// agent message. Messages admitted while a pipeline runs are still counted,
/// but the window restarts when the agent posts.
#[derive(Debug, Clone, Copy, Default)]
pub struct MessageCadence;

impl TriggerStrategy for MessageCadence {
    fn on_human_message(
        &self,
        state: &mut TriggerState,
        cfg: &InterventionConfig,
        msg: &Message,
    ) -> Option<InterventionRequest> {
        if msg.kind != MessageKind::HumanPublic {
            return None;
        }
        state.humans_since_last_agent = state.humans_since_last_agent.saturating_add(1);
        if state.pipeline_in_flight || state.humans_since_last_agent < cfg.cadence_k {
            return None;
        }
        state.pipeline_in_flight = true;
        Some(InterventionRequest {
            room_id: msg.room_id.clone(),
            trigger_seq: msg.seq,
            humans_counted: state.humans_since_last_agent,
        })
    }
}

pub fn strategy_for(id: TriggerStrategyId) -> impl TriggerStrategy {
    match id {
        TriggerStrategyId::MessageCadence => MessageCadence,
    }
}

/// Dispatches to the strategy selected in `cfg`.
pub fn on_human_message(state: &mut TriggerState, cfg: &InterventionConfig, msg: &Message) -> Option<InterventionRequest> {
    strategy_for(cfg.trigger_strategy).on_human_message(state, cfg, msg)
}
