//! Simulated sessions: scripted participants with fixed schedules, or persona
//! participants whose messages come from the completion provider. Both speak
//! the wire protocol to an in-process server.

mod runner;
mod script;

pub use runner::{
    hub_settings, run_persona_session, run_scripted_session, sim_session_id, simulate_personas, simulate_script,
    SimOutcome, SIM_EPOCH_MS,
};
pub use script::{
    fill_options, ActionKind, EvaluationScript, Persona, PersonaSet, Script, ScriptAction, ScriptParticipant,
    StopCondition, REFERENCE_PERSONAS, REFERENCE_SCRIPT,
};
