//! Experiment protocol: role assignment, condition order, the phase machine,
//! private briefings and questionnaire collection.

mod instrument;
mod questionnaire;
mod state;
mod store;

pub use instrument::{Anchors, Instrument, InstrumentSet, Scale};
pub use questionnaire::{QuestionnaireResponse, ScaleScores, LIKERT_MAX, LIKERT_MIN, NASA_TLX_ITEMS};
pub use state::{assign_roles, condition_order_for, OrderPolicy, Phase, PhaseTrigger, Session};
pub use store::{EvaluationRecord, Manifest, ManifestParticipant, SessionStore};
