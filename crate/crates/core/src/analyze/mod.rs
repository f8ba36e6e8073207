//! Descriptive statistics over questionnaire responses and per-room
//! transcript metrics, read from session directories.

mod metrics;
mod stats;

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::session::{Manifest, QuestionnaireResponse, SessionStore};

pub use metrics::{reference_cadence, room_metrics, transcript_metrics, AgentSimilarity, CadenceReplay, RoomMetrics, SessionMetrics};
pub use stats::{
    aggregate, format_csv, format_table, sample_sd, CellStats, ConditionColumn, Group, AggregateStats, ABSENT, INFERENCE_NOTE,
};

/// One session directory: manifest, responses and room transcripts.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub responses: Vec<QuestionnaireResponse>,
}

impl SessionData {
    pub fn load(dir: &Path) -> Result<Self> {
        let store = SessionStore::open(dir);
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: store.read_manifest()?,
            responses: store.read_responses()?,
        })
    }

    pub fn store(&self) -> SessionStore {
        SessionStore::open(&self.dir)
    }
}

/// Loads every directory, sorted by session id so results do not depend on
/// argument order.
pub fn load_sessions(dirs: &[PathBuf]) -> Result<Vec<SessionData>> {
    let mut sessions = dirs.iter().map(|d| SessionData::load(d)).collect::<Result<Vec<_>>>()?;
    sessions.sort_by(|a, b| a.manifest.session_id.cmp(&b.manifest.session_id));
    Ok(sessions)
}
