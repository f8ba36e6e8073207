use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::questionnaire::QuestionnaireResponse;
use super::state::{Phase, Session};
use crate::chat::TranscriptWriter;
use crate::domain::{Condition, InterventionConfig, ParticipantId, ParticipantRole, RoomId, SessionId};
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESPONSES_FILE: &str = "responses.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParticipant {
    pub id: ParticipantId,
    pub role: ParticipantRole,
    pub pseudonym: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub bonus_awarded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub session_id: SessionId,
    pub rng_seed: u64,
    pub participants: Vec<ManifestParticipant>,
    pub condition_order: [Condition; 2],
    pub task_ids: Vec<String>,
    pub intervention: InterventionConfig,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationRecord>,
    #[serde(default)]
    pub pipeline_failures: u32,
}

impl Manifest {
    /// Snapshot of a session; all four pseudonyms are assigned if missing.
    pub fn from_session(session: &mut Session, intervention: &InterventionConfig) -> Self {
        session.all_pseudonyms();
        let participants = session
            .participants
            .iter()
            .map(|p| ManifestParticipant {
                id: p.clone(),
                role: session.roles[p],
                pseudonym: session.pseudonym(p).unwrap_or_default().to_string(),
            })
            .collect();
        Self {
            session_id: session.id.clone(),
            rng_seed: session.rng_seed,
            participants,
            condition_order: session.condition_order,
            task_ids: session.tasks.iter().map(|t| t.id.clone()).collect(),
            intervention: intervention.clone(),
            phase: session.phase,
            evaluation: None,
            pipeline_failures: 0,
        }
    }

    pub fn participant(&self, id: &ParticipantId) -> Option<&ManifestParticipant> {
        self.participants.iter().find(|p| &p.id == id)
    }
}

/// On-disk layout of one session directory:
/// `manifest.json`, `<room_id>.jsonl` per room and `responses.jsonl`.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn create(data_dir: &Path, session_id: &SessionId) -> Result<Self> {
        let dir = data_dir.join(session_id.as_str());
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn transcript_path(&self, room: &RoomId) -> PathBuf {
        self.dir.join(format!("{}.jsonl", room.as_str()))
    }

    pub fn transcript_writer(&self, room: &RoomId) -> Result<TranscriptWriter> {
        TranscriptWriter::create(self.transcript_path(room))
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let mut body = serde_json::to_string_pretty(manifest)?;
        body.push('\n');
        let tmp = self.dir.join(".manifest.json.tmp");
        fs::write(&tmp, body)?;
        fs::rename(tmp, self.dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        let body = fs::read_to_string(self.dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&body)?)
    }

    pub fn append_response(&self, response: &QuestionnaireResponse) -> Result<()> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(RESPONSES_FILE))?;
        let mut line = serde_json::to_string(response)?;
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.flush()?;
        Ok(())
    }

    pub fn read_responses(&self) -> Result<Vec<QuestionnaireResponse>> {
        let path = self.dir.join(RESPONSES_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line)?);
        }
        Ok(out)
    }

    /// Room transcripts present in the directory, sorted by file name.
    pub fn transcript_files(&self) -> Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|e| e == "jsonl")
                    && p.file_name().is_some_and(|n| n != RESPONSES_FILE)
            })
            .collect();
        files.sort();
        Ok(files)
    }
}
