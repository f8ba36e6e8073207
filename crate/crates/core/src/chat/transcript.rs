use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::room::{Room, RoomVisibility};
use crate::domain::{Message, RoomId, SessionId};
use crate::error::{ChatError, Result};
use crate::pipeline::AgentMeta;

/// One line of a room transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub session_id: SessionId,
    pub message: Message,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentMeta>,
}

impl TranscriptRecord {
    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Append-only JSON-lines writer. Every append is flushed before returning,
/// so a message is on disk before anyone is told about it.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: File,
}

impl TranscriptWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &TranscriptRecord) -> Result<()> {
        let mut line = record.to_line()?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(&line)
            .map_err(|e| ChatError::CorruptTranscript(format!("{} line {}: {e}", path.display(), n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

/// Rebuilds a room from its transcript. Seqs must run 1, 2, 3, ... without
/// gaps or repeats and every record must belong to `room_id`.
pub fn replay_transcript(room_id: &RoomId, records: &[TranscriptRecord]) -> Result<Room> {
    let session_id = records.first().map_or_else(|| SessionId::new(""), |r| r.session_id.clone());
    let visibility = if room_id.as_str() == super::room::EVALUATION_ROOM {
        RoomVisibility::SeniorsOnly
    } else {
        RoomVisibility::Main
    };
    let mut messages = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let expected = i as u64 + 1;
        let msg = &record.message;
        if msg.room_id != *room_id {
            return Err(ChatError::CorruptTranscript(format!("record {expected} belongs to room {}", msg.room_id)).into());
        }
        if record.session_id != session_id {
            return Err(ChatError::CorruptTranscript(format!("record {expected} belongs to another session")).into());
        }
        if msg.seq != expected {
            let what = if msg.seq < expected { "duplicate" } else { "gap" };
            return Err(ChatError::CorruptTranscript(format!("{what}: expected seq {expected}, found {}", msg.seq)).into());
        }
        msg.validate()?;
        messages.push(msg.clone());
    }
    Ok(Room::from_parts(room_id.clone(), session_id, visibility, messages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Author, MessageKind};
    use crate::error::Error;

    fn record(seq: u64) -> TranscriptRecord {
        TranscriptRecord {
            session_id: "s1".into(),
            message: Message {
                id: format!("task1-{seq:06}"),
                room_id: "task1".into(),
                seq,
                author: Author::Participant("Member A".into()),
                kind: MessageKind::HumanPublic,
                recipient: None,
                text: format!("message {seq}"),
                timestamp: seq * 10,
            },
            agent: None,
        }
    }

    #[test]
    fn empty_transcript_gives_fresh_room() {
        let room = replay_transcript(&"task1".into(), &[]).unwrap();
        assert_eq!(room.next_seq(), 1);
        assert!(room.messages().is_empty());
    }

    #[test]
    fn gap_and_duplicate_detected() {
        let gap = [record(1), record(3)];
        assert!(matches!(
            replay_transcript(&"task1".into(), &gap),
            Err(Error::Chat(ChatError::CorruptTranscript(m))) if m.starts_with("gap")
        ));
        let dup = [record(1), record(1)];
        assert!(matches!(
            replay_transcript(&"task1".into(), &dup),
            Err(Error::Chat(ChatError::CorruptTranscript(m))) if m.starts_with("duplicate")
        ));
    }

    #[test]
    fn write_read_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1/task1.jsonl");
        let mut writer = TranscriptWriter::create(&path).unwrap();
        let records: Vec<_> = (1..=5).map(record).collect();
        for r in &records {
            writer.append(r).unwrap();
        }
        let back = read_transcript(&path).unwrap();
        assert_eq!(back, records);
        let room = replay_transcript(&"task1".into(), &back).unwrap();
        assert_eq!(room.next_seq(), 6);
        assert_eq!(room.messages().len(), 5);
    }
}
