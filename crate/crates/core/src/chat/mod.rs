//! Rooms, total ordering of messages and append-only transcripts.

mod room;
mod transcript;

pub use room::{open_evaluation_room, Room, RoomVisibility, EVALUATION_ROOM};
pub use transcript::{read_transcript, replay_transcript, TranscriptRecord, TranscriptWriter};
