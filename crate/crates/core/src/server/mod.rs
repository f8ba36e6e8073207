//! Chat server: one actor per session, in-process and WebSocket connections.

mod actor;
mod clock;
mod hub;
pub mod protocol;
mod ws;

pub use actor::{task_room_id, RoomSnapshot, SessionCommand, SessionSnapshot, TEAM_BUILDING_ROOM};
pub use clock::Clock;
pub use hub::{AdminRequest, Connection, CreateSession, Hub, HubSettings, Outbound, SessionCreated};
pub use ws::{router, serve, serve_on};
