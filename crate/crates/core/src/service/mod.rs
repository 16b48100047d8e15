//! Live human-vs-agent matches over web sockets with fog-of-war filtering.

mod filter;
mod server;
mod session;
pub mod wire;

pub use filter::{filter_state, foreign_entities};
pub use server::{Server, ServerContext, ServerHandle, WsTransport};
pub use session::{
    handle_session, memory, replay_export, CheckpointRegistry, Direction, Incoming, MatchConfig, Phase,
    SessionInfo, SessionReport, SessionStore, Transcript, TranscriptEntry, Transport, EPISODE_FILE,
    TRANSCRIPT_FILE,
};
pub use wire::{StatePayload, WireMessage, WIRE_VERSION};
