use serde::{Deserialize, Serialize};

use crate::simcore::{EntityId, MissileWarning, Vec3};

pub const WIRE_VERSION: u32 = 1;

pub mod codes {
    pub const CKPT_NOT_FOUND: &str = "CKPT_NOT_FOUND";
    pub const MALFORMED: &str = "MALFORMED";
    pub const BAD_VERSION: &str = "BAD_VERSION";
    pub const BAD_SIDE: &str = "BAD_SIDE";
    pub const BAD_ACTION: &str = "BAD_ACTION";
    pub const WRONG_SESSION: &str = "WRONG_SESSION";
    pub const NOT_JOINED: &str = "NOT_JOINED";
    pub const ALREADY_JOINED: &str = "ALREADY_JOINED";
    pub const NOT_FINISHED: &str = "NOT_FINISHED";
    pub const UNKNOWN_SESSION: &str = "UNKNOWN_SESSION";
    pub const TIMEOUT: &str = "TIMEOUT";
}

/// Ownship truth: the raw values the 16-dim observation is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ownship {
    pub id: EntityId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub speed: f64,
    pub heading: f64,
    pub pitch: f64,
    pub roll: f64,
    pub health: f64,
    pub radar_on: bool,
    pub alive: bool,
    pub station: Option<Vec3>,
}

/// A radar track as the sensor reports it, not the target's truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackView {
    pub target: EntityId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub age: f64,
    pub range: f64,
    pub bearing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OwnMissile {
    pub id: EntityId,
    pub target: EntityId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub seeker_active: bool,
    pub supported: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stores {
    pub fuel: f64,
    pub missiles: u32,
}

/// Everything the human side is allowed to see on one tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub sim_time: f64,
    pub ownship: Ownship,
    pub tracks: Vec<TrackView>,
    pub warnings: Vec<MissileWarning>,
    pub missiles: Vec<OwnMissile>,
    pub stores: Stores,
}

/// JSON text frame; `type` selects the variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Join {
        v: u32,
        #[serde(default)]
        session: Option<String>,
        #[serde(default)]
        tick: u64,
        checkpoint: String,
        seed: u64,
        side: u32,
    },
    Joined {
        v: u32,
        session: String,
        tick: u64,
        side: u32,
        checkpoint: String,
        seed: u64,
        tick_hz: f64,
        compression: u32,
    },
    State {
        v: u32,
        session: String,
        tick: u64,
        #[serde(flatten)]
        payload: Box<StatePayload>,
    },
    Action {
        v: u32,
        session: String,
        tick: u64,
        action: u8,
    },
    /// `status` is `latched` on receipt, `applied` once the action has been
    /// flown, with the resolved provenance.
    Ack {
        v: u32,
        session: String,
        tick: u64,
        action: u8,
        status: String,
        #[serde(default)]
        provenance: Option<String>,
    },
    Result {
        v: u32,
        session: String,
        tick: u64,
        outcome: String,
        #[serde(rename = "return")]
        ret: f64,
        dca_final: f64,
        compression: u32,
        abandoned: bool,
    },
    Error {
        v: u32,
        session: String,
        tick: u64,
        code: String,
        message: String,
    },
    Ping {
        v: u32,
        session: String,
        tick: u64,
    },
    Pong {
        v: u32,
        session: String,
        tick: u64,
    },
}

impl WireMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Join { .. } => "join",
            WireMessage::Joined { .. } => "joined",
            WireMessage::State { .. } => "state",
            WireMessage::Action { .. } => "action",
            WireMessage::Ack { .. } => "ack",
            WireMessage::Result { .. } => "result",
            WireMessage::Error { .. } => "error",
            WireMessage::Ping { .. } => "ping",
            WireMessage::Pong { .. } => "pong",
        }
    }

    pub fn version(&self) -> u32 {
        match self {
            WireMessage::Join { v, .. }
            | WireMessage::Joined { v, .. }
            | WireMessage::State { v, .. }
            | WireMessage::Action { v, .. }
            | WireMessage::Ack { v, .. }
            | WireMessage::Result { v, .. }
            | WireMessage::Error { v, .. }
            | WireMessage::Ping { v, .. }
            | WireMessage::Pong { v, .. } => *v,
        }
    }

    pub fn tick(&self) -> u64 {
        match self {
            WireMessage::Join { tick, .. }
            | WireMessage::Joined { tick, .. }
            | WireMessage::State { tick, .. }
            | WireMessage::Action { tick, .. }
            | WireMessage::Ack { tick, .. }
            | WireMessage::Result { tick, .. }
            | WireMessage::Error { tick, .. }
            | WireMessage::Ping { tick, .. }
            | WireMessage::Pong { tick, .. } => *tick,
        }
    }

    pub fn session(&self) -> Option<&str> {
        match self {
            WireMessage::Join { session, .. } => session.as_deref(),
            WireMessage::Joined { session, .. }
            | WireMessage::State { session, .. }
            | WireMessage::Action { session, .. }
            | WireMessage::Ack { session, .. }
            | WireMessage::Result { session, .. }
            | WireMessage::Error { session, .. }
            | WireMessage::Ping { session, .. }
            | WireMessage::Pong { session, .. } => Some(session),
        }
    }

    pub fn error(session: &str, tick: u64, code: &str, message: impl Into<String>) -> Self {
        WireMessage::Error {
            v: WIRE_VERSION,
            session: session.to_string(),
            tick,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn parse(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
