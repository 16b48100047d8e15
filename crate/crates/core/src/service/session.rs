use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::filter::filter_state;
use super::wire::{codes, WireMessage, WIRE_VERSION};
use crate::config::ServiceConfig;
use crate::episode::{write_log, EpisodeRecorder};
use crate::error::{BvrError, Result};
use crate::harness::{PolicySpec, BASELINES};
use crate::mdp::{dca_index, BvrEnv, EnvSettings, PolicyAction};
use crate::rainbow::{load_checkpoint, NoiseMode};
use crate::simcore::{EntityId, Outcome};
use crate::tactics::TacticAction;

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const EPISODE_FILE: &str = "episode.jsonl";

/// What a transport hands back for one receive attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Incoming {
    Text(String),
    /// Nothing arrived before the deadline.
    Idle,
    Closed,
}

/// A bidirectional text-frame stream.
pub trait Transport {
    fn send(&mut self, text: &str) -> Result<()>;

    fn recv(&mut self, timeout: Duration) -> Result<Incoming>;

    fn close(&mut self) {}
}

/// Read-only set of opponents a client may ask for: checkpoint files by
/// file stem plus the scripted baselines by name.
#[derive(Clone, Debug, Default)]
pub struct CheckpointRegistry {
    entries: BTreeMap<String, PolicySpec>,
}

impl CheckpointRegistry {
    pub fn new() -> Self {
        let mut r = Self::default();
        for b in BASELINES {
            r.entries.insert(b.to_string(), PolicySpec::baseline(b).expect("known baseline"));
        }
        r
    }

    /// Loads every `*.ckpt` directly inside `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut r = Self::new();
        let rd = std::fs::read_dir(dir).map_err(|e| BvrError::path_io(dir, e))?;
        let mut paths: Vec<PathBuf> = rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        paths.sort();
        for p in paths {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let params = load_checkpoint(&p)?;
            r.insert(PolicySpec::checkpoint(id, params));
        }
        Ok(r)
    }

    pub fn insert(&mut self, spec: PolicySpec) {
        self.entries.insert(spec.name().to_string(), spec);
    }

    pub fn get(&self, id: &str) -> Option<&PolicySpec> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lobby,
    Running,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub dir: Direction,
    /// Milliseconds since the connection opened.
    pub t_ms: u64,
    /// Raw frame text.
    pub frame: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    /// Parsed outbound messages, in send order.
    pub fn sent(&self) -> Vec<WireMessage> {
        self.entries
            .iter()
            .filter(|e| e.dir == Direction::Out)
            .filter_map(|e| WireMessage::parse(&e.frame).ok())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("transcript entries serialize") + "\n")
            .collect()
    }
}

/// Match parameters fixed at join time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub seed: u64,
    pub checkpoint: String,
    pub tick_hz: f64,
    pub compression: u32,
}

/// Bookkeeping visible to other threads while a session runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub phase: Phase,
    pub config: Option<MatchConfig>,
    pub human_side: Option<EntityId>,
    pub outcome: Option<Outcome>,
    pub dir: PathBuf,
}

/// Registry of sessions handled by one server.
#[derive(Debug, Default)]
pub struct SessionStore {
    next: AtomicU64,
    sessions: Mutex<HashMap<String, SessionInfo>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn open(&self, out_dir: &Path) -> SessionInfo {
        let n = self.next.fetch_add(1, Ordering::SeqCst);
        let id = format!("s{n:06}");
        let info = SessionInfo {
            dir: out_dir.join(&id),
            id: id.clone(),
            phase: Phase::Lobby,
            config: None,
            human_side: None,
            outcome: None,
        };
        self.put(info.clone());
        info
    }

    fn put(&self, info: SessionInfo) {
        self.sessions.lock().expect("session store poisoned").insert(info.id.clone(), info);
    }

    pub fn get(&self, id: &str) -> Option<SessionInfo> {
        self.sessions.lock().expect("session store poisoned").get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.sessions.lock().expect("session store poisoned").keys().cloned().collect();
        v.sort();
        v
    }
}

/// Copies the full-truth episode log of a finished session to `dest`.
pub fn replay_export(store: &SessionStore, id: &str, dest: &Path) -> Result<PathBuf> {
    let info = store.get(id).ok_or_else(|| BvrError::Session {
        code: codes::UNKNOWN_SESSION.into(),
        message: format!("no session {id}"),
    })?;
    if info.phase != Phase::Finished {
        return Err(BvrError::Session {
            code: codes::NOT_FINISHED.into(),
            message: format!("session {id} is {:?}", info.phase),
        });
    }
    let src = info.dir.join(EPISODE_FILE);
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| BvrError::path_io(parent, e))?;
    }
    std::fs::copy(&src, dest).map_err(|e| BvrError::path_io(&src, e))?;
    Ok(dest.to_path_buf())
}

/// Result of one session, also persisted under the session directory.
#[derive(Clone, Debug)]
pub struct SessionReport {
    pub id: String,
    pub transcript: Transcript,
    pub outcome: Option<Outcome>,
    pub abandoned: bool,
    pub ticks: u64,
}

struct Conn<'a, T: Transport> {
    transport: &'a mut T,
    transcript: Transcript,
    opened: Instant,
    closed: bool,
}

impl<T: Transport> Conn<'_, T> {
    fn stamp(&self) -> u64 {
        self.opened.elapsed().as_millis() as u64
    }

    fn send(&mut self, msg: &WireMessage) {
        let frame = msg.to_json();
        self.transcript.entries.push(TranscriptEntry {
            dir: Direction::Out,
            t_ms: self.stamp(),
            frame: frame.clone(),
        });
        if !self.closed && self.transport.send(&frame).is_err() {
            self.closed = true;
        }
    }

    fn recv(&mut self, timeout: Duration) -> Incoming {
        if self.closed {
            return Incoming::Closed;
        }
        match self.transport.recv(timeout) {
            Ok(Incoming::Text(frame)) => {
                self.transcript.entries.push(TranscriptEntry {
                    dir: Direction::In,
                    t_ms: self.stamp(),
                    frame: frame.clone(),
                });
                Incoming::Text(frame)
            }
            Ok(Incoming::Closed) | Err(_) => {
                self.closed = true;
                Incoming::Closed
            }
            Ok(Incoming::Idle) => Incoming::Idle,
        }
    }
}

/// Parses a client frame; a rejected frame becomes the error to send back.
fn parse_client(frame: &str, session: &str, tick: u64) -> std::result::Result<WireMessage, WireMessage> {
    let msg = WireMessage::parse(frame)
        .map_err(|e| WireMessage::error(session, tick, codes::MALFORMED, e.to_string()))?;
    if msg.version() != WIRE_VERSION {
        return Err(WireMessage::error(
            session,
            tick,
            codes::BAD_VERSION,
            format!("unsupported schema version {}", msg.version()),
        ));
    }
    Ok(msg)
}

struct Joined {
    config: MatchConfig,
    side: EntityId,
    opponent: PolicySpec,
}

/// Runs one human-vs-agent match over `transport` until the episode ends,
/// the client leaves or it stays silent past the timeout.
pub fn handle_session<T: Transport>(
    transport: &mut T,
    registry: &CheckpointRegistry,
    store: &SessionStore,
    cfg: &ServiceConfig,
    settings: &EnvSettings,
) -> Result<SessionReport> {
    let mut info = store.open(Path::new(&cfg.out_dir));
    let id = info.id.clone();
    let mut conn = Conn {
        transport,
        transcript: Transcript::default(),
        opened: Instant::now(),
        closed: false,
    };
    let timeout = Duration::from_secs_f64(cfg.client_timeout_s);
    let interval = cfg.tick_interval();

    let joined = wait_for_join(&mut conn, registry, &id, cfg)?;
    let Some(joined) = joined else {
        info.phase = Phase::Finished;
        store.put(info);
        conn.transport.close();
        return Ok(SessionReport {
            id,
            transcript: conn.transcript,
            outcome: None,
            abandoned: true,
            ticks: 0,
        });
    };
    info.phase = Phase::Running;
    info.config = Some(joined.config.clone());
    info.human_side = Some(joined.side);
    store.put(info.clone());

    let seed = joined.config.seed;
    let human = joined.side;
    let mut env = BvrEnv::new(settings.clone(), seed, human);
    let agent_side = env.opponent();
    let mut agent = joined.opponent.build(NoiseMode::Zero, seed);
    agent.reset();
    let mut names = vec![String::new(); 2];
    names[human.0 as usize] = "human".into();
    names[agent_side.0 as usize] = agent.name();
    let mut rec = EpisodeRecorder::start(&env, seed, names);

    conn.send(&WireMessage::Joined {
        v: WIRE_VERSION,
        session: id.clone(),
        tick: 0,
        side: human.0,
        checkpoint: joined.config.checkpoint.clone(),
        seed,
        tick_hz: joined.config.tick_hz,
        compression: joined.config.compression,
    });
    send_state(&mut conn, &env, &id, 0);

    let mut tick = 0u64;
    let mut latched = TacticAction::Cap;
    let mut pending: Vec<u8> = Vec::new();
    let mut ret = 0.0;
    let mut last_heard = Instant::now();
    let mut abandoned = false;

    while !env.is_done() {
        let deadline = Instant::now() + interval;
        loop {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            match conn.recv(deadline - now) {
                Incoming::Idle => {}
                Incoming::Closed => break,
                Incoming::Text(frame) => {
                    last_heard = Instant::now();
                    match parse_client(&frame, &id, tick) {
                        Err(e) => conn.send(&e),
                        Ok(WireMessage::Action { session, action, .. }) => {
                            if session != id {
                                conn.send(&WireMessage::error(&id, tick, codes::WRONG_SESSION, session));
                            } else if let Some(a) = TacticAction::from_index(action as usize) {
                                latched = a;
                                pending.push(action);
                                conn.send(&WireMessage::Ack {
                                    v: WIRE_VERSION,
                                    session: id.clone(),
                                    tick,
                                    action,
                                    status: "latched".into(),
                                    provenance: None,
                                });
                            } else {
                                conn.send(&WireMessage::error(
                                    &id,
                                    tick,
                                    codes::BAD_ACTION,
                                    format!("action {action} outside 0..=5"),
                                ));
                            }
                        }
                        Ok(WireMessage::Ping { .. }) => conn.send(&WireMessage::Pong {
                            v: WIRE_VERSION,
                            session: id.clone(),
                            tick,
                        }),
                        Ok(WireMessage::Join { .. }) => {
                            conn.send(&WireMessage::error(&id, tick, codes::ALREADY_JOINED, "session already running"))
                        }
                        Ok(other) => conn.send(&WireMessage::error(
                            &id,
                            tick,
                            codes::MALFORMED,
                            format!("unexpected client message {}", other.kind()),
                        )),
                    }
                }
            }
        }
        if conn.closed || last_heard.elapsed() > timeout {
            abandoned = true;
            break;
        }

        let agent_action = agent.act(env.world(), agent_side, env.settings());
        let step = env.step_joint(PolicyAction::Tactic(latched), agent_action)?;
        tick += 1;
        ret += step.reward;
        rec.record(&env, &step);
        send_state(&mut conn, &env, &id, tick);
        let provenance = step
            .resolved
            .iter()
            .find(|r| r.side == human)
            .and_then(|r| r.provenance.as_ref())
            .map(|p| p.to_string());
        for action in pending.drain(..) {
            conn.send(&WireMessage::Ack {
                v: WIRE_VERSION,
                session: id.clone(),
                tick,
                action,
                status: "applied".into(),
                provenance: provenance.clone(),
            });
        }
    }

    let outcome = if abandoned { Outcome::Draw } else { env.outcome() };
    let dca_final = dca_index(env.world(), human, &settings.reward, &settings.sim);
    if abandoned {
        conn.send(&WireMessage::error(&id, tick, codes::TIMEOUT, "client silent or gone; match abandoned as a draw"));
    }
    conn.send(&WireMessage::Result {
        v: WIRE_VERSION,
        session: id.clone(),
        tick,
        outcome: outcome.as_str().into(),
        ret,
        dca_final,
        compression: joined.config.compression,
        abandoned,
    });
    conn.transport.close();

    std::fs::create_dir_all(&info.dir).map_err(|e| BvrError::path_io(&info.dir, e))?;
    write_log(&info.dir.join(EPISODE_FILE), rec.records())?;
    let tpath = info.dir.join(TRANSCRIPT_FILE);
    std::fs::write(&tpath, conn.transcript.to_jsonl()).map_err(|e| BvrError::path_io(&tpath, e))?;
    log::info!("session {id} finished: {} after {tick} ticks", outcome.as_str());

    info.phase = Phase::Finished;
    info.outcome = Some(outcome);
    store.put(info);
    Ok(SessionReport {
        id,
        transcript: conn.transcript,
        outcome: Some(outcome),
        abandoned,
        ticks: tick,
    })
}

fn send_state<T: Transport>(conn: &mut Conn<'_, T>, env: &BvrEnv, id: &str, tick: u64) {
    if let Some(payload) = filter_state(env.world(), env.agent()) {
        conn.send(&WireMessage::State {
            v: WIRE_VERSION,
            session: id.to_string(),
            tick,
            payload: Box::new(payload),
        });
    }
}

fn wait_for_join<T: Transport>(
    conn: &mut Conn<'_, T>,
    registry: &CheckpointRegistry,
    id: &str,
    cfg: &ServiceConfig,
) -> Result<Option<Joined>> {
    let deadline = Instant::now() + Duration::from_secs_f64(cfg.client_timeout_s);
    while Instant::now() < deadline {
        let frame = match conn.recv(deadline - Instant::now()) {
            Incoming::Text(f) => f,
            Incoming::Idle => continue,
            Incoming::Closed => return Ok(None),
        };
        let msg = match parse_client(&frame, id, 0) {
            Ok(m) => m,
            Err(e) => {
                conn.send(&e);
                continue;
            }
        };
        match msg {
            WireMessage::Join {
                checkpoint, seed, side, ..
            } => {
                let Some(spec) = registry.get(&checkpoint) else {
                    conn.send(&WireMessage::error(
                        id,
                        0,
                        codes::CKPT_NOT_FOUND,
                        format!("no checkpoint {checkpoint:?}"),
                    ));
                    return Ok(None);
                };
                if side > 1 {
                    conn.send(&WireMessage::error(id, 0, codes::BAD_SIDE, format!("side {side} is not 0 or 1")));
                    continue;
                }
                return Ok(Some(Joined {
                    config: MatchConfig {
                        seed,
                        checkpoint,
                        tick_hz: cfg.tick_hz,
                        compression: cfg.compression,
                    },
                    side: EntityId(side),
                    opponent: spec.clone(),
                }));
            }
            WireMessage::Ping { .. } => conn.send(&WireMessage::Pong {
                v: WIRE_VERSION,
                session: id.to_string(),
                tick: 0,
            }),
            other => conn.send(&WireMessage::error(
                id,
                0,
                codes::NOT_JOINED,
                format!("{} before join", other.kind()),
            )),
        }
    }
    conn.send(&WireMessage::error(id, 0, codes::TIMEOUT, "no join before timeout"));
    Ok(None)
}

/// In-process transport over channels, for scripted clients.
pub mod memory {
    use super::*;
    use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

    pub struct MemoryTransport {
        tx: Sender<String>,
        rx: Receiver<String>,
    }

    /// Client end of a [`MemoryTransport`].
    pub struct MemoryClient {
        pub tx: Option<Sender<String>>,
        pub rx: Receiver<String>,
    }

    pub fn pair() -> (MemoryTransport, MemoryClient) {
        let (to_server, from_client) = unbounded();
        let (to_client, from_server) = unbounded();
        (
            MemoryTransport {
                tx: to_client,
                rx: from_client,
            },
            MemoryClient {
                tx: Some(to_server),
                rx: from_server,
            },
        )
    }

    impl Transport for MemoryTransport {
        fn send(&mut self, text: &str) -> Result<()> {
            self.tx.send(text.to_string()).map_err(|_| BvrError::Session {
                code: "CLOSED".into(),
                message: "client hung up".into(),
            })
        }

        fn recv(&mut self, timeout: Duration) -> Result<Incoming> {
            match self.rx.recv_timeout(timeout) {
                Ok(t) => Ok(Incoming::Text(t)),
                Err(RecvTimeoutError::Timeout) => Ok(Incoming::Idle),
                Err(RecvTimeoutError::Disconnected) => Ok(Incoming::Closed),
            }
        }
    }

    impl MemoryClient {
        pub fn send(&self, msg: &WireMessage) {
            self.send_raw(&msg.to_json());
        }

        pub fn send_raw(&self, text: &str) {
            if let Some(tx) = &self.tx {
                let _ = tx.send(text.to_string());
            }
        }

        /// Drops the sending half, which the server sees as a disconnect.
        pub fn hang_up(&mut self) {
            self.tx = None;
        }
    }
}
