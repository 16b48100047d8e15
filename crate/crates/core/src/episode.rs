//! Newline-delimited JSON episode logs: one record per decision tick with the
//! full world truth, both sides' actions and the agent reward. The first
//! record also carries the seed and settings so a log can be re-simulated.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BvrError, Result};
use crate::mdp::{dca_index, BvrEnv, EnvSettings, PolicyAction, ResolvedAction, StepResult};
use crate::simcore::{AircraftState, EntityId, MissileState, Outcome, SensorPicture};
use crate::tactics::Provenance;

pub const LOG_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub format: u32,
    pub seed: u64,
    /// Side whose reward and outcome the log reports.
    pub agent: EntityId,
    /// Policy names indexed by side id.
    pub policies: Vec<String>,
    pub settings: EnvSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub side: EntityId,
    pub action: PolicyAction,
    pub provenance: Option<Provenance>,
}

impl From<&ResolvedAction> for ActionRecord {
    fn from(r: &ResolvedAction) -> Self {
        Self {
            side: r.side,
            action: r.action,
            provenance: r.provenance.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<EpisodeMeta>,
    /// Decision tick index; 0 is the state right after reset.
    pub tick: u64,
    pub sim_time: f64,
    pub aircraft: Vec<AircraftState>,
    pub missiles: Vec<MissileState>,
    pub sensors: Vec<SensorPicture>,
    /// Actions that produced this state (empty at tick 0).
    pub actions: Vec<ActionRecord>,
    pub reward: f64,
    pub opponent_reward: f64,
    pub dca: f64,
    pub outcome: Outcome,
}

impl EpisodeRecord {
    /// Snapshot of `env` after `tick` decisions.
    pub fn capture(env: &BvrEnv, tick: u64, step: Option<&StepResult>) -> Self {
        let world = env.world();
        let settings = env.settings();
        Self {
            meta: None,
            tick,
            sim_time: world.sim_time,
            aircraft: world.aircraft.clone(),
            missiles: world.missiles.clone(),
            sensors: world.sensors.clone(),
            actions: step
                .map(|s| s.resolved.iter().map(ActionRecord::from).collect())
                .unwrap_or_default(),
            reward: step.map_or(0.0, |s| s.reward),
            opponent_reward: step.map_or(0.0, |s| s.opponent_reward),
            dca: dca_index(world, env.agent(), &settings.reward, &settings.sim),
            outcome: env.outcome(),
        }
    }

    pub fn action_of(&self, side: EntityId) -> Option<PolicyAction> {
        self.actions.iter().find(|a| a.side == side).map(|a| a.action)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("episode record serializes")
    }
}

/// Builds a log incrementally while an episode is played.
#[derive(Clone, Debug)]
pub struct EpisodeRecorder {
    records: Vec<EpisodeRecord>,
}

impl EpisodeRecorder {
    /// Starts a log from a freshly reset environment.
    pub fn start(env: &BvrEnv, seed: u64, policies: Vec<String>) -> Self {
        let mut first = EpisodeRecord::capture(env, 0, None);
        first.meta = Some(EpisodeMeta {
            format: LOG_FORMAT,
            seed,
            agent: env.agent(),
            policies,
            settings: env.settings().clone(),
        });
        Self { records: vec![first] }
    }

    pub fn record(&mut self, env: &BvrEnv, step: &StepResult) {
        let tick = self.records.len() as u64;
        self.records.push(EpisodeRecord::capture(env, tick, Some(step)));
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EpisodeRecord> {
        self.records
    }
}

pub fn encode_log(records: &[EpisodeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Hex SHA-256 of the encoded log.
pub fn log_hash(records: &[EpisodeRecord]) -> String {
    let digest = Sha256::digest(encode_log(records).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Writes a log; a `.gz` extension selects gzip compression.
pub fn write_log(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| BvrError::path_io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| BvrError::path_io(path, e))?;
    let text = encode_log(records);
    let io = |e| BvrError::path_io(path, e);
    if is_gz(path) {
        let mut gz = GzEncoder::new(BufWriter::new(file), Compression::default());
        gz.write_all(text.as_bytes()).map_err(io)?;
        gz.finish().map_err(io)?.flush().map_err(io)?;
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(text.as_bytes()).map_err(io)?;
        w.flush().map_err(io)?;
    }
    Ok(())
}

/// Raw lines of a log, decompressing `.gz` files.
pub fn read_log_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| BvrError::path_io(path, e))?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    BufReader::new(reader)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| BvrError::path_io(path, e))
}

pub fn parse_log(lines: &[String]) -> Result<Vec<EpisodeRecord>> {
    lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BvrError::Log {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<EpisodeRecord>> {
    parse_log(&read_log_lines(path)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub ticks: usize,
}

/// Re-simulates a log from its seed and recorded actions and requires every
/// line to match byte for byte.
pub fn verify_lines(lines: &[String]) -> Result<VerifyReport> {
    let lines: Vec<&String> = lines.iter().filter(|l| !l.trim().is_empty()).collect();
    let first = lines.first().ok_or(BvrError::Log {
        line: 1,
        message: "empty log".into(),
    })?;
    let head: EpisodeRecord = serde_json::from_str(first).map_err(|e| BvrError::Log {
        line: 1,
        message: e.to_string(),
    })?;
    let meta = head.meta.clone().ok_or(BvrError::Log {
        line: 1,
        message: "first record has no meta block".into(),
    })?;
    if meta.format != LOG_FORMAT {
        return Err(BvrError::Log {
            line: 1,
            message: format!("unsupported log format {}", meta.format),
        });
    }
    meta.settings.sim.validate()?;

    let mut env = BvrEnv::new(meta.settings.clone(), meta.seed, meta.agent);
    let mut rec = EpisodeRecorder::start(&env, meta.seed, meta.policies.clone());
    compare(0, first, &rec.records[0].to_line())?;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let logged: EpisodeRecord = serde_json::from_str(line).map_err(|e| BvrError::Log {
            line: i + 1,
            message: e.to_string(),
        })?;
        if env.is_done() {
            return Err(BvrError::ReplayMismatch {
                tick: i as u64,
                detail: "log continues after the episode ended".into(),
            });
        }
        let agent = logged.action_of(env.agent()).unwrap_or(PolicyAction::Hold);
        let opponent = logged.action_of(env.opponent()).unwrap_or(PolicyAction::Hold);
        let step = env.step_joint(agent, opponent)?;
        rec.record(&env, &step);
        compare(i as u64, line, &rec.records[i].to_line())?;
    }
    Ok(VerifyReport { ticks: lines.len() })
}

pub fn verify_log(path: &Path) -> Result<VerifyReport> {
    verify_lines(&read_log_lines(path)?)
}

fn compare(tick: u64, logged: &str, replayed: &str) -> Result<()> {
    if logged == replayed {
        return Ok(());
    }
    let at = logged
        .bytes()
        .zip(replayed.bytes())
        .position(|(a, b)| a != b)
        .unwrap_or(logged.len().min(replayed.len()));
    let lo = at.saturating_sub(40);
    let snippet = |s: &str| s.get(lo..(at + 40).min(s.len())).unwrap_or("").to_string();
    Err(BvrError::ReplayMismatch {
        tick,
        detail: format!(
            "first difference at byte {at}: logged …{}… replayed …{}…",
            snippet(logged),
            snippet(replayed)
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{BLUE, RED};
    use crate::tactics::TacticAction;

    fn play(seed: u64, ticks: usize) -> Vec<EpisodeRecord> {
        let mut env = BvrEnv::new(EnvSettings::default(), seed, BLUE);
        let mut rec = EpisodeRecorder::start(&env, seed, vec!["commit".into(), "hold".into()]);
        for _ in 0..ticks {
            if env.is_done() {
                break;
            }
            let step = env
                .step_joint(PolicyAction::Tactic(TacticAction::Commit), PolicyAction::Hold)
                .unwrap();
            rec.record(&env, &step);
        }
        rec.into_records()
    }

    fn lines(records: &[EpisodeRecord]) -> Vec<String> {
        encode_log(records).lines().map(str::to_string).collect()
    }

    #[test]
    fn first_record_has_meta_and_ticks_count_up() {
        let log = play(3, 20);
        assert_eq!(log.len(), 21);
        assert_eq!(log[0].meta.as_ref().unwrap().seed, 3);
        assert!(log[1..].iter().all(|r| r.meta.is_none()));
        assert!(log.iter().enumerate().all(|(i, r)| r.tick == i as u64));
        assert_eq!(log[1].action_of(RED), Some(PolicyAction::Hold));
    }

    #[test]
    fn verify_accepts_own_log_and_rejects_tampering() {
        let log = play(11, 40);
        let text = lines(&log);
        assert_eq!(verify_lines(&text).unwrap().ticks, 41);

        let mut bad = text.clone();
        bad[7] = bad[7].replacen("\"reward\":", "\"reward\":1e-9+", 1);
        assert!(verify_lines(&bad).is_err());

        let mut edited = log.clone();
        edited[5].actions[0].action = PolicyAction::Tactic(TacticAction::Abort);
        assert!(matches!(
            verify_lines(&lines(&edited)),
            Err(BvrError::ReplayMismatch { .. })
        ));
    }

    #[test]
    fn gz_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let log = play(5, 10);
        for name in ["e.jsonl", "e.jsonl.gz"] {
            let path = dir.path().join(name);
            write_log(&path, &log).unwrap();
            assert_eq!(read_log(&path).unwrap(), log);
            assert_eq!(verify_log(&path).unwrap().ticks, 11);
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut text = lines(&play(1, 3));
        text[2] = "{not json".into();
        match parse_log(&text) {
            Err(BvrError::Log { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(log_hash(&play(9, 30)), log_hash(&play(9, 30)));
        assert_ne!(log_hash(&play(9, 30)), log_hash(&play(10, 30)));
    }
}
