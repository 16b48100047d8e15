//! Self-play training, scripted baselines, opponent pool with Elo ratings and
//! seeded evaluation tournaments.

mod evaluate;
mod manifest;
mod policies;
mod pool;
mod train;

pub use evaluate::{evaluate, match_setup, run_episode, EpisodeRun, EvalRow, EvalTable};
pub use manifest::{content_hash, RunManifest, MANIFEST_FILE};
pub use policies::{
    baseline, AggressiveCommit, CheckpointPolicy, PolicySpec, PureCap, StraightFlier, AGGRESSIVE_COMMIT,
    BASELINES, PURE_CAP, STRAIGHT_FLIER,
};
pub use pool::{
    elo_expectation, elo_update, sample_opponent, update_rating, MemberKind, OpponentChoice, OpponentMix,
    OpponentPool, PoolMember, LEARNER_ID,
};
pub use train::{train, TrainState, TrainSummary, FINAL_CHECKPOINT, METRICS_FILE, STATE_FILE};
