//! Agent-side MDP: observation vector, DCA-index reward and the episodic
//! step/reset environment built on `simcore` and `tactics`.

mod env;
mod observation;
mod reward;

use serde::{Deserialize, Serialize};

pub use env::{
    advance, env_reset, resolve_action, BvrEnv, EnvSettings, Policy, PolicyAction, ResolvedAction,
    StepResult, BLUE, RED,
};
pub use observation::{build_observation, Observation, OBS_DIM};
pub use reward::{compute_reward, dca_index, terminal_reward};

use crate::tactics::TacticAction;

/// One (s, a, r, s', done) record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Observation,
    pub a: TacticAction,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
}
