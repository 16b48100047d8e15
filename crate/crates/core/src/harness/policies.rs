use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mdp::{build_observation, EnvSettings, Policy, PolicyAction};
use crate::rainbow::{select_action, NetworkParams, NoiseMode};
use crate::simcore::{EntityId, WorldState};
use crate::tactics::{fire_decision, nearest_track, TacticAction};

pub const STRAIGHT_FLIER: &str = "straight-flier";
pub const PURE_CAP: &str = "pure-cap";
pub const AGGRESSIVE_COMMIT: &str = "aggressive-commit";
pub const BASELINES: [&str; 3] = [STRAIGHT_FLIER, PURE_CAP, AGGRESSIVE_COMMIT];

/// Holds its spawn heading, altitude and speed; never fires.
#[derive(Clone, Debug, Default)]
pub struct StraightFlier;

impl Policy for StraightFlier {
    fn name(&self) -> String {
        STRAIGHT_FLIER.into()
    }

    fn act(&mut self, _: &WorldState, _: EntityId, _: &EnvSettings) -> PolicyAction {
        PolicyAction::Hold
    }
}

/// Orbits its station forever.
#[derive(Clone, Debug, Default)]
pub struct PureCap;

impl Policy for PureCap {
    fn name(&self) -> String {
        PURE_CAP.into()
    }

    fn act(&mut self, _: &WorldState, _: EntityId, _: &EnvSettings) -> PolicyAction {
        PolicyAction::Tactic(TacticAction::Cap)
    }
}

/// Commits on the nearest track, fires as soon as the launch gate opens and
/// guides its missile until the seeker goes active. Ignores warnings.
#[derive(Clone, Debug, Default)]
pub struct AggressiveCommit;

impl Policy for AggressiveCommit {
    fn name(&self) -> String {
        AGGRESSIVE_COMMIT.into()
    }

    fn act(&mut self, world: &WorldState, side: EntityId, settings: &EnvSettings) -> PolicyAction {
        let Some(actor) = world.aircraft(side).filter(|a| a.alive) else {
            return PolicyAction::Hold;
        };
        let guiding = world
            .missiles
            .iter()
            .any(|m| m.alive && m.shooter_id == side && !m.seeker_active);
        let track = nearest_track(world, actor, &settings.sim);
        let action = if guiding && track.is_some() {
            TacticAction::Support
        } else if fire_decision(actor, track, &settings.tactics, &settings.sim).is_ok() {
            TacticAction::Fire
        } else {
            TacticAction::Commit
        };
        PolicyAction::Tactic(action)
    }
}

pub fn baseline(name: &str) -> Option<Box<dyn Policy>> {
    match name {
        STRAIGHT_FLIER => Some(Box::new(StraightFlier)),
        PURE_CAP => Some(Box::new(PureCap)),
        AGGRESSIVE_COMMIT => Some(Box::new(AggressiveCommit)),
        _ => None,
    }
}

/// Greedy policy over a learned network.
#[derive(Clone, Debug)]
pub struct CheckpointPolicy {
    name: String,
    params: Arc<NetworkParams<f32>>,
    mode: NoiseMode,
    rng: ChaCha8Rng,
}

impl CheckpointPolicy {
    pub fn new(name: impl Into<String>, params: Arc<NetworkParams<f32>>, mode: NoiseMode, seed: u64) -> Self {
        Self {
            name: name.into(),
            params,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn params(&self) -> &Arc<NetworkParams<f32>> {
        &self.params
    }

    pub fn choose(&mut self, world: &WorldState, side: EntityId, settings: &EnvSettings) -> TacticAction {
        let obs = build_observation(world, side, &settings.sim);
        select_action(&self.params, &obs, self.mode, &mut self.rng).unwrap_or(TacticAction::Cap)
    }
}

impl Policy for CheckpointPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn act(&mut self, world: &WorldState, side: EntityId, settings: &EnvSettings) -> PolicyAction {
        PolicyAction::Tactic(self.choose(world, side, settings))
    }
}

/// A recipe for building fresh policy instances, e.g. one per match or
/// worker thread.
#[derive(Clone, Debug)]
pub enum PolicySpec {
    Baseline(String),
    Checkpoint {
        name: String,
        params: Arc<NetworkParams<f32>>,
    },
}

impl PolicySpec {
    pub fn baseline(name: &str) -> Option<Self> {
        BASELINES.contains(&name).then(|| PolicySpec::Baseline(name.to_string()))
    }

    pub fn checkpoint(name: impl Into<String>, params: NetworkParams<f32>) -> Self {
        PolicySpec::Checkpoint {
            name: name.into(),
            params: Arc::new(params),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            PolicySpec::Baseline(n) => n,
            PolicySpec::Checkpoint { name, .. } => name,
        }
    }

    pub fn build(&self, mode: NoiseMode, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicySpec::Baseline(n) => baseline(n).expect("validated baseline name"),
            PolicySpec::Checkpoint { name, params } => {
                Box::new(CheckpointPolicy::new(name.clone(), Arc::clone(params), mode, seed))
            }
        }
    }
}
