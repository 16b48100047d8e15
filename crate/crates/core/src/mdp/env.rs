use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::observation::{build_observation, Observation};
use super::reward::compute_reward;
use crate::config::{RewardConfig, RunConfig, SimConfig, TacticParams};
use crate::error::{BvrError, Result};
use crate::simcore::{
    check_termination, world_step, AircraftState, CapStation, ControlCommand, EntityId, Outcome,
    Vec3, WorldState,
};
use crate::tactics::{execute_tactic, Provenance, TacticAction};

/// Blue side: spawns on its own CAP station, receives the MDP reward.
pub const BLUE: EntityId = EntityId(0);
/// Red side: spawns at a randomized range and bearing.
pub const RED: EntityId = EntityId(1);

/// Everything the environment needs besides the seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvSettings {
    pub sim: SimConfig,
    pub tactics: TacticParams,
    pub reward: RewardConfig,
}

impl From<&RunConfig> for EnvSettings {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            sim: cfg.sim.clone(),
            tactics: cfg.tactics.clone(),
            reward: cfg.reward.clone(),
        }
    }
}

/// What a policy asks its aircraft to do for one decision tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAction {
    Tactic(TacticAction),
    /// Keep current heading, altitude and speed; never fires.
    Hold,
}

impl From<TacticAction> for PolicyAction {
    fn from(a: TacticAction) -> Self {
        PolicyAction::Tactic(a)
    }
}

/// Anything that can fly one side: scripted baselines, checkpoints, humans.
pub trait Policy: Send {
    fn name(&self) -> String;

    fn act(&mut self, world: &WorldState, side: EntityId, settings: &EnvSettings) -> PolicyAction;

    /// Called at the start of every episode.
    fn reset(&mut self) {}
}

/// The command one side flew for a decision tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAction {
    pub side: EntityId,
    pub action: PolicyAction,
    pub provenance: Option<Provenance>,
    pub command: ControlCommand,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// Reward of the other side, same formula from its own viewpoint.
    pub opponent_reward: f64,
    pub done: bool,
    pub outcome: Outcome,
    pub resolved: Vec<ResolvedAction>,
}

/// Spawns a fresh engagement. Deterministic in `seed`.
pub fn env_reset(seed: u64, settings: &EnvSettings) -> (WorldState, Observation) {
    let sim = &settings.sim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let blue_station = Vec3::new(-sim.station_offset, 0.0, sim.station_altitude);
    let red_station = Vec3::new(sim.station_offset, 0.0, sim.station_altitude);
    let center = Vec3::new(0.0, 0.0, 0.0);

    let jitter = sim.agent_spawn_jitter;
    let blue_pos = Vec3::new(
        blue_station.x + rng.random_range(-jitter..=jitter),
        blue_station.y + rng.random_range(-jitter..=jitter),
        rng.random_range(sim.spawn_alt_min..=sim.spawn_alt_max),
    );

    let range = rng.random_range(sim.spawn_range_min..=sim.spawn_range_max);
    let max_bearing = sim.spawn_bearing_max_deg.to_radians();
    let bearing = rng.random_range(-max_bearing..=max_bearing);
    let red_alt = rng.random_range(sim.spawn_alt_min..=sim.spawn_alt_max);
    let dz = red_alt - blue_pos.z;
    let horizontal = (range * range - dz * dz).max(0.0).sqrt();
    let red_pos = Vec3::new(
        blue_pos.x + horizontal * bearing.cos(),
        blue_pos.y + horizontal * bearing.sin(),
        red_alt,
    );

    let spawn = |id: EntityId, position: Vec3| AircraftState {
        id,
        position,
        speed: sim.spawn_speed,
        heading: position.bearing_to(Vec3::new(center.x, center.y, position.z)),
        pitch: 0.0,
        roll: 0.0,
        fuel: sim.fuel_initial,
        missiles: sim.initial_missiles,
        health: 1.0,
        radar_on: true,
        alive: true,
    };
    let world = WorldState::from_aircraft(
        seed,
        vec![spawn(BLUE, blue_pos), spawn(RED, red_pos)],
        vec![
            CapStation {
                owner: BLUE,
                position: blue_station,
            },
            CapStation {
                owner: RED,
                position: red_station,
            },
        ],
        sim,
    );
    let obs = build_observation(&world, BLUE, sim);
    (world, obs)
}

/// Resolves one side's decision into the command it will hold this tick.
pub fn resolve_action(
    world: &WorldState,
    side: EntityId,
    action: PolicyAction,
    settings: &EnvSettings,
) -> Result<Option<ResolvedAction>> {
    let Some(actor) = world.aircraft(side) else {
        return Err(BvrError::UnknownEntity(side));
    };
    if !actor.alive {
        return Ok(None);
    }
    let (command, provenance) = match action {
        PolicyAction::Tactic(a) => {
            let out = execute_tactic(a, world, side, &settings.tactics, &settings.sim)?;
            (out.command, Some(out.provenance))
        }
        PolicyAction::Hold => (ControlCommand::hold(actor, &settings.sim), None),
    };
    Ok(Some(ResolvedAction {
        side,
        action,
        provenance,
        command,
    }))
}

/// One decision tick: both sides resolve, physics runs for
/// `physics_steps_per_decision` steps (stopping early on termination), and
/// the launch command is applied on the first physics step only.
pub fn advance(
    world: &WorldState,
    resolved: &[ResolvedAction],
    settings: &EnvSettings,
    agent: EntityId,
) -> Result<WorldState> {
    let sim = &settings.sim;
    let mut commands: Vec<(EntityId, ControlCommand)> =
        resolved.iter().map(|r| (r.side, r.command.clone())).collect();
    let mut next = world.clone();
    for k in 0..sim.physics_steps_per_decision {
        if k == 1 {
            for (_, c) in commands.iter_mut() {
                c.fire = false;
            }
        }
        next = world_step(&next, &commands, sim)?;
        if check_termination(&next, agent, sim).is_terminal() {
            break;
        }
    }
    Ok(next)
}

/// Episodic environment from one side's point of view.
#[derive(Clone, Debug)]
pub struct BvrEnv {
    settings: EnvSettings,
    world: WorldState,
    agent: EntityId,
    opponent: EntityId,
    outcome: Outcome,
}

impl BvrEnv {
    /// Environment whose reward, observation and outcome belong to `agent`.
    pub fn new(settings: EnvSettings, seed: u64, agent: EntityId) -> Self {
        let (world, _) = env_reset(seed, &settings);
        let opponent = if agent == BLUE { RED } else { BLUE };
        Self {
            settings,
            world,
            agent,
            opponent,
            outcome: Outcome::Ongoing,
        }
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        let (world, _) = env_reset(seed, &self.settings);
        self.world = world;
        self.outcome = Outcome::Ongoing;
        self.observation()
    }

    pub fn settings(&self) -> &EnvSettings {
        &self.settings
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn agent(&self) -> EntityId {
        self.agent
    }

    pub fn opponent(&self) -> EntityId {
        self.opponent
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_terminal()
    }

    pub fn observation(&self) -> Observation {
        build_observation(&self.world, self.agent, &self.settings.sim)
    }

    pub fn observation_for(&self, side: EntityId) -> Observation {
        build_observation(&self.world, side, &self.settings.sim)
    }

    /// Step with the agent's action and the opponent policy's own choice.
    pub fn step(&mut self, agent_action: PolicyAction, opponent: &mut dyn Policy) -> Result<StepResult> {
        if self.is_done() {
            return Err(BvrError::EpisodeDone);
        }
        let opp_action = opponent.act(&self.world, self.opponent, &self.settings);
        self.step_joint(agent_action, opp_action)
    }

    /// Step with both sides' actions already chosen.
    pub fn step_joint(
        &mut self,
        agent_action: PolicyAction,
        opponent_action: PolicyAction,
    ) -> Result<StepResult> {
        if self.is_done() {
            return Err(BvrError::EpisodeDone);
        }
        let mut resolved = Vec::with_capacity(2);
        for (side, action) in [(self.agent, agent_action), (self.opponent, opponent_action)] {
            if let Some(r) = resolve_action(&self.world, side, action, &self.settings)? {
                resolved.push(r);
            }
        }
        resolved.sort_by_key(|r| r.side);
        let next = advance(&self.world, &resolved, &self.settings, self.agent)?;
        let reward = compute_reward(
            &self.world,
            &next,
            self.agent,
            &self.settings.reward,
            &self.settings.sim,
        );
        let opponent_reward = compute_reward(
            &self.world,
            &next,
            self.opponent,
            &self.settings.reward,
            &self.settings.sim,
        );
        self.world = next;
        self.outcome = check_termination(&self.world, self.agent, &self.settings.sim);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            opponent_reward,
            done: self.outcome.is_terminal(),
            outcome: self.outcome,
            resolved,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(PolicyAction);

    impl Policy for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn act(&mut self, _: &WorldState, _: EntityId, _: &EnvSettings) -> PolicyAction {
            self.0
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let s = EnvSettings::default();
        assert_eq!(env_reset(42, &s), env_reset(42, &s));
    }

    #[test]
    fn spawn_range_and_bearing_window() {
        let s = EnvSettings::default();
        let mut bearings = Vec::new();
        for seed in 0..1000u64 {
            let (w, obs) = env_reset(seed, &s);
            let blue = w.aircraft(BLUE).unwrap();
            let red = w.aircraft(RED).unwrap();
            let d = blue.position.distance(red.position);
            assert!((70_000.0..=90_000.0 + 1e-6).contains(&d), "seed {seed}: {d}");
            let b = blue.position.bearing_to(red.position);
            assert!(b.abs() <= 30f64.to_radians() + 1e-9);
            assert!((8000.0..=10_000.0).contains(&red.position.z));
            assert!(obs.is_valid());
            bearings.push(b);
        }
        assert!(bearings.windows(2).any(|w| w[0] != w[1]));
        assert!(bearings.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn cap_vs_cap_advances_one_second() {
        let s = EnvSettings::default();
        let mut env = BvrEnv::new(s, 3, BLUE);
        let mut opp = Fixed(PolicyAction::Tactic(TacticAction::Cap));
        let r = env
            .step(PolicyAction::Tactic(TacticAction::Cap), &mut opp)
            .unwrap();
        assert_eq!(env.world().tick, 10);
        assert!((env.world().sim_time - 1.0).abs() < 1e-12);
        assert!(!r.done);
        assert!(r.reward.abs() < 0.01);
        assert!(env.world().missiles.is_empty());
    }

    #[test]
    fn stepping_after_done_is_an_error() {
        let s = EnvSettings::default();
        let mut env = BvrEnv::new(s, 3, BLUE);
        env.world.aircraft[1].alive = false;
        env.world.aircraft[1].health = 0.0;
        let r = env
            .step_joint(PolicyAction::Hold, PolicyAction::Hold)
            .unwrap();
        assert!(r.done);
        assert_eq!(r.outcome, Outcome::AgentWin);
        assert!(matches!(
            env.step_joint(PolicyAction::Hold, PolicyAction::Hold),
            Err(BvrError::EpisodeDone)
        ));
    }

    #[test]
    fn truncation_is_a_draw() {
        let s = EnvSettings {
            sim: SimConfig {
                t_max: 5.0,
                ..SimConfig::default()
            },
            ..EnvSettings::default()
        };
        let mut env = BvrEnv::new(s, 9, BLUE);
        let mut steps = 0;
        loop {
            let r = env.step_joint(PolicyAction::Hold, PolicyAction::Hold).unwrap();
            steps += 1;
            if r.done {
                assert_eq!(r.outcome, Outcome::Draw);
                break;
            }
        }
        assert_eq!(steps, 5);
    }

    #[test]
    fn fire_launches_once_per_decision_tick() {
        let s = EnvSettings::default();
        let mut env = BvrEnv::new(s, 11, BLUE);
        // close the range so the fire gate passes
        let blue = env.world.aircraft[0].position;
        env.world.aircraft[1].position = blue + Vec3::new(30_000.0, 0.0, 0.0);
        env.world.aircraft[0].heading = 0.0;
        env.world.sensors = env
            .world
            .aircraft
            .iter()
            .map(|a| crate::simcore::radar_scan(&env.world, a.id, &env.settings.sim))
            .collect();
        let r = env
            .step_joint(PolicyAction::Tactic(TacticAction::Fire), PolicyAction::Hold)
            .unwrap();
        assert_eq!(env.world().aircraft[0].missiles, 3);
        assert_eq!(env.world().missiles.len(), 1);
        assert!(env.world().missiles[0].supported);
        assert!(r.resolved[0].command.fire);
    }
}
