use serde::{Deserialize, Serialize};

use super::aircraft::{integrate_aircraft, AircraftState, ControlCommand};
use super::geometry::{closest_approach, direction, Vec3};
use super::missile::{step_missile, MissileState};
use super::radar::{merge_picture, radar_scan, SensorPicture};
use super::EntityId;
use crate::config::SimConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapStation {
    pub owner: EntityId,
    pub position: Vec3,
}

/// Ground-truth engagement state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub sim_time: f64,
    pub aircraft: Vec<AircraftState>,
    pub missiles: Vec<MissileState>,
    pub sensors: Vec<SensorPicture>,
    pub stations: Vec<CapStation>,
    pub rng_seed: u64,
    pub next_entity_id: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ongoing,
    AgentWin,
    AgentLoss,
    Draw,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Ongoing
    }

    /// The same result seen from the other side.
    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::AgentWin => Outcome::AgentLoss,
            Outcome::AgentLoss => Outcome::AgentWin,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ongoing => "ongoing",
            Outcome::AgentWin => "agent_win",
            Outcome::AgentLoss => "agent_loss",
            Outcome::Draw => "draw",
        }
    }
}

impl WorldState {
    /// Builds a tick-0 world and runs the initial sensor sweep.
    pub fn from_aircraft(
        rng_seed: u64,
        mut aircraft: Vec<AircraftState>,
        stations: Vec<CapStation>,
        cfg: &SimConfig,
    ) -> Self {
        aircraft.sort_by_key(|a| a.id);
        let next_entity_id = aircraft.iter().map(|a| a.id.0 + 1).max().unwrap_or(0).max(100);
        let mut world = WorldState {
            tick: 0,
            sim_time: 0.0,
            sensors: aircraft
                .iter()
                .map(|a| SensorPicture {
                    observer: a.id,
                    ..SensorPicture::default()
                })
                .collect(),
            aircraft,
            missiles: Vec::new(),
            stations,
            rng_seed,
            next_entity_id,
        };
        world.sensors = world
            .aircraft
            .iter()
            .map(|a| radar_scan(&world, a.id, cfg))
            .collect();
        world
    }

    pub fn aircraft(&self, id: EntityId) -> Option<&AircraftState> {
        self.aircraft.iter().find(|a| a.id == id)
    }

    pub fn aircraft_mut(&mut self, id: EntityId) -> Option<&mut AircraftState> {
        self.aircraft.iter_mut().find(|a| a.id == id)
    }

    pub fn picture(&self, id: EntityId) -> Option<&SensorPicture> {
        self.sensors.iter().find(|p| p.observer == id)
    }

    pub fn station(&self, owner: EntityId) -> Option<Vec3> {
        self.stations
            .iter()
            .find(|s| s.owner == owner)
            .map(|s| s.position)
    }

    pub fn opponents_of(&self, id: EntityId) -> impl Iterator<Item = &AircraftState> {
        self.aircraft.iter().filter(move |a| a.id != id)
    }

    pub fn missile(&self, id: EntityId) -> Option<&MissileState> {
        self.missiles.iter().find(|m| m.id == id)
    }
}

/// One physics step. Fixed order: aircraft, launches, missiles, hits, sensors.
/// Commands for unknown or dead aircraft are ignored; living aircraft without
/// a command hold their current flight.
pub fn world_step(
    world: &WorldState,
    commands: &[(EntityId, ControlCommand)],
    cfg: &SimConfig,
) -> Result<WorldState> {
    let dt = cfg.dt_physics;
    let command_for = |id: EntityId| commands.iter().find(|(i, _)| *i == id).map(|(_, c)| c);
    let mut next = world.clone();

    for (slot, a) in world.aircraft.iter().enumerate() {
        if !a.alive {
            continue;
        }
        let cmd = match command_for(a.id) {
            Some(c) => c.clone(),
            None => ControlCommand::hold(a, cfg),
        };
        next.aircraft[slot] = integrate_aircraft(a, &cmd, dt, cfg)?;
    }

    for slot in 0..next.aircraft.len() {
        let shooter = &next.aircraft[slot];
        let Some(cmd) = command_for(shooter.id) else {
            continue;
        };
        if !(cmd.fire && shooter.alive && shooter.missiles > 0) {
            continue;
        }
        let Some(target_id) = cmd.fire_target.filter(|t| *t != shooter.id) else {
            continue;
        };
        if !next.aircraft(target_id).is_some_and(|t| t.alive) {
            continue;
        }
        let missile = MissileState {
            id: EntityId(next.next_entity_id),
            shooter_id: shooter.id,
            target_id,
            position: shooter.position,
            velocity: direction(shooter.heading, shooter.pitch) * cfg.missile_boost_speed,
            time_of_flight: 0.0,
            seeker_active: false,
            supported: false,
            alive: true,
        };
        next.next_entity_id += 1;
        next.aircraft[slot].missiles -= 1;
        next.missiles.push(missile);
    }

    let before: Vec<Vec3> = next.missiles.iter().map(|m| m.position).collect();
    let stepped: Vec<MissileState> = next
        .missiles
        .iter()
        .map(|m| {
            let supporting = command_for(m.shooter_id).is_some_and(|c| c.support);
            step_missile(m, &next, supporting, dt, cfg)
        })
        .collect();
    next.missiles = stepped;

    let mut killed = Vec::new();
    for (m, start) in next.missiles.iter_mut().zip(before) {
        if !m.alive {
            continue;
        }
        let (Some(t0), Some(t1)) = (world.aircraft(m.target_id), next.aircraft.iter().find(|a| a.id == m.target_id)) else {
            continue;
        };
        if !t1.alive || killed.contains(&m.target_id) {
            continue;
        }
        if closest_approach(start, m.position, t0.position, t1.position) <= cfg.kill_radius {
            m.alive = false;
            killed.push(m.target_id);
        }
    }
    for target in next.aircraft.iter_mut().filter(|a| killed.contains(&a.id)) {
        target.health = 0.0;
        target.alive = false;
    }
    next.missiles.retain(|m| m.alive);

    next.sensors = next
        .aircraft
        .iter()
        .map(|a| {
            if !a.alive {
                return SensorPicture {
                    observer: a.id,
                    ..SensorPicture::default()
                };
            }
            let sweep = radar_scan(&next, a.id, cfg);
            let previous = world.picture(a.id).cloned().unwrap_or_default();
            merge_picture(&previous, sweep, &next, dt, cfg)
        })
        .collect();

    next.tick = world.tick + 1;
    next.sim_time = next.tick as f64 * dt;
    Ok(next)
}

/// Episode result from `agent_id`'s point of view.
pub fn check_termination(world: &WorldState, agent_id: EntityId, cfg: &SimConfig) -> Outcome {
    let agent_alive = world.aircraft(agent_id).is_some_and(|a| a.alive);
    if !agent_alive {
        return Outcome::AgentLoss;
    }
    if world.opponents_of(agent_id).all(|o| !o.alive) {
        return Outcome::AgentWin;
    }
    if world.sim_time >= cfg.t_max - 1e-9 {
        return Outcome::Draw;
    }
    Outcome::Ongoing
}
