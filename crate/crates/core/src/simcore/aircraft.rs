use serde::{Deserialize, Serialize};

use super::geometry::{direction, wrap_pi, Vec3};
use super::EntityId;
use crate::config::SimConfig;
use crate::error::{BvrError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub id: EntityId,
    pub position: Vec3,
    /// True airspeed, m/s.
    pub speed: f64,
    /// Yaw, clockwise from north, in [-π, π).
    pub heading: f64,
    pub pitch: f64,
    /// Bank angle implied by the current turn rate; right turn is positive.
    pub roll: f64,
    pub fuel: f64,
    pub missiles: u32,
    pub health: f64,
    pub radar_on: bool,
    pub alive: bool,
}

impl AircraftState {
    pub fn velocity(&self) -> Vec3 {
        direction(self.heading, self.pitch) * self.speed
    }

    pub fn altitude(&self) -> f64 {
        self.position.z
    }

    fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.speed.is_finite()
            && self.heading.is_finite()
            && self.pitch.is_finite()
            && self.roll.is_finite()
            && self.fuel.is_finite()
            && self.health.is_finite()
    }
}

/// Autopilot targets for one physics step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub desired_heading: f64,
    pub desired_altitude: f64,
    pub desired_speed: f64,
    /// Load factor available for turning; capped at `n_max`.
    pub max_g: f64,
    pub fire: bool,
    pub fire_target: Option<EntityId>,
    pub radar_on: bool,
    /// Shooter is guiding its own airborne missiles this tick.
    pub support: bool,
}

impl ControlCommand {
    /// Keep current heading, altitude and speed; radar state unchanged.
    pub fn hold(state: &AircraftState, cfg: &SimConfig) -> Self {
        Self {
            desired_heading: state.heading,
            desired_altitude: state.altitude(),
            desired_speed: state.speed,
            max_g: cfg.n_max,
            fire: false,
            fire_target: None,
            radar_on: state.radar_on,
            support: false,
        }
        .clamped(cfg)
    }

    /// Clamp speed and altitude into the flight envelope and wrap the heading.
    pub fn clamped(mut self, cfg: &SimConfig) -> Self {
        self.desired_speed = self.desired_speed.clamp(cfg.v_min, cfg.v_max);
        self.desired_altitude = self.desired_altitude.clamp(cfg.alt_min, cfg.alt_max);
        self.desired_heading = wrap_pi(self.desired_heading);
        self.max_g = self.max_g.clamp(0.0, cfg.n_max);
        self
    }

    pub fn within_envelope(&self, cfg: &SimConfig) -> bool {
        (cfg.v_min..=cfg.v_max).contains(&self.desired_speed)
            && (cfg.alt_min..=cfg.alt_max).contains(&self.desired_altitude)
            && self.desired_heading.is_finite()
    }

    fn is_finite(&self) -> bool {
        self.desired_heading.is_finite()
            && self.desired_altitude.is_finite()
            && self.desired_speed.is_finite()
            && self.max_g.is_finite()
    }
}

/// Maximum heading rate at the given speed and load factor, rad/s.
pub fn max_turn_rate(speed: f64, load_factor: f64, cfg: &SimConfig) -> f64 {
    load_factor.min(cfg.n_max) * cfg.g / speed
}

/// Point-mass step with first-order command tracking.
pub fn integrate_aircraft(
    state: &AircraftState,
    cmd: &ControlCommand,
    dt: f64,
    cfg: &SimConfig,
) -> Result<AircraftState> {
    if !state.alive {
        return Ok(state.clone());
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(BvrError::SimulationFault(format!("invalid dt {dt}")));
    }
    if !state.is_finite() || !cmd.is_finite() {
        return Err(BvrError::SimulationFault(format!(
            "non-finite aircraft state or command for aircraft {}",
            state.id
        )));
    }
    let cmd = cmd.clone().clamped(cfg);
    let mut next = state.clone();

    let omega = max_turn_rate(state.speed, cmd.max_g, cfg);
    let turn = wrap_pi(cmd.desired_heading - state.heading).clamp(-omega * dt, omega * dt);
    next.heading = wrap_pi(state.heading + turn);
    let turn_rate = turn / dt;
    next.roll = if turn == 0.0 {
        0.0
    } else {
        (turn_rate * state.speed / cfg.g).atan()
    };

    let dv = (cmd.desired_speed - state.speed).clamp(-cfg.a_max * dt, cfg.a_max * dt);
    next.speed = (state.speed + dv).clamp(cfg.v_min, cfg.v_max);

    let alt_err = cmd.desired_altitude - state.altitude();
    let mut vz = (cfg.altitude_gain * alt_err).clamp(-cfg.climb_max, cfg.climb_max);
    if (vz * dt).abs() > alt_err.abs() {
        vz = alt_err / dt;
    }
    vz = vz.clamp(-next.speed, next.speed);
    next.pitch = (vz / next.speed).asin();

    let horizontal = (next.speed * next.speed - vz * vz).max(0.0).sqrt();
    let (sh, ch) = next.heading.sin_cos();
    next.position += Vec3::new(horizontal * ch, horizontal * sh, vz) * dt;
    next.position.z = next.position.z.clamp(cfg.alt_min, cfg.alt_max);

    next.radar_on = cmd.radar_on;

    let burn = (cfg.fuel_burn_base + cfg.fuel_burn_per_speed * next.speed) * dt;
    next.fuel = (state.fuel - burn).max(0.0);
    next.alive = next.health > 0.0 && next.fuel > 0.0;
    Ok(next)
}
