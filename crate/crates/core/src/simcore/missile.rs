use serde::{Deserialize, Serialize};

use super::geometry::Vec3;
use super::world::WorldState;
use super::EntityId;
use crate::config::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissileState {
    pub id: EntityId,
    pub shooter_id: EntityId,
    pub target_id: EntityId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub time_of_flight: f64,
    /// Latched once the missile closes inside pitbull range.
    pub seeker_active: bool,
    /// Shooter datalink was guiding the missile on the latest step.
    pub supported: bool,
    pub alive: bool,
}

/// Missile speed along the boost-then-decay profile.
pub fn missile_speed(time_of_flight: f64, cfg: &SimConfig) -> f64 {
    (cfg.missile_boost_speed - cfg.missile_decay * time_of_flight).max(cfg.missile_floor_speed)
}

/// Proportional-navigation acceleration command: N · Vc · (Ω × LOS),
/// where Ω is the line-of-sight rotation rate.
pub fn pn_acceleration(
    missile_pos: Vec3,
    missile_vel: Vec3,
    target_pos: Vec3,
    target_vel: Vec3,
    gain: f64,
) -> Vec3 {
    let los = target_pos - missile_pos;
    let range_sq = los.norm_squared();
    if range_sq == 0.0 {
        return Vec3::ZERO;
    }
    let rel_vel = target_vel - missile_vel;
    let omega = los.cross(rel_vel) * (1.0 / range_sq);
    let closing = -los.dot(rel_vel) / range_sq.sqrt();
    omega.cross(los.normalized()) * (gain * closing)
}

/// Advances one missile by `dt`. `shooter_supporting` is true when the shooter
/// commanded support this step.
pub fn step_missile(
    m: &MissileState,
    world: &WorldState,
    shooter_supporting: bool,
    dt: f64,
    cfg: &SimConfig,
) -> MissileState {
    let mut next = m.clone();
    if !m.alive {
        return next;
    }
    let Some(target) = world.aircraft(m.target_id).filter(|t| t.alive) else {
        next.alive = false;
        return next;
    };

    let shooter_alive = world.aircraft(m.shooter_id).is_some_and(|s| s.alive);
    let shooter_tracks = world
        .picture(m.shooter_id)
        .is_some_and(|p| p.tracks.iter().any(|t| t.target_id == m.target_id));
    next.supported = shooter_alive && shooter_tracks && shooter_supporting;
    if !m.seeker_active && !next.supported {
        next.alive = false;
        return next;
    }

    let accel = pn_acceleration(
        m.position,
        m.velocity,
        target.position,
        target.velocity(),
        cfg.pn_gain,
    );
    let heading = m.velocity.normalized();
    let mut lateral = accel - heading * accel.dot(heading);
    let limit = cfg.missile_g_max * cfg.g;
    let mag = lateral.norm();
    if mag > limit {
        lateral = lateral * (limit / mag);
    }

    next.time_of_flight = m.time_of_flight + dt;
    let speed = missile_speed(next.time_of_flight, cfg);
    let dir = (m.velocity + lateral * dt).normalized();
    next.velocity = dir * speed;
    next.position = m.position + next.velocity * dt;

    if next.position.distance(target.position) <= cfg.pitbull_range {
        next.seeker_active = true;
    }
    if next.time_of_flight > cfg.missile_max_tof {
        next.alive = false;
    }
    next
}
