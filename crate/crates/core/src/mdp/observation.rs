use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::simcore::{wrap_pi, EntityId, Vec3, WorldState};
use crate::tactics::nearest_track;

pub const OBS_DIM: usize = 16;

/// Normalized agent state, every component in [-1, 1]:
/// `p_x p_y p_z v_x v_y v_z roll pitch yaw Δd Δv Δα fuel missiles health sensor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub const REL_DISTANCE: usize = 9;
    pub const REL_SPEED: usize = 10;
    pub const REL_ANGLE: usize = 11;
    pub const HEALTH: usize = 14;
    pub const SENSOR: usize = 15;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_f32(&self) -> [f32; OBS_DIM] {
        self.0.map(|v| v as f32)
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v))
    }
}

/// Side-canonical frame: an aircraft whose CAP station lies north of the
/// arena center sees the world rotated by π, so both sides observe
/// themselves defending the southern half.
fn frame_flip(world: &WorldState, agent_id: EntityId) -> bool {
    world.station(agent_id).is_some_and(|s| s.x > 0.0)
}

fn to_frame(v: Vec3, flip: bool) -> Vec3 {
    if flip {
        Vec3::new(-v.x, -v.y, v.z)
    } else {
        v
    }
}

/// Angle between two vectors in [0, π]; zero for degenerate inputs.
fn angle_between(a: Vec3, b: Vec3) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0).acos()
}

pub fn build_observation(world: &WorldState, agent_id: EntityId, cfg: &SimConfig) -> Observation {
    let mut o = [0.0; OBS_DIM];
    let Some(agent) = world.aircraft(agent_id) else {
        o[Observation::REL_DISTANCE] = 1.0;
        o[Observation::HEALTH] = -1.0;
        o[Observation::SENSOR] = -1.0;
        return Observation(o);
    };
    let fuel_frac = (agent.fuel / cfg.fuel_initial).clamp(0.0, 1.0);
    let missiles_frac = if cfg.initial_missiles == 0 {
        0.0
    } else {
        (agent.missiles as f64 / cfg.initial_missiles as f64).clamp(0.0, 1.0)
    };
    o[12] = fuel_frac;
    o[13] = missiles_frac;
    o[Observation::SENSOR] = if agent.radar_on { 1.0 } else { -1.0 };

    if !agent.alive {
        o[Observation::REL_DISTANCE] = 1.0;
        o[Observation::HEALTH] = -1.0;
        return Observation(o);
    }

    let flip = frame_flip(world, agent_id);
    let pos = to_frame(agent.position, flip);
    let vel = to_frame(agent.velocity(), flip);
    let half = cfg.arena_half_extent;
    o[0] = (pos.x / half).clamp(-1.0, 1.0);
    o[1] = (pos.y / half).clamp(-1.0, 1.0);
    o[2] = (pos.z / half).clamp(-1.0, 1.0);
    o[3] = (vel.x / cfg.v_max).clamp(-1.0, 1.0);
    o[4] = (vel.y / cfg.v_max).clamp(-1.0, 1.0);
    o[5] = (vel.z / cfg.v_max).clamp(-1.0, 1.0);
    o[6] = (agent.roll / PI).clamp(-1.0, 1.0);
    o[7] = (agent.pitch / FRAC_PI_2).clamp(-1.0, 1.0);
    let yaw = if flip { wrap_pi(agent.heading + PI) } else { agent.heading };
    o[8] = (yaw / PI).clamp(-1.0, 1.0);

    match nearest_track(world, agent, cfg) {
        Some(track) => {
            let los = track.position - agent.position;
            o[Observation::REL_DISTANCE] = (los.norm() / 100_000.0).min(1.0);
            o[Observation::REL_SPEED] =
                ((agent.speed - track.velocity.norm()) / cfg.v_max).clamp(-1.0, 1.0);
            o[Observation::REL_ANGLE] = (angle_between(agent.velocity(), los) / PI).clamp(0.0, 1.0);
        }
        None => {
            o[Observation::REL_DISTANCE] = 1.0;
        }
    }

    o[Observation::HEALTH] = (2.0 * agent.health - 1.0).clamp(-1.0, 1.0);
    Observation(o)
}
