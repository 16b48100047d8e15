//! Deterministic point-mass engagement engine: aircraft dynamics, radar and
//! RWR sensing, proportional-navigation missiles, hits and termination.

mod aircraft;
mod geometry;
mod missile;
mod radar;
mod world;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use aircraft::{integrate_aircraft, max_turn_rate, AircraftState, ControlCommand};
pub use geometry::{closest_approach, direction, wrap_pi, Vec3};
pub use missile::{missile_speed, pn_acceleration, step_missile, MissileState};
pub use radar::{merge_picture, radar_scan, MissileWarning, RadarTrack, SensorPicture};
pub use world::{check_termination, world_step, CapStation, Outcome, WorldState};

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
