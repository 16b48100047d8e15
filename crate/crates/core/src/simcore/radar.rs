use serde::{Deserialize, Serialize};

use super::geometry::{wrap_pi, Vec3};
use super::world::WorldState;
use super::EntityId;
use crate::config::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarTrack {
    pub target_id: EntityId,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Seconds since the last radar refresh.
    pub age: f64,
}

impl RadarTrack {
    pub fn is_fresh(&self, cfg: &SimConfig) -> bool {
        self.age <= cfg.track_timeout
    }
}

/// Radar-warning entry for a missile with an active seeker closing on the observer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissileWarning {
    pub missile_id: EntityId,
    /// Bearing from the observer to the missile, clockwise from north.
    pub bearing: f64,
    pub range: f64,
}

/// Everything one aircraft currently knows about the others.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorPicture {
    pub observer: EntityId,
    pub tracks: Vec<RadarTrack>,
    pub warnings: Vec<MissileWarning>,
}

/// One radar/RWR sweep. Returned tracks have age 0.
pub fn radar_scan(world: &WorldState, observer_id: EntityId, cfg: &SimConfig) -> SensorPicture {
    let mut picture = SensorPicture {
        observer: observer_id,
        ..SensorPicture::default()
    };
    let Some(observer) = world.aircraft(observer_id).filter(|a| a.alive) else {
        return picture;
    };

    if observer.radar_on {
        for target in world.aircraft.iter() {
            if target.id == observer_id || !target.alive {
                continue;
            }
            let range = observer.position.distance(target.position);
            let off_boresight =
                wrap_pi(observer.position.bearing_to(target.position) - observer.heading).abs();
            if range <= cfg.radar_range && off_boresight <= cfg.gimbal_limit() {
                picture.tracks.push(RadarTrack {
                    target_id: target.id,
                    position: target.position,
                    velocity: target.velocity(),
                    age: 0.0,
                });
            }
        }
    }

    for m in world.missiles.iter() {
        if !m.alive || m.target_id != observer_id || !m.seeker_active {
            continue;
        }
        let range = observer.position.distance(m.position);
        if range <= cfg.rwr_range {
            picture.warnings.push(MissileWarning {
                missile_id: m.id,
                bearing: observer.position.bearing_to(m.position),
                range,
            });
        }
    }
    picture
}

/// Merge a fresh sweep into the previous picture: refreshed tracks reset to
/// age 0, undetected ones coast on their last velocity until `track_timeout`.
pub fn merge_picture(
    previous: &SensorPicture,
    sweep: SensorPicture,
    world: &WorldState,
    dt: f64,
    cfg: &SimConfig,
) -> SensorPicture {
    let mut tracks = sweep.tracks;
    for old in previous.tracks.iter() {
        if tracks.iter().any(|t| t.target_id == old.target_id) {
            continue;
        }
        let target_alive = world.aircraft(old.target_id).is_some_and(|a| a.alive);
        let age = old.age + dt;
        if target_alive && age <= cfg.track_timeout {
            tracks.push(RadarTrack {
                target_id: old.target_id,
                position: old.position + old.velocity * dt,
                velocity: old.velocity,
                age,
            });
        }
    }
    tracks.sort_by_key(|t| t.target_id);
    SensorPicture {
        observer: sweep.observer,
        tracks,
        warnings: sweep.warnings,
    }
}
