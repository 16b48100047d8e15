use super::wire::{OwnMissile, Ownship, StatePayload, Stores, TrackView};
use crate::simcore::{EntityId, WorldState};

/// Fog-of-war view for `side`: own truth, own radar tracks, own warnings and
/// own missiles. Opponent truth never leaves this function.
pub fn filter_state(world: &WorldState, side: EntityId) -> Option<StatePayload> {
    let own = world.aircraft(side)?;
    let picture = world.picture(side);
    let tracks = picture
        .map(|p| {
            p.tracks
                .iter()
                .map(|t| TrackView {
                    target: t.target_id,
                    position: t.position,
                    velocity: t.velocity,
                    age: t.age,
                    range: own.position.distance(t.position),
                    bearing: own.position.bearing_to(t.position),
                })
                .collect()
        })
        .unwrap_or_default();
    let warnings = picture.map(|p| p.warnings.clone()).unwrap_or_default();
    let missiles = world
        .missiles
        .iter()
        .filter(|m| m.alive && m.shooter_id == side)
        .map(|m| OwnMissile {
            id: m.id,
            target: m.target_id,
            position: m.position,
            velocity: m.velocity,
            seeker_active: m.seeker_active,
            supported: m.supported,
        })
        .collect();
    Some(StatePayload {
        sim_time: world.sim_time,
        ownship: Ownship {
            id: own.id,
            position: own.position,
            velocity: own.velocity(),
            speed: own.speed,
            heading: own.heading,
            pitch: own.pitch,
            roll: own.roll,
            health: own.health,
            radar_on: own.radar_on,
            alive: own.alive,
            station: world.station(side),
        },
        tracks,
        warnings,
        missiles,
        stores: Stores {
            fuel: own.fuel,
            missiles: own.missiles,
        },
    })
}

/// Entity ids a payload mentions besides ownship and its own missiles.
pub fn foreign_entities(payload: &StatePayload) -> Vec<EntityId> {
    payload
        .tracks
        .iter()
        .map(|t| t.target)
        .chain(payload.warnings.iter().map(|w| w.missile_id))
        .collect()
}
