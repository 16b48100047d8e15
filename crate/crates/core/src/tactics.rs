//! The six tactical actions as deterministic maneuver controllers.
//!
//! Each controller maps an actor's state (plus whatever target, threat or
//! missile it needs) to a [`ControlCommand`]. [`execute_tactic`] selects
//! targets from the actor's own sensor picture and walks the fallback chains
//! (Fire→Commit→CAP, Break→Abort→CAP, Support→Commit→CAP) so that every
//! action is legal in every state. Each fallback is recorded in the returned
//! [`Provenance`].

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{SimConfig, TacticParams};
use crate::error::{BvrError, Result};
use crate::simcore::{
    wrap_pi, AircraftState, ControlCommand, EntityId, MissileState, RadarTrack, Vec3, WorldState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum TacticAction {
    Cap = 0,
    Commit = 1,
    Abort = 2,
    Break = 3,
    Fire = 4,
    Support = 5,
}

impl TacticAction {
    pub const COUNT: usize = 6;
    pub const ALL: [TacticAction; 6] = [
        TacticAction::Cap,
        TacticAction::Commit,
        TacticAction::Abort,
        TacticAction::Break,
        TacticAction::Fire,
        TacticAction::Support,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TacticAction::Cap => "CAP",
            TacticAction::Commit => "COMMIT",
            TacticAction::Abort => "ABORT",
            TacticAction::Break => "BREAK",
            TacticAction::Fire => "FIRE",
            TacticAction::Support => "SUPPORT",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(name))
    }
}

impl From<TacticAction> for u8 {
    fn from(a: TacticAction) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for TacticAction {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        TacticAction::from_index(v as usize).ok_or_else(|| format!("invalid tactic index {v}"))
    }
}

impl fmt::Display for TacticAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FireRejection {
    NoWeapons,
    NoTrack,
    OutOfRange,
    OffBoresight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackCause {
    FireRejected(FireRejection),
    /// Commit without a fresh track.
    NoTrack,
    /// Break without a missile warning.
    NoWarning,
    /// Abort with neither a warning nor a track to turn away from.
    NoThreat,
    /// Support without an own missile in flight.
    NoMissile,
    /// Support after every own missile has gone pitbull.
    SeekerActive,
}

impl fmt::Display for FallbackCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FallbackCause::FireRejected(r) => write!(f, "fire_rejected({r:?})"),
            FallbackCause::NoTrack => f.write_str("fallback"),
            FallbackCause::NoWarning => f.write_str("downgrade"),
            FallbackCause::NoThreat => f.write_str("no_threat"),
            FallbackCause::NoMissile => f.write_str("no_missile"),
            FallbackCause::SeekerActive => f.write_str("released"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fallback {
    pub from: TacticAction,
    pub to: TacticAction,
    pub cause: FallbackCause,
}

/// Which tactic actually produced a command, and why.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub requested: TacticAction,
    pub effective: TacticAction,
    pub fallbacks: Vec<Fallback>,
}

impl Provenance {
    fn direct(action: TacticAction) -> Self {
        Self {
            requested: action,
            effective: action,
            fallbacks: Vec::new(),
        }
    }

    fn push(&mut self, to: TacticAction, cause: FallbackCause) {
        self.fallbacks.push(Fallback {
            from: self.effective,
            to,
            cause,
        });
        self.effective = to;
    }

    /// First fire rejection in the chain, if any.
    pub fn fire_rejection(&self) -> Option<FireRejection> {
        self.fallbacks.iter().find_map(|f| match f.cause {
            FallbackCause::FireRejected(r) => Some(r),
            _ => None,
        })
    }
}

impl fmt::Display for Provenance {
    /// `FIRE>fire_rejected(NoTrack)>COMMIT>fallback>CAP`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.requested)?;
        for fb in &self.fallbacks {
            write!(f, ">{}>{}", fb.cause, fb.to)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TacticCommand {
    pub command: ControlCommand,
    pub provenance: Provenance,
}

fn base_command(actor: &AircraftState, p: &TacticParams) -> ControlCommand {
    ControlCommand {
        desired_heading: actor.heading,
        desired_altitude: actor.altitude(),
        desired_speed: actor.speed,
        max_g: p.maneuver_g,
        fire: false,
        fire_target: None,
        radar_on: true,
        support: false,
    }
}

/// Circle the station clockwise at `cap_radius`; home on it when far outside.
///
/// The tangent heading is corrected by `cap_radial_gain · (d − R) / R`,
/// saturating at ±π/2, so beyond the capture band the command is a pure
/// bearing to the station.
pub fn cap_command(
    actor: &AircraftState,
    station: Vec3,
    p: &TacticParams,
    sim: &SimConfig,
) -> ControlCommand {
    let mut cmd = base_command(actor, p);
    let offset = station - actor.position;
    let d = offset.horizontal_norm();
    cmd.desired_heading = if d < 1.0 {
        0.0
    } else {
        let bearing = actor.position.bearing_to(station);
        let correction =
            (p.cap_radial_gain * (d - p.cap_radius) / p.cap_radius).clamp(-FRAC_PI_2, FRAC_PI_2);
        bearing - FRAC_PI_2 + correction
    };
    cmd.desired_speed = p.cap_speed;
    cmd.desired_altitude = station.z;
    cmd.clamped(sim)
}

/// Lead-pursuit intercept point: one fixed-point refinement of the
/// time-to-intercept at `closing_speed`.
pub fn lead_point(actor_pos: Vec3, track: &RadarTrack, closing_speed: f64) -> Vec3 {
    let t0 = actor_pos.distance(track.position) / closing_speed;
    let p1 = track.position + track.velocity * t0;
    let t1 = actor_pos.distance(p1) / closing_speed;
    track.position + track.velocity * t1
}

pub fn commit_command(
    actor: &AircraftState,
    track: Option<&RadarTrack>,
    station: Vec3,
    p: &TacticParams,
    sim: &SimConfig,
) -> TacticCommand {
    let mut provenance = Provenance::direct(TacticAction::Commit);
    let Some(track) = track.filter(|t| t.is_fresh(sim)) else {
        provenance.push(TacticAction::Cap, FallbackCause::NoTrack);
        return TacticCommand {
            command: cap_command(actor, station, p, sim),
            provenance,
        };
    };
    let mut cmd = base_command(actor, p);
    let aim = lead_point(actor.position, track, sim.v_max);
    cmd.desired_heading = actor.position.bearing_to(aim);
    cmd.desired_speed = sim.v_max;
    cmd.desired_altitude = track.position.z;
    TacticCommand {
        command: cmd.clamped(sim),
        provenance,
    }
}

/// Turn tail-on to the threat at full speed while descending.
pub fn abort_command(
    actor: &AircraftState,
    threat_position: Vec3,
    p: &TacticParams,
    sim: &SimConfig,
) -> ControlCommand {
    let mut cmd = base_command(actor, p);
    cmd.desired_heading = wrap_pi(actor.position.bearing_to(threat_position) + PI);
    cmd.desired_speed = sim.v_max;
    cmd.desired_altitude = (actor.altitude() - p.abort_descent).max(sim.alt_min);
    cmd.clamped(sim)
}

/// Beam the missile on the side needing the smaller turn (ties turn right),
/// descending at the break load factor.
pub fn break_command(
    actor: &AircraftState,
    missile_bearing: f64,
    p: &TacticParams,
    sim: &SimConfig,
) -> ControlCommand {
    let mut cmd = base_command(actor, p);
    let right = wrap_pi(missile_bearing + FRAC_PI_2);
    let left = wrap_pi(missile_bearing - FRAC_PI_2);
    let turn_right = wrap_pi(right - actor.heading).abs();
    let turn_left = wrap_pi(left - actor.heading).abs();
    cmd.desired_heading = if turn_left < turn_right - 1e-12 { left } else { right };
    cmd.desired_speed = sim.v_max;
    cmd.desired_altitude = actor.altitude() - p.break_descent;
    cmd.max_g = p.break_g;
    cmd.clamped(sim)
}

/// Launch gate. On success the command holds current flight, fires at the
/// track and guides the new missile for the rest of the launch tick.
pub fn fire_decision(
    actor: &AircraftState,
    track: Option<&RadarTrack>,
    p: &TacticParams,
    sim: &SimConfig,
) -> std::result::Result<ControlCommand, FireRejection> {
    if actor.missiles == 0 {
        return Err(FireRejection::NoWeapons);
    }
    let Some(track) = track.filter(|t| t.is_fresh(sim)) else {
        return Err(FireRejection::NoTrack);
    };
    if actor.position.distance(track.position) > p.fire_max_range {
        return Err(FireRejection::OutOfRange);
    }
    let off_nose = wrap_pi(actor.position.bearing_to(track.position) - actor.heading).abs();
    if off_nose > sim.gimbal_limit() {
        return Err(FireRejection::OffBoresight);
    }
    let mut cmd = ControlCommand::hold(actor, sim);
    cmd.fire = true;
    cmd.fire_target = Some(track.target_id);
    cmd.radar_on = true;
    cmd.support = true;
    Ok(cmd)
}

/// Keep the target at `support_offset_max` off the nose, on the side the
/// geometry already favours (ties to the right), at cruise speed.
pub fn support_command(
    actor: &AircraftState,
    track: &RadarTrack,
    p: &TacticParams,
    sim: &SimConfig,
) -> ControlCommand {
    let mut cmd = base_command(actor, p);
    let bearing = actor.position.bearing_to(track.position);
    let current_offset = wrap_pi(actor.heading - bearing);
    let side = if current_offset < 0.0 { -1.0 } else { 1.0 };
    cmd.desired_heading = bearing + side * p.support_offset_max();
    cmd.desired_speed = p.support_speed_frac * sim.v_max;
    cmd.support = true;
    cmd.clamped(sim)
}

/// Nearest fresh track by 3-D distance; ties go to the lower target id.
pub fn nearest_track<'a>(
    world: &'a WorldState,
    actor: &AircraftState,
    sim: &SimConfig,
) -> Option<&'a RadarTrack> {
    world
        .picture(actor.id)?
        .tracks
        .iter()
        .filter(|t| t.is_fresh(sim))
        .min_by(|a, b| {
            let da = actor.position.distance(a.position);
            let db = actor.position.distance(b.position);
            da.total_cmp(&db).then(a.target_id.cmp(&b.target_id))
        })
}

/// Nearest inbound warned missile, expressed as (bearing, position).
fn nearest_warning(world: &WorldState, actor: &AircraftState) -> Option<(f64, Vec3)> {
    world
        .picture(actor.id)?
        .warnings
        .iter()
        .min_by(|a, b| a.range.total_cmp(&b.range).then(a.missile_id.cmp(&b.missile_id)))
        .map(|w| {
            let (s, c) = w.bearing.sin_cos();
            (w.bearing, actor.position + Vec3::new(c, s, 0.0) * w.range)
        })
}

fn own_unpitbulled_missile(world: &WorldState, actor: EntityId) -> Option<&MissileState> {
    world
        .missiles
        .iter()
        .filter(|m| m.alive && m.shooter_id == actor && !m.seeker_active)
        .min_by_key(|m| m.id)
}

/// Dispatch one tactic for `actor_id`, walking fallbacks as needed.
pub fn execute_tactic(
    action: TacticAction,
    world: &WorldState,
    actor_id: EntityId,
    p: &TacticParams,
    sim: &SimConfig,
) -> Result<TacticCommand> {
    let actor = world
        .aircraft(actor_id)
        .ok_or(BvrError::UnknownEntity(actor_id))?;
    if !actor.alive {
        return Err(BvrError::DeadActor(actor_id));
    }
    let station = world.station(actor_id).unwrap_or(actor.position);
    let target = nearest_track(world, actor, sim);
    let mut provenance = Provenance::direct(action);

    let cap = |provenance: Provenance| TacticCommand {
        command: cap_command(actor, station, p, sim),
        provenance,
    };
    let commit = |mut provenance: Provenance| {
        let inner = commit_command(actor, target, station, p, sim);
        for fb in inner.provenance.fallbacks {
            provenance.push(fb.to, fb.cause);
        }
        TacticCommand {
            command: inner.command,
            provenance,
        }
    };
    let abort = |mut provenance: Provenance| {
        let threat = nearest_warning(world, actor)
            .map(|(_, pos)| pos)
            .or_else(|| target.map(|t| t.position));
        match threat {
            Some(pos) => TacticCommand {
                command: abort_command(actor, pos, p, sim),
                provenance,
            },
            None => {
                provenance.push(TacticAction::Cap, FallbackCause::NoThreat);
                cap(provenance)
            }
        }
    };

    let out = match action {
        TacticAction::Cap => cap(provenance),
        TacticAction::Commit => commit(provenance),
        TacticAction::Abort => abort(provenance),
        TacticAction::Break => match nearest_warning(world, actor) {
            Some((bearing, _)) => TacticCommand {
                command: break_command(actor, bearing, p, sim),
                provenance,
            },
            None => {
                provenance.push(TacticAction::Abort, FallbackCause::NoWarning);
                abort(provenance)
            }
        },
        TacticAction::Fire => match fire_decision(actor, target, p, sim) {
            Ok(command) => TacticCommand {
                command,
                provenance,
            },
            Err(reason) => {
                provenance.push(TacticAction::Commit, FallbackCause::FireRejected(reason));
                commit(provenance)
            }
        },
        TacticAction::Support => {
            let own_airborne = world
                .missiles
                .iter()
                .any(|m| m.alive && m.shooter_id == actor_id);
            match own_unpitbulled_missile(world, actor_id) {
                Some(missile) => {
                    let track = world
                        .picture(actor_id)
                        .and_then(|pic| {
                            pic.tracks
                                .iter()
                                .find(|t| t.target_id == missile.target_id && t.is_fresh(sim))
                        })
                        .or(target);
                    match track {
                        Some(track) => TacticCommand {
                            command: support_command(actor, track, p, sim),
                            provenance,
                        },
                        None => {
                            provenance.push(TacticAction::Commit, FallbackCause::NoTrack);
                            commit(provenance)
                        }
                    }
                }
                None if own_airborne => {
                    provenance.push(TacticAction::Cap, FallbackCause::SeekerActive);
                    cap(provenance)
                }
                None => {
                    provenance.push(TacticAction::Commit, FallbackCause::NoMissile);
                    commit(provenance)
                }
            }
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::testing::{aircraft, duel_world, missile_at};
    use crate::simcore::{world_step, CapStation};
    use approx::assert_relative_eq;

    fn p() -> TacticParams {
        TacticParams::default()
    }

    fn track_at(id: u32, position: Vec3, velocity: Vec3) -> RadarTrack {
        RadarTrack {
            target_id: EntityId(id),
            position,
            velocity,
            age: 0.0,
        }
    }

    #[test]
    fn encoding_is_fixed() {
        for (i, a) in TacticAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(TacticAction::from_index(i), Some(*a));
        }
        assert_eq!(TacticAction::from_index(6), None);
        assert_eq!(serde_json::to_string(&TacticAction::Fire).unwrap(), "4");
        assert_eq!(TacticAction::from_name("support"), Some(TacticAction::Support));
    }

    #[test]
    fn cap_homes_when_far_from_station() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 1.0, 250.0);
        let station = Vec3::new(30_000.0, 40_000.0, 9000.0);
        let cmd = cap_command(&a, station, &p(), &sim);
        assert_relative_eq!(cmd.desired_heading, 40_000f64.atan2(30_000.0), epsilon = 1e-12);
        assert_eq!(cmd.desired_speed, p().cap_speed);
        assert!(!cmd.fire);
        assert!(cmd.radar_on);
    }

    #[test]
    fn cap_on_circle_flies_clockwise_tangent() {
        let sim = SimConfig::default();
        // actor due south of the station, exactly on the 10 km circle
        let a = aircraft(0, Vec3::new(-10_000.0, 0.0, 9000.0), 0.0, 200.0);
        let cmd = cap_command(&a, Vec3::new(0.0, 0.0, 9000.0), &p(), &sim);
        // bearing to station is 0, tangent = bearing - π/2 (heading west)
        assert_relative_eq!(cmd.desired_heading, -FRAC_PI_2, epsilon = 1e-12);

        let a = aircraft(0, Vec3::new(0.0, -10_000.0, 9000.0), 0.0, 200.0);
        let cmd = cap_command(&a, Vec3::new(0.0, 0.0, 9000.0), &p(), &sim);
        // west of station: bearing π/2, tangent north
        assert_relative_eq!(cmd.desired_heading, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cap_at_center_heads_north() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(5.0, 5.0, 9000.0), 2.0, 200.0);
        let cmd = cap_command(&a, Vec3::new(5.0, 5.0, 9000.0), &p(), &sim);
        assert_eq!(cmd.desired_heading, 0.0);
    }

    #[test]
    fn cap_orbit_holds_radius_closed_loop() {
        let sim = SimConfig::default();
        let station = Vec3::new(0.0, 0.0, 9000.0);
        let a = aircraft(0, Vec3::new(-10_000.0, 0.0, 9000.0), -FRAC_PI_2, 200.0);
        let far = aircraft(1, Vec3::new(-400_000.0, 0.0, 9000.0), 0.0, 200.0);
        let mut world = crate::simcore::WorldState::from_aircraft(
            0,
            vec![a, far],
            vec![CapStation {
                owner: EntityId(0),
                position: station,
            }],
            &sim,
        );
        for _ in 0..300 {
            let cmd = execute_tactic(TacticAction::Cap, &world, EntityId(0), &p(), &sim)
                .unwrap()
                .command;
            for _ in 0..sim.physics_steps_per_decision {
                world = world_step(&world, &[(EntityId(0), cmd.clone())], &sim).unwrap();
                let d = (world.aircraft[0].position - station).horizontal_norm();
                assert!((d - 10_000.0).abs() <= 500.0, "orbit drifted to {d}");
            }
        }
    }

    #[test]
    fn commit_on_stationary_target_is_pure_pursuit() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.0, 250.0);
        let pos = Vec3::new(30_000.0 * 0.3f64.cos(), 30_000.0 * 0.3f64.sin(), 8000.0);
        let t = track_at(1, pos, Vec3::ZERO);
        let out = commit_command(&a, Some(&t), Vec3::ZERO, &p(), &sim);
        assert_relative_eq!(out.command.desired_heading, 0.3, epsilon = 1e-12);
        assert_eq!(out.command.desired_speed, sim.v_max);
        assert_eq!(out.command.desired_altitude, 8000.0);
        assert!(out.provenance.fallbacks.is_empty());
    }

    #[test]
    fn commit_leads_a_crossing_target() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.0, 250.0);
        // target 30 km north crossing west-to-east at 300 m/s
        let t = track_at(1, Vec3::new(30_000.0, 0.0, 9000.0), Vec3::new(0.0, 300.0, 0.0));
        let out = commit_command(&a, Some(&t), Vec3::ZERO, &p(), &sim);
        // hand lead point: t0 = 30000/450, p1.y = 300 t0, t1 = |p1|/450, aim.y = 300 t1
        let t0 = 30_000.0 / 450.0;
        let y1: f64 = 300.0 * t0;
        let t1 = (30_000.0f64.powi(2) + y1 * y1).sqrt() / 450.0;
        let expected = (300.0 * t1).atan2(30_000.0);
        assert_relative_eq!(out.command.desired_heading, expected, epsilon = 1e-12);
        // lead lies on the side the target is moving toward
        assert!(out.command.desired_heading > 0.0);
    }

    #[test]
    fn commit_with_stale_track_falls_back_to_cap() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.0, 250.0);
        let mut t = track_at(1, Vec3::new(30_000.0, 0.0, 9000.0), Vec3::ZERO);
        t.age = sim.track_timeout + 0.1;
        let station = Vec3::new(-50_000.0, 0.0, 9000.0);
        let out = commit_command(&a, Some(&t), station, &p(), &sim);
        assert_eq!(out.command, cap_command(&a, station, &p(), &sim));
        assert_eq!(out.provenance.effective, TacticAction::Cap);
        assert_eq!(out.provenance.to_string(), "COMMIT>fallback>CAP");
    }

    #[test]
    fn abort_turns_tail_to_threat() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.0, 250.0);
        let cmd = abort_command(&a, Vec3::new(20_000.0, 0.0, 9000.0), &p(), &sim);
        assert_relative_eq!(cmd.desired_heading.abs(), PI, epsilon = 1e-12);
        assert_eq!(cmd.desired_altitude, 7000.0);

        let threat = Vec3::new(20_000.0 * 0.25f64.cos(), 20_000.0 * 0.25f64.sin(), 9000.0);
        let cmd = abort_command(&a, threat, &p(), &sim);
        assert_relative_eq!(cmd.desired_heading, wrap_pi(0.25 - PI), epsilon = 1e-12);

        let low = aircraft(0, Vec3::new(0.0, 0.0, sim.alt_min), 0.0, 250.0);
        let cmd = abort_command(&low, threat, &p(), &sim);
        assert_eq!(cmd.desired_altitude, sim.alt_min);
    }

    #[test]
    fn break_picks_smaller_turn_and_ties_right() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.4, 250.0);
        let cmd = break_command(&a, 0.4, &p(), &sim);
        assert_relative_eq!(cmd.desired_heading, 0.4 + FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(cmd.max_g, 9.0);
        assert_eq!(cmd.desired_altitude, 6000.0);

        let cmd = break_command(&a, 0.6, &p(), &sim);
        assert_relative_eq!(cmd.desired_heading, 0.6 - FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn fire_gates() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.0, 250.0);
        let ang = 5f64.to_radians();
        let near = track_at(
            1,
            Vec3::new(30_000.0 * ang.cos(), 30_000.0 * ang.sin(), 9000.0),
            Vec3::ZERO,
        );
        let cmd = fire_decision(&a, Some(&near), &p(), &sim).unwrap();
        assert!(cmd.fire);
        assert_eq!(cmd.fire_target, Some(EntityId(1)));

        let mut empty = a.clone();
        empty.missiles = 0;
        assert_eq!(
            fire_decision(&empty, Some(&near), &p(), &sim),
            Err(FireRejection::NoWeapons)
        );
        assert_eq!(fire_decision(&a, None, &p(), &sim), Err(FireRejection::NoTrack));
        let far = track_at(1, Vec3::new(70_000.0, 0.0, 9000.0), Vec3::ZERO);
        assert_eq!(
            fire_decision(&a, Some(&far), &p(), &sim),
            Err(FireRejection::OutOfRange)
        );
        let ang = 80f64.to_radians();
        let side = track_at(
            1,
            Vec3::new(30_000.0 * ang.cos(), 30_000.0 * ang.sin(), 9000.0),
            Vec3::ZERO,
        );
        assert_eq!(
            fire_decision(&a, Some(&side), &p(), &sim),
            Err(FireRejection::OffBoresight)
        );
    }

    #[test]
    fn support_offsets_toward_current_side() {
        let sim = SimConfig::default();
        let a = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), 0.0, 250.0);
        let t = track_at(1, Vec3::new(30_000.0, 0.0, 9000.0), Vec3::ZERO);
        let cmd = support_command(&a, &t, &p(), &sim);
        assert_relative_eq!(cmd.desired_heading, 50f64.to_radians(), epsilon = 1e-12);
        assert!(cmd.support);
        assert_relative_eq!(cmd.desired_speed, 0.6 * sim.v_max);

        let left = aircraft(0, Vec3::new(0.0, 0.0, 9000.0), -0.1, 250.0);
        let cmd = support_command(&left, &t, &p(), &sim);
        assert_relative_eq!(cmd.desired_heading, -(50f64.to_radians()), epsilon = 1e-12);
    }

    #[test]
    fn fire_without_track_walks_the_whole_chain() {
        let sim = SimConfig::default();
        let mut world = duel_world(&sim, 30_000.0);
        world.sensors[0].tracks.clear();
        let out = execute_tactic(TacticAction::Fire, &world, EntityId(0), &p(), &sim).unwrap();
        assert!(!out.command.fire);
        assert_eq!(out.provenance.effective, TacticAction::Cap);
        assert_eq!(out.provenance.fire_rejection(), Some(FireRejection::NoTrack));
        assert_eq!(
            out.provenance.to_string(),
            "FIRE>fire_rejected(NoTrack)>COMMIT>fallback>CAP"
        );
        let station = world.station(EntityId(0)).unwrap();
        assert_eq!(out.command, cap_command(&world.aircraft[0], station, &p(), &sim));
    }

    #[test]
    fn targeted_tactics_use_nearest_track() {
        let sim = SimConfig::default();
        let mut world = duel_world(&sim, 50_000.0);
        world.sensors[0].tracks = vec![
            track_at(1, Vec3::new(50_000.0, 0.0, 9000.0), Vec3::ZERO),
            track_at(2, Vec3::new(30_000.0 * 0.2f64.cos(), 30_000.0 * 0.2f64.sin(), 9000.0), Vec3::ZERO),
        ];
        let out = execute_tactic(TacticAction::Commit, &world, EntityId(0), &p(), &sim).unwrap();
        assert_relative_eq!(out.command.desired_heading, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn break_without_warning_downgrades_to_abort() {
        let sim = SimConfig::default();
        let world = duel_world(&sim, 30_000.0);
        let out = execute_tactic(TacticAction::Break, &world, EntityId(0), &p(), &sim).unwrap();
        assert_eq!(out.provenance.effective, TacticAction::Abort);
        assert_eq!(out.provenance.to_string(), "BREAK>downgrade>ABORT");
        assert_relative_eq!(out.command.desired_heading.abs(), PI, epsilon = 1e-12);
    }

    #[test]
    fn support_fallbacks() {
        let sim = SimConfig::default();
        let mut world = duel_world(&sim, 30_000.0);
        let out = execute_tactic(TacticAction::Support, &world, EntityId(0), &p(), &sim).unwrap();
        assert_eq!(out.provenance.to_string(), "SUPPORT>no_missile>COMMIT");

        let mut m = missile_at(&world, 1000.0, true);
        m.seeker_active = true;
        world.missiles.push(m);
        let out = execute_tactic(TacticAction::Support, &world, EntityId(0), &p(), &sim).unwrap();
        assert_eq!(out.provenance.effective, TacticAction::Cap);

        world.missiles[0].seeker_active = false;
        let out = execute_tactic(TacticAction::Support, &world, EntityId(0), &p(), &sim).unwrap();
        assert_eq!(out.provenance.effective, TacticAction::Support);
        assert!(out.command.support);
    }

    #[test]
    fn dead_actor_is_an_error() {
        let sim = SimConfig::default();
        let mut world = duel_world(&sim, 30_000.0);
        world.aircraft[0].alive = false;
        assert!(matches!(
            execute_tactic(TacticAction::Cap, &world, EntityId(0), &p(), &sim),
            Err(BvrError::DeadActor(_))
        ));
    }
}
