use crate::config::{RewardConfig, SimConfig};
use crate::simcore::{check_termination, EntityId, Outcome, WorldState};

/// Surrogate DCA index Φ ∈ [0, 1]: survive, hold station, keep stores and
/// keep opponents out of the defended area.
pub fn dca_index(world: &WorldState, agent_id: EntityId, cfg: &RewardConfig, sim: &SimConfig) -> f64 {
    let Some(agent) = world.aircraft(agent_id) else {
        return 0.0;
    };
    let station = world.station(agent_id).unwrap_or(agent.position);
    let alive = if agent.alive { 1.0 } else { 0.0 };
    let two_sigma_sq = 2.0 * cfg.station_sigma * cfg.station_sigma;

    let d_station = agent.position.distance(station);
    let on_station = (-(d_station * d_station) / two_sigma_sq).exp();
    let missiles_frac = if sim.initial_missiles == 0 {
        0.0
    } else {
        (agent.missiles as f64 / sim.initial_missiles as f64).clamp(0.0, 1.0)
    };
    let fuel_frac = (agent.fuel / sim.fuel_initial).clamp(0.0, 1.0);

    let threat = world
        .opponents_of(agent_id)
        .filter(|o| o.alive)
        .map(|o| {
            let d = o.position.distance(station);
            if d <= cfg.defended_radius {
                1.0
            } else {
                let excess = d - cfg.defended_radius;
                (-(excess * excess) / two_sigma_sq).exp()
            }
        })
        .fold(0.0, f64::max);

    let phi = cfg.w_surv * alive
        + cfg.w_cap * on_station * alive
        + cfg.w_wpn * missiles_frac
        + cfg.w_fuel * fuel_frac
        + cfg.w_threat * (1.0 - threat);
    phi.clamp(0.0, 1.0)
}

/// Terminal bonus for `outcome`.
pub fn terminal_reward(outcome: Outcome, cfg: &RewardConfig) -> f64 {
    match outcome {
        Outcome::AgentWin => cfg.terminal_win,
        Outcome::AgentLoss => cfg.terminal_loss,
        Outcome::Draw | Outcome::Ongoing => 0.0,
    }
}

/// Potential-based shaping Φ(next) − Φ(prev) plus the terminal bonus.
pub fn compute_reward(
    prev: &WorldState,
    next: &WorldState,
    agent_id: EntityId,
    cfg: &RewardConfig,
    sim: &SimConfig,
) -> f64 {
    let shaping = dca_index(next, agent_id, cfg, sim) - dca_index(prev, agent_id, cfg, sim);
    shaping + terminal_reward(check_termination(next, agent_id, sim), cfg)
}
