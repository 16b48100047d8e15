//! Run configuration: one TOML document with a section per subsystem.
//!
//! Every field has a default, so an empty file is a valid config. Unknown
//! keys are rejected to catch typos early.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BvrError, Result};

/// Physics, sensor, weapon and episode-shape parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_physics: f64,
    pub physics_steps_per_decision: u32,
    pub g: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub n_max: f64,
    pub a_max: f64,
    pub climb_max: f64,
    /// Proportional gain of the altitude hold, 1/s.
    pub altitude_gain: f64,
    pub alt_min: f64,
    pub alt_max: f64,
    pub fuel_initial: f64,
    pub fuel_burn_base: f64,
    pub fuel_burn_per_speed: f64,
    pub radar_range: f64,
    pub gimbal_limit_deg: f64,
    pub rwr_range: f64,
    pub track_timeout: f64,
    pub missile_boost_speed: f64,
    pub missile_decay: f64,
    pub missile_floor_speed: f64,
    pub pn_gain: f64,
    pub missile_g_max: f64,
    pub pitbull_range: f64,
    pub kill_radius: f64,
    pub missile_max_tof: f64,
    pub initial_missiles: u32,
    pub t_max: f64,
    pub arena_half_extent: f64,
    /// Distance of each side's CAP station from the arena center.
    pub station_offset: f64,
    pub station_altitude: f64,
    pub spawn_range_min: f64,
    pub spawn_range_max: f64,
    pub spawn_bearing_max_deg: f64,
    pub spawn_alt_min: f64,
    pub spawn_alt_max: f64,
    pub spawn_speed: f64,
    pub agent_spawn_jitter: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_physics: 0.1,
            physics_steps_per_decision: 10,
            g: 9.80665,
            v_min: 100.0,
            v_max: 450.0,
            n_max: 9.0,
            a_max: 10.0,
            climb_max: 100.0,
            altitude_gain: 0.5,
            alt_min: 1000.0,
            alt_max: 15000.0,
            fuel_initial: 3000.0,
            fuel_burn_base: 1.0,
            fuel_burn_per_speed: 0.002,
            radar_range: 80_000.0,
            gimbal_limit_deg: 60.0,
            rwr_range: 20_000.0,
            track_timeout: 5.0,
            missile_boost_speed: 1000.0,
            missile_decay: 20.0,
            missile_floor_speed: 500.0,
            pn_gain: 4.0,
            missile_g_max: 30.0,
            pitbull_range: 15_000.0,
            kill_radius: 100.0,
            missile_max_tof: 100.0,
            initial_missiles: 4,
            t_max: 900.0,
            arena_half_extent: 50_000.0,
            station_offset: 40_000.0,
            station_altitude: 9_000.0,
            spawn_range_min: 70_000.0,
            spawn_range_max: 90_000.0,
            spawn_bearing_max_deg: 30.0,
            spawn_alt_min: 8_000.0,
            spawn_alt_max: 10_000.0,
            spawn_speed: 250.0,
            agent_spawn_jitter: 2_000.0,
        }
    }
}

impl SimConfig {
    pub fn gimbal_limit(&self) -> f64 {
        self.gimbal_limit_deg.to_radians()
    }

    pub fn decision_period(&self) -> f64 {
        self.dt_physics * self.physics_steps_per_decision as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_physics", self.dt_physics),
            ("g", self.g),
            ("v_min", self.v_min),
            ("n_max", self.n_max),
            ("a_max", self.a_max),
            ("climb_max", self.climb_max),
            ("altitude_gain", self.altitude_gain),
            ("radar_range", self.radar_range),
            ("gimbal_limit_deg", self.gimbal_limit_deg),
            ("track_timeout", self.track_timeout),
            ("missile_boost_speed", self.missile_boost_speed),
            ("missile_floor_speed", self.missile_floor_speed),
            ("missile_g_max", self.missile_g_max),
            ("kill_radius", self.kill_radius),
            ("missile_max_tof", self.missile_max_tof),
            ("t_max", self.t_max),
            ("arena_half_extent", self.arena_half_extent),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(BvrError::InvalidConfig(format!("sim.{name} must be > 0")));
            }
        }
        if self.physics_steps_per_decision == 0 {
            return Err(BvrError::InvalidConfig(
                "sim.physics_steps_per_decision must be >= 1".into(),
            ));
        }
        if self.v_min >= self.v_max {
            return Err(BvrError::InvalidConfig("sim.v_min must be < v_max".into()));
        }
        if self.alt_min >= self.alt_max {
            return Err(BvrError::InvalidConfig("sim.alt_min must be < alt_max".into()));
        }
        if self.fuel_initial <= 0.0 || self.fuel_burn_base < 0.0 || self.fuel_burn_per_speed < 0.0 {
            return Err(BvrError::InvalidConfig("sim fuel parameters out of range".into()));
        }
        if self.spawn_range_min > self.spawn_range_max
            || self.spawn_alt_min > self.spawn_alt_max
            || self.spawn_alt_min < self.alt_min
            || self.spawn_alt_max > self.alt_max
        {
            return Err(BvrError::InvalidConfig("sim spawn window inconsistent".into()));
        }
        if self.spawn_speed < self.v_min || self.spawn_speed > self.v_max {
            return Err(BvrError::InvalidConfig(
                "sim.spawn_speed outside [v_min, v_max]".into(),
            ));
        }
        Ok(())
    }
}

/// Geometry of the six tactic controllers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TacticParams {
    pub cap_radius: f64,
    pub cap_speed: f64,
    /// Radial error gain of the CAP orbit, rad per unit of (distance - radius) / radius.
    pub cap_radial_gain: f64,
    pub abort_descent: f64,
    pub break_descent: f64,
    pub break_g: f64,
    /// Load factor used by every non-break maneuver.
    pub maneuver_g: f64,
    pub support_offset_max_deg: f64,
    pub support_speed_frac: f64,
    pub fire_max_range: f64,
}

impl Default for TacticParams {
    fn default() -> Self {
        Self {
            cap_radius: 10_000.0,
            cap_speed: 200.0,
            cap_radial_gain: 4.0,
            abort_descent: 2_000.0,
            break_descent: 3_000.0,
            break_g: 9.0,
            maneuver_g: 5.0,
            support_offset_max_deg: 50.0,
            support_speed_frac: 0.6,
            fire_max_range: 40_000.0,
        }
    }
}

impl TacticParams {
    pub fn support_offset_max(&self) -> f64 {
        self.support_offset_max_deg.to_radians()
    }

    pub fn validate(&self, sim: &SimConfig) -> Result<()> {
        let positive = [
            self.cap_radius,
            self.cap_speed,
            self.cap_radial_gain,
            self.abort_descent,
            self.break_descent,
            self.break_g,
            self.maneuver_g,
            self.support_offset_max_deg,
            self.support_speed_frac,
            self.fire_max_range,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(BvrError::InvalidConfig("tactics parameters must be > 0".into()));
        }
        if self.support_offset_max_deg > sim.gimbal_limit_deg {
            return Err(BvrError::InvalidConfig(
                "tactics.support_offset_max_deg exceeds the radar gimbal limit".into(),
            ));
        }
        Ok(())
    }
}

/// Weights of the DCA-index potential and the terminal bonuses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_surv: f64,
    pub w_cap: f64,
    pub w_wpn: f64,
    pub w_fuel: f64,
    pub w_threat: f64,
    pub station_sigma: f64,
    pub defended_radius: f64,
    pub terminal_win: f64,
    pub terminal_loss: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_surv: 0.3,
            w_cap: 0.3,
            w_wpn: 0.15,
            w_fuel: 0.1,
            w_threat: 0.15,
            station_sigma: 10_000.0,
            defended_radius: 30_000.0,
            terminal_win: 1.0,
            terminal_loss: -1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_surv, self.w_cap, self.w_wpn, self.w_fuel, self.w_threat];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(BvrError::InvalidConfig("reward weights must be >= 0".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(BvrError::InvalidConfig(format!(
                "reward weights must sum to 1 (got {sum})"
            )));
        }
        if !(self.station_sigma > 0.0 && self.defended_radius >= 0.0) {
            return Err(BvrError::InvalidConfig("reward geometry out of range".into()));
        }
        if self.terminal_win.abs() > 1.0 || self.terminal_loss.abs() > 1.0 {
            return Err(BvrError::InvalidConfig(
                "terminal rewards must lie in [-1, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Learner hyperparameters and Rainbow component switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainbowConfig {
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learn_every: u64,
    pub warmup_steps: u64,
    pub target_sync: u64,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eps_prio: f64,
    pub hidden: Vec<usize>,
    pub noisy_sigma0: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    pub double_q: bool,
    pub dueling: bool,
    pub noisy: bool,
    pub distributional: bool,
    pub prioritized: bool,
    /// Exploration rate used only when `noisy` is off.
    pub epsilon: f64,
    /// Decisions an acting noise draw is kept for; 0 keeps it for the whole episode.
    pub noise_hold: u64,
}

impl Default for RainbowConfig {
    fn default() -> Self {
        Self {
            atoms: 51,
            v_min: -3.0,
            v_max: 3.0,
            gamma: 0.99,
            n_step: 3,
            buffer_capacity: 100_000,
            batch_size: 32,
            learn_every: 4,
            warmup_steps: 2_000,
            target_sync: 2_000,
            alpha: 0.5,
            beta_start: 0.4,
            beta_end: 1.0,
            eps_prio: 1e-3,
            hidden: vec![256, 256],
            noisy_sigma0: 0.5,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1.5e-4,
            grad_clip_norm: 10.0,
            double_q: true,
            dueling: true,
            noisy: true,
            distributional: true,
            prioritized: true,
            epsilon: 0.05,
            noise_hold: 1,
        }
    }
}

impl RainbowConfig {
    /// Plain DQN: every Rainbow component switched off.
    pub fn plain_dqn() -> Self {
        Self {
            n_step: 1,
            double_q: false,
            dueling: false,
            noisy: false,
            distributional: false,
            prioritized: false,
            ..Self::default()
        }
    }

    /// Atom count actually used by the network (1 when distributional is off).
    pub fn effective_atoms(&self) -> usize {
        if self.distributional {
            self.atoms
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.distributional && self.atoms < 2 {
            return Err(BvrError::InvalidConfig("rainbow.atoms must be >= 2".into()));
        }
        if !(self.v_min < self.v_max) {
            return Err(BvrError::InvalidConfig("rainbow.v_min must be < v_max".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(BvrError::InvalidConfig("rainbow.gamma must lie in [0, 1]".into()));
        }
        if self.n_step == 0 || self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(BvrError::InvalidConfig(
                "rainbow n_step/batch_size/buffer_capacity inconsistent".into(),
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(BvrError::InvalidConfig("rainbow.hidden must be non-empty and > 0".into()));
        }
        if self.dueling && self.hidden.last() == Some(&self.effective_atoms()) {
            return Err(BvrError::InvalidConfig(
                "rainbow: last hidden width must differ from the atom count with dueling heads"
                    .into(),
            ));
        }
        if self.learn_every == 0 || self.target_sync == 0 {
            return Err(BvrError::InvalidConfig(
                "rainbow.learn_every and target_sync must be >= 1".into(),
            ));
        }
        if self.alpha < 0.0 || self.eps_prio <= 0.0 || self.beta_start < 0.0 || self.beta_end < 0.0 {
            return Err(BvrError::InvalidConfig("rainbow replay exponents out of range".into()));
        }
        if !(self.learning_rate > 0.0) || self.noisy_sigma0 < 0.0 {
            return Err(BvrError::InvalidConfig("rainbow optimizer parameters out of range".into()));
        }
        Ok(())
    }
}

/// Self-play schedule and bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub total_steps: u64,
    pub snapshot_period: u64,
    pub eval_period: u64,
    pub eval_matches: usize,
    pub eval_seed: u64,
    pub mix_latest: f64,
    pub mix_pool: f64,
    pub mix_baseline: f64,
    /// Scripted baselines registered in the pool. Names: straight-flier, pure-cap, aggressive-commit.
    pub baselines: Vec<String>,
    pub seed: u64,
    /// 0 runs acting inline on the learner thread (fully deterministic).
    pub workers: usize,
    pub queue_capacity: usize,
    pub pool_cap: usize,
    pub k_factor: f64,
    pub initial_rating: f64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            total_steps: 1_000_000,
            snapshot_period: 10_000,
            eval_period: 10_000,
            eval_matches: 20,
            eval_seed: 1_000_000,
            mix_latest: 0.5,
            mix_pool: 0.3,
            mix_baseline: 0.2,
            baselines: vec![
                "straight-flier".into(),
                "pure-cap".into(),
                "aggressive-commit".into(),
            ],
            seed: 0,
            workers: 4,
            queue_capacity: 1024,
            pool_cap: 20,
            k_factor: 32.0,
            initial_rating: 1000.0,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        let mix = [self.mix_latest, self.mix_pool, self.mix_baseline];
        if mix.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(BvrError::InvalidConfig("train mix fractions must be >= 0".into()));
        }
        if (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(BvrError::InvalidConfig("train mix fractions must sum to 1".into()));
        }
        if self.baselines.is_empty() {
            return Err(BvrError::InvalidConfig("train.baselines must not be empty".into()));
        }
        if self.snapshot_period == 0 || self.eval_period == 0 || self.queue_capacity == 0 {
            return Err(BvrError::InvalidConfig(
                "train periods and queue capacity must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Live match server settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    pub tick_hz: f64,
    /// Time compression: 1, 2 or 4.
    pub compression: u32,
    pub client_timeout_s: f64,
    pub checkpoint_dir: String,
    pub static_dir: Option<String>,
    pub out_dir: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8765,
            tick_hz: 1.0,
            compression: 1,
            client_timeout_s: 60.0,
            checkpoint_dir: "checkpoints".into(),
            static_dir: None,
            out_dir: "sessions".into(),
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(BvrError::InvalidConfig("service.tick_hz must be > 0".into()));
        }
        if ![1, 2, 4].contains(&self.compression) {
            return Err(BvrError::InvalidConfig("service.compression must be 1, 2 or 4".into()));
        }
        if !(self.client_timeout_s > 0.0) {
            return Err(BvrError::InvalidConfig("service.client_timeout_s must be > 0".into()));
        }
        Ok(())
    }

    /// Real-time period between decision ticks.
    pub fn tick_interval(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(1.0 / (self.tick_hz * self.compression as f64))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub tactics: TacticParams,
    pub reward: RewardConfig,
    pub rainbow: RainbowConfig,
    pub train: TrainRunConfig,
    pub service: ServiceConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_column(text, span.start))
                .unwrap_or((1, 1));
            BvrError::ConfigParse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BvrError::path_io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.tactics.validate(&self.sim)?;
        self.reward.validate()?;
        self.rainbow.validate()?;
        self.train.validate()?;
        self.service.validate()
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
