//! Independent oracles and fixtures shared by the integration and acceptance
//! tests.
#![allow(dead_code)]

use bvr_core::config::RainbowConfig;
use bvr_core::harness::{run_episode, PolicySpec, BASELINES};
use bvr_core::mdp::{dca_index, terminal_reward, BvrEnv, EnvSettings, PolicyAction, OBS_DIM};
use bvr_core::rainbow::{
    loss_and_gradients, NetworkNoise, NetworkParams, PrioritizedReplay, ReplayEntry, Support, Targets,
};
use bvr_core::rainbow::NoiseMode;
use bvr_core::simcore::EntityId;
use bvr_core::tactics::TacticAction;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Triangular-kernel form of the categorical projection: every target atom
/// z_j collects p_i·max(0, 1 − |T̂z_i − z_j|/Δz) from each shifted atom.
pub fn brute_force_projection(
    atoms: &[f64],
    probs: &[f64],
    r: f64,
    gamma: f64,
    done: bool,
) -> Vec<f64> {
    let v_min = atoms[0];
    let v_max = *atoms.last().unwrap();
    let dz = if atoms.len() > 1 { atoms[1] - atoms[0] } else { 1.0 };
    let mut out = vec![0.0; atoms.len()];
    for (zi, pi) in atoms.iter().zip(probs) {
        let tz = if done { r } else { r + gamma * zi };
        let tz = tz.max(v_min).min(v_max);
        for (j, zj) in atoms.iter().enumerate() {
            let w = 1.0 - (tz - zj).abs() / dz;
            if w > 0.0 {
                out[j] += pi * w;
            }
        }
    }
    out
}

pub struct ProjectionCase {
    pub support: Support,
    pub probs: Vec<f64>,
    pub r: f64,
    pub gamma: f64,
    pub done: bool,
}

pub fn random_projection_case(rng: &mut ChaCha8Rng, k: usize) -> ProjectionCase {
    let v_max = rng.random_range(0.5..20.0);
    let v_min = -rng.random_range(0.5..20.0);
    let support = Support::new(k, v_min, v_max);
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(2)).collect();
    let sum: f64 = raw.iter().sum::<f64>().max(1e-12);
    let probs = raw.iter().map(|p| p / sum).collect();
    // Rewards sometimes land exactly on an atom or far outside the support.
    let r = match rng.random_range(0..4) {
        0 => support.atoms()[rng.random_range(0..k)],
        1 => rng.random_range(3.0 * v_min..3.0 * v_max),
        _ => rng.random_range(v_min..v_max),
    };
    let gamma = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.0..1.0) };
    ProjectionCase {
        support,
        probs,
        r,
        gamma,
        done: rng.random_bool(0.2),
    }
}

pub fn projection_error(case: &ProjectionCase) -> f64 {
    let mut got = vec![0.0; case.support.len()];
    case.support
        .project_into(&case.probs, case.r, case.gamma, case.done, &mut got);
    let want = brute_force_projection(case.support.atoms(), &case.probs, case.r, case.gamma, case.done);
    got.iter()
        .zip(&want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub struct GradCheck {
    pub params: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Central-difference check of `loss_and_gradients` on a noisy dueling net in
/// f64 with the noise draw held fixed. Relative error is |a − n| divided by
/// max(|a|, |n|, `floor`).
pub fn finite_difference_check(hidden: Vec<usize>, atoms: usize, batch: usize, h: f64, floor: f64, seed: u64) -> GradCheck {
    let cfg = RainbowConfig {
        hidden,
        atoms,
        v_min: -2.0,
        v_max: 2.0,
        noisy: true,
        dueling: true,
        distributional: true,
        ..RainbowConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = NetworkParams::<f64>::for_env(&cfg, &mut rng);
    let noise = NetworkNoise::sample(&params, &mut rng);
    let obs = Array2::from_shape_fn((batch, OBS_DIM), |_| rng.random_range(-1.0..1.0));
    let actions: Vec<usize> = (0..batch).map(|_| rng.random_range(0..TacticAction::COUNT)).collect();
    let weights: Vec<f64> = (0..batch).map(|_| rng.random_range(0.2..1.0)).collect();
    let dists = Array2::from_shape_fn((batch, atoms), |_| rng.random::<f64>());
    let dists = {
        let mut d = dists;
        for mut row in d.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        d
    };
    let targets = Targets {
        dists,
        scalar: vec![0.0; batch],
    };
    let loss_at = |p: &NetworkParams<f64>| loss_and_gradients(p, &noise, &obs, &actions, &weights, &targets).unwrap().0;
    let (_, grads, _) = loss_and_gradients(&params, &noise, &obs, &actions, &weights, &targets).unwrap();
    let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();

    let mut work = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut idx = 0;
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (t, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let orig = work.tensors_mut()[t][i];
            work.tensors_mut()[t][i] = orig + h;
            let up = loss_at(&work);
            work.tensors_mut()[t][i] = orig - h;
            let down = loss_at(&work);
            work.tensors_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[idx];
            let abs = (a - numeric).abs();
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(floor));
            idx += 1;
        }
    }
    GradCheck {
        params: idx,
        max_rel_err: max_rel,
        max_abs_err: max_abs,
    }
}

/// Largest absolute gap between empirical leaf frequencies and p_i/Σp over
/// `draws` stratified draws from a 16-leaf replay with random priorities.
pub fn per_frequency_deviation(draws: usize, batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replay = PrioritizedReplay::new(16);
    for i in 0..16u32 {
        replay.push(ReplayEntry {
            transition: i,
            priority: 1.0,
        });
    }
    let prios: Vec<f64> = (0..16).map(|_| rng.random_range(0.01..1.0)).collect();
    let indices: Vec<usize> = (0..16).collect();
    replay.update(&indices, &prios, 1.0, 0.0);
    let total: f64 = prios.iter().sum();
    let mut counts = [0usize; 16];
    let mut n = 0;
    while n < draws {
        let s = replay.sample(batch, 0.5, &mut rng).unwrap();
        for &i in &s.indices {
            counts[i] += 1;
        }
        n += batch;
    }
    counts
        .iter()
        .zip(&prios)
        .map(|(&c, p)| (c as f64 / n as f64 - p / total).abs())
        .fold(0.0, f64::max)
}

/// Largest |root − Σ leaves| seen over `ops` random interleaved pushes and
/// priority updates.
pub fn sum_tree_drift(ops: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replay = PrioritizedReplay::new(1024);
    let mut worst: f64 = 0.0;
    for op in 0..ops {
        if replay.is_empty() || rng.random_bool(0.5) {
            replay.push(ReplayEntry {
                transition: op,
                priority: rng.random_range(1e-3..10.0),
            });
        } else {
            let k = rng.random_range(1..=replay.len().min(8));
            let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..replay.len())).collect();
            let td: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            replay.update(&idx, &td, 0.6, 1e-3);
        }
        let tree = replay.tree();
        let leaf_sum: f64 = tree.leaves().iter().sum();
        worst = worst.max((tree.total() - leaf_sum).abs());
    }
    worst
}

/// Per-step invariant violations found while flying random actions.
#[derive(Default, Debug)]
pub struct FuzzReport {
    pub steps: usize,
    pub episodes: usize,
    pub violations: Vec<String>,
    pub max_telescope_err: f64,
}

impl FuzzReport {
    fn fail(&mut self, msg: String) {
        if self.violations.len() < 20 {
            self.violations.push(msg);
        }
    }
}

fn random_action(rng: &mut ChaCha8Rng) -> PolicyAction {
    if rng.random_bool(0.05) {
        PolicyAction::Hold
    } else {
        PolicyAction::Tactic(TacticAction::from_index(rng.random_range(0..TacticAction::COUNT)).unwrap())
    }
}

/// Flies random joint actions for `steps` decisions across as many episodes
/// as it takes, checking physics and MDP invariants after each decision.
/// Actions are held for a random number of ticks so engagements develop.
pub fn fuzz_invariants(steps: usize, seed: u64, settings: &EnvSettings) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = &settings.sim;
    let eps = 1e-9;
    let mut rep = FuzzReport::default();
    while rep.steps < steps {
        let agent = if rng.random_bool(0.5) { EntityId(0) } else { EntityId(1) };
        let mut env = BvrEnv::new(settings.clone(), rng.random(), agent);
        rep.episodes += 1;
        let phi0 = dca_index(env.world(), agent, &settings.reward, sim);
        let mut sum_reward = 0.0;
        let mut hold = 0;
        let (mut a, mut b) = (random_action(&mut rng), random_action(&mut rng));
        let mut prev = env.world().clone();
        while !env.is_done() && rep.steps < steps {
            if hold == 0 {
                a = random_action(&mut rng);
                b = random_action(&mut rng);
                hold = rng.random_range(1..15);
            }
            hold -= 1;
            let step = env.step_joint(a, b).unwrap();
            rep.steps += 1;
            sum_reward += step.reward;
            let w = env.world();
            for (before, after) in prev.aircraft.iter().zip(&w.aircraft) {
                if after.fuel > before.fuel + eps {
                    rep.fail(format!("fuel rose {} -> {} at t={}", before.fuel, after.fuel, w.sim_time));
                }
                if after.fuel < -eps {
                    rep.fail(format!("negative fuel {}", after.fuel));
                }
                if after.missiles > before.missiles {
                    rep.fail("missile count rose".into());
                }
                if after.alive && !before.alive {
                    rep.fail("aircraft came back to life".into());
                }
                if after.alive {
                    if after.speed < sim.v_min - eps || after.speed > sim.v_max + eps {
                        rep.fail(format!("speed {} outside envelope", after.speed));
                    }
                    if after.altitude() < sim.alt_min - eps || after.altitude() > sim.alt_max + eps {
                        rep.fail(format!("altitude {} outside envelope", after.altitude()));
                    }
                }
            }
            for side in [EntityId(0), EntityId(1)] {
                if !env.observation_for(side).is_valid() {
                    rep.fail(format!("observation out of range: {:?}", env.observation_for(side)));
                }
                let phi = dca_index(w, side, &settings.reward, sim);
                if !(0.0..=1.0).contains(&phi) {
                    rep.fail(format!("dca index {phi}"));
                }
            }
            if !step.observation.is_valid() {
                rep.fail("step observation out of range".into());
            }
            prev = w.clone();
        }
        if env.is_done() {
            let phi_t = dca_index(env.world(), agent, &settings.reward, sim);
            let shaping = sum_reward - terminal_reward(env.outcome(), &settings.reward);
            let err = (shaping - (phi_t - phi0)).abs();
            rep.max_telescope_err = rep.max_telescope_err.max(err);
        }
    }
    rep
}

/// Every ordered pair of scripted baselines.
pub fn scripted_pairs() -> Vec<(PolicySpec, PolicySpec)> {
    let specs: Vec<PolicySpec> = BASELINES.iter().map(|b| PolicySpec::baseline(b).unwrap()).collect();
    let mut out = Vec::new();
    for a in &specs {
        for b in &specs {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}

/// Runs a scripted episode and returns its encoded log.
pub fn scripted_log(blue: &PolicySpec, red: &PolicySpec, seed: u64, settings: &EnvSettings) -> String {
    let mut b = blue.build(NoiseMode::Zero, seed);
    let mut r = red.build(NoiseMode::Zero, seed);
    let run = run_episode(b.as_mut(), r.as_mut(), seed, settings).unwrap();
    bvr_core::episode::encode_log(&run.records)
}
