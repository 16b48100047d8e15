use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use crossbeam_channel::{bounded, Receiver, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, run_episode, EvalTable};
use super::manifest::RunManifest;
use super::policies::{baseline, CheckpointPolicy, PolicySpec};
use super::pool::{sample_opponent, update_rating, MemberKind, OpponentChoice, OpponentMix, OpponentPool, LEARNER_ID};
use crate::config::RunConfig;
use crate::episode::write_log;
use crate::error::{BvrError, Result};
use crate::mdp::{BvrEnv, EnvSettings, Policy, PolicyAction, Transition, BLUE, RED};
use crate::rainbow::{
    action_values, action_values_with, argmax, learner_step, load_checkpoint, save_checkpoint, sync_target, Adam,
    NStepBuffer, NStepTransition, NetworkNoise, NetworkParams, NoiseMode, PrioritizedReplay, ReplayEntry, TrainBatch,
};
use crate::simcore::Outcome;
use crate::tactics::TacticAction;

pub const METRICS_FILE: &str = "metrics.csv";
pub const STATE_FILE: &str = "train_state.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
const PUBLISH_EVERY: u64 = 100;

/// Bookkeeping persisted at every snapshot so a run can be resumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub env_steps: u64,
    pub episodes: u64,
    pub learner_steps: u64,
    pub checkpoint: PathBuf,
    pub pool: OpponentPool,
    pub snapshots: Vec<(u64, PathBuf)>,
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub env_steps: u64,
    pub episodes: u64,
    pub learner_steps: u64,
    /// (env step, path) for every checkpoint written, oldest first.
    pub snapshots: Vec<(u64, PathBuf)>,
    pub final_checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub last_eval: Option<EvalTable>,
    pub params: NetworkParams<f32>,
    pub pool: OpponentPool,
}

/// One finished training episode as seen by the learner.
#[derive(Clone, Debug)]
struct EpisodeSummary {
    opponent: String,
    outcome: Outcome,
    ret: f64,
    mean_dca: f64,
}

enum WorkerMsg {
    Transition(NStepTransition),
    Episode(EpisodeSummary),
    Failed(BvrError),
}

/// Everything an acting thread needs to pick opponents and actions.
struct SharedView {
    params: Arc<NetworkParams<f32>>,
    pool: OpponentPool,
    snapshot_params: HashMap<String, Arc<NetworkParams<f32>>>,
}

fn episode_seed(run_seed: u64, worker: u64, episode: u64) -> u64 {
    run_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(worker << 40)
        .wrapping_add(episode)
}

fn build_opponent(
    choice: &OpponentChoice,
    view: &SharedView,
    seed: u64,
) -> (String, Box<dyn Policy>) {
    match choice {
        OpponentChoice::LatestSelf => (
            LEARNER_ID.to_string(),
            Box::new(CheckpointPolicy::new("latest-self", Arc::clone(&view.params), NoiseMode::Sampled, seed)),
        ),
        OpponentChoice::Member(i) => {
            let m = &view.pool.members[*i];
            match &m.kind {
                MemberKind::Snapshot { .. } => match view.snapshot_params.get(&m.id) {
                    Some(p) => (
                        m.id.clone(),
                        Box::new(CheckpointPolicy::new(m.id.clone(), Arc::clone(p), NoiseMode::Sampled, seed)),
                    ),
                    None => build_opponent(&OpponentChoice::LatestSelf, view, seed),
                },
                _ => (
                    m.id.clone(),
                    baseline(&m.id).unwrap_or_else(|| Box::new(super::policies::PureCap)),
                ),
            }
        }
    }
}

/// Plays episodes for one acting slot, one decision tick at a time.
struct Actor {
    settings: EnvSettings,
    n_step: usize,
    gamma: f64,
    noisy: bool,
    epsilon: f64,
    noise_hold: u64,
    noise: Option<NetworkNoise<f32>>,
    noise_age: u64,
    run_seed: u64,
    worker: u64,
    local_episode: u64,
    rng: ChaCha8Rng,
    env: Option<BvrEnv>,
    nstep: NStepBuffer,
    opponent: Option<(String, Box<dyn Policy>)>,
    ret: f64,
    dca_sum: f64,
    dca_n: usize,
}

impl Actor {
    fn new(cfg: &RunConfig, worker: u64) -> Self {
        Self {
            settings: EnvSettings::from(cfg),
            n_step: cfg.rainbow.n_step,
            gamma: cfg.rainbow.gamma,
            noisy: cfg.rainbow.noisy,
            epsilon: cfg.rainbow.epsilon,
            noise_hold: cfg.rainbow.noise_hold,
            noise: None,
            noise_age: 0,
            run_seed: cfg.train.seed,
            worker,
            local_episode: 0,
            rng: ChaCha8Rng::seed_from_u64(episode_seed(cfg.train.seed, worker, u64::MAX / 2)),
            env: None,
            nstep: NStepBuffer::new(cfg.rainbow.n_step, cfg.rainbow.gamma),
            opponent: None,
            ret: 0.0,
            dca_sum: 0.0,
            dca_n: 0,
        }
    }

    fn begin(&mut self, view: &SharedView, mix: &OpponentMix) {
        let seed = episode_seed(self.run_seed, self.worker, self.local_episode);
        let side = if self.local_episode.is_multiple_of(2) { BLUE } else { RED };
        self.local_episode += 1;
        let choice = sample_opponent(&view.pool, mix, &mut self.rng);
        let (id, mut policy) = build_opponent(&choice, view, seed ^ 0x5EED);
        policy.reset();
        self.opponent = Some((id, policy));
        self.env = Some(BvrEnv::new(self.settings.clone(), seed, side));
        self.nstep = NStepBuffer::new(self.n_step, self.gamma);
        self.noise = None;
        self.ret = 0.0;
        self.dca_sum = 0.0;
        self.dca_n = 0;
    }

    fn choose(&mut self, params: &NetworkParams<f32>, env: &BvrEnv) -> Result<TacticAction> {
        let obs = env.observation();
        if self.noisy {
            if self.noise.is_none() || (self.noise_hold > 0 && self.noise_age >= self.noise_hold) {
                self.noise = Some(NetworkNoise::sample(params, &mut self.rng));
                self.noise_age = 0;
            }
            self.noise_age += 1;
            let noise = self.noise.as_ref().expect("drawn above");
            let q = action_values_with(params, &obs, noise)?;
            return Ok(TacticAction::from_index(argmax(&q)).expect("six outputs"));
        }
        if self.rng.random::<f64>() < self.epsilon {
            return Ok(TacticAction::from_index(self.rng.random_range(0..TacticAction::COUNT)).expect("in range"));
        }
        let q = action_values(params, &obs, NoiseMode::Zero, &mut self.rng)?;
        Ok(TacticAction::from_index(argmax(&q)).expect("six outputs"))
    }

    fn in_episode(&self) -> bool {
        self.env.is_some()
    }

    /// Advances the current episode by one decision tick.
    fn step(&mut self, params: &NetworkParams<f32>) -> Result<(Vec<NStepTransition>, Option<EpisodeSummary>)> {
        let mut env = self.env.take().expect("episode started");
        let action = self.choose(params, &env)?;
        let s = env.observation();
        let (_, opponent) = self.opponent.as_mut().expect("opponent chosen");
        let step = env.step(PolicyAction::Tactic(action), opponent.as_mut())?;
        self.ret += step.reward;
        let settings = env.settings();
        self.dca_sum += crate::mdp::dca_index(env.world(), env.agent(), &settings.reward, &settings.sim);
        self.dca_n += 1;
        let out = self.nstep.push(Transition {
            s,
            a: action,
            r: step.reward,
            s_next: step.observation,
            done: step.done,
        });
        let summary = if step.done {
            let (id, _) = self.opponent.take().expect("opponent chosen");
            Some(EpisodeSummary {
                opponent: id,
                outcome: step.outcome,
                ret: self.ret,
                mean_dca: self.dca_sum / self.dca_n.max(1) as f64,
            })
        } else {
            self.env = Some(env);
            None
        };
        Ok((out, summary))
    }
}

fn metrics_header(baselines: &[String]) -> String {
    let mut cols = vec!["step".to_string(), "episodes".into(), "mean_return".into()];
    cols.extend(baselines.iter().map(|b| format!("win_vs_{b}")));
    cols.extend(["loss".into(), "mean_dca".into(), "wall_time_s".into()]);
    cols.join(",")
}

/// Drops metric rows past `step` so a resumed run stays monotone.
fn truncate_metrics(path: &Path, step: u64) -> Result<()> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(());
    };
    let kept: Vec<&str> = text
        .lines()
        .enumerate()
        .filter(|(i, l)| {
            *i == 0
                || l.split(',')
                    .next()
                    .and_then(|s| s.parse::<u64>().ok())
                    .is_some_and(|s| s <= step)
        })
        .map(|(_, l)| l)
        .collect();
    let mut out = kept.join("\n");
    out.push('\n');
    fs::write(path, out).map_err(|e| BvrError::path_io(path, e))
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    settings: EnvSettings,
    mix: OpponentMix,
    online: NetworkParams<f32>,
    target: NetworkParams<f32>,
    adam: Adam,
    replay: PrioritizedReplay<NStepTransition>,
    rng: ChaCha8Rng,
    pool: OpponentPool,
    snapshot_params: HashMap<String, Arc<NetworkParams<f32>>>,
    snapshots: Vec<(u64, PathBuf)>,
    env_steps: u64,
    episodes: u64,
    learner_steps: u64,
    started: Instant,
    wall_offset: f64,
    acc_returns: Vec<f64>,
    acc_dca: Vec<f64>,
    acc_loss: Vec<f64>,
    last_eval: Option<EvalTable>,
    last_row_step: Option<u64>,
    manifest: RunManifest,
}

impl<'a> Trainer<'a> {
    fn view(&self) -> SharedView {
        SharedView {
            params: Arc::new(self.online.clone()),
            pool: self.pool.clone(),
            snapshot_params: self.snapshot_params.clone(),
        }
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().into_owned()
    }

    fn snapshot(&mut self) -> Result<()> {
        let rel = PathBuf::from("checkpoints").join(format!("step_{:09}.ckpt", self.env_steps));
        let path = self.out.join(&rel);
        save_checkpoint(&self.online, &path)?;
        if self.snapshots.last().map(|(s, _)| *s) != Some(self.env_steps) {
            self.snapshots.push((self.env_steps, path.clone()));
        }
        if self.env_steps > 0 {
            let id = format!("step_{}", self.env_steps);
            if !self.snapshot_params.contains_key(&id) {
                self.snapshot_params.insert(id.clone(), Arc::new(self.online.clone()));
                if let Some(evicted) = self.pool.add_snapshot(id, path.clone(), self.env_steps) {
                    self.snapshot_params.remove(&evicted.id);
                }
            }
        }
        self.manifest.add_artifact(self.rel(&path));
        self.write_state(&path)
    }

    fn write_state(&mut self, checkpoint: &Path) -> Result<()> {
        let state = TrainState {
            env_steps: self.env_steps,
            episodes: self.episodes,
            learner_steps: self.learner_steps,
            checkpoint: checkpoint.to_path_buf(),
            pool: self.pool.clone(),
            snapshots: self.snapshots.clone(),
        };
        let path = self.out.join(STATE_FILE);
        fs::write(&path, serde_json::to_string_pretty(&state)?).map_err(|e| BvrError::path_io(&path, e))?;
        self.manifest.add_artifact(STATE_FILE);
        self.manifest.write(&self.out)
    }

    fn learn(&mut self) -> Result<()> {
        let rb = &self.cfg.rainbow;
        let total = self.cfg.train.total_steps.max(1) as f64;
        let progress = (self.env_steps as f64 / total).min(1.0);
        let (alpha, beta) = if rb.prioritized {
            (rb.alpha, rb.beta_start + (rb.beta_end - rb.beta_start) * progress)
        } else {
            (0.0, 0.0)
        };
        let sample = self.replay.sample(rb.batch_size, beta, &mut self.rng)?;
        let batch = TrainBatch::from_transitions(&sample.entries, &sample.is_weights);
        let report = learner_step(
            &mut self.online,
            &self.target,
            &mut self.adam,
            &batch,
            rb,
            self.learner_steps,
            &mut self.rng,
        )?;
        self.replay.update(&sample.indices, &report.td_errors, alpha, rb.eps_prio);
        self.learner_steps += 1;
        sync_target(&self.online, &mut self.target, self.learner_steps, rb.target_sync);
        self.acc_loss.push(report.loss);
        Ok(())
    }

    fn absorb(&mut self, t: NStepTransition) -> Result<()> {
        self.replay.push(ReplayEntry {
            transition: t,
            priority: 1.0,
        });
        self.env_steps += 1;
        let rb = &self.cfg.rainbow;
        if self.env_steps >= rb.warmup_steps
            && self.env_steps.is_multiple_of(rb.learn_every.max(1))
            && self.replay.len() >= rb.batch_size
        {
            self.learn()?;
        }
        let tr = &self.cfg.train;
        if tr.snapshot_period > 0 && self.env_steps.is_multiple_of(tr.snapshot_period) {
            self.snapshot()?;
        }
        if tr.eval_period > 0 && self.env_steps.is_multiple_of(tr.eval_period) {
            self.metrics_row()?;
        }
        Ok(())
    }

    fn finish_episode(&mut self, s: EpisodeSummary) -> Result<()> {
        self.episodes += 1;
        self.acc_returns.push(s.ret);
        self.acc_dca.push(s.mean_dca);
        let score = match s.outcome {
            Outcome::AgentWin => 1.0,
            Outcome::AgentLoss => 0.0,
            _ => 0.5,
        };
        if s.opponent != LEARNER_ID && self.pool.get(&s.opponent).is_some() {
            update_rating(&mut self.pool, LEARNER_ID, &s.opponent, score, self.cfg.train.k_factor)?;
        }
        Ok(())
    }

    fn metrics_row(&mut self) -> Result<()> {
        let tr = &self.cfg.train;
        let subject = PolicySpec::checkpoint("learner", self.online.clone());
        let opponents: Vec<PolicySpec> = tr.baselines.iter().filter_map(|b| PolicySpec::baseline(b)).collect();
        let table = evaluate(&subject, &opponents, tr.eval_matches, tr.eval_seed, &self.settings, tr.workers.max(1))?;

        if let Some(first) = opponents.first().filter(|_| tr.eval_matches > 0) {
            let mut s = subject.build(NoiseMode::Zero, tr.eval_seed);
            let mut o = first.build(NoiseMode::Zero, tr.eval_seed);
            let run = run_episode(s.as_mut(), o.as_mut(), tr.eval_seed, &self.settings)?;
            let rel = format!("episodes/eval_step_{:09}.jsonl.gz", self.env_steps);
            write_log(&self.out.join(&rel), &run.records)?;
            self.manifest.add_artifact(rel);
        }

        let mean = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mut cols = vec![
            self.env_steps.to_string(),
            self.episodes.to_string(),
            format!("{:.6}", mean(&self.acc_returns)),
        ];
        for b in &tr.baselines {
            cols.push(format!("{:.4}", table.row(b).map_or(f64::NAN, |r| r.win_rate())));
        }
        cols.push(format!("{:.6}", mean(&self.acc_loss)));
        cols.push(format!("{:.6}", mean(&self.acc_dca)));
        cols.push(format!("{:.3}", self.wall_offset + self.started.elapsed().as_secs_f64()));
        let path = self.out.join(super::train::METRICS_FILE);
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| BvrError::path_io(&path, e))?;
        writeln!(f, "{}", cols.join(",")).map_err(|e| BvrError::path_io(&path, e))?;
        log::info!(
            "step {} episodes {} return {:.3} loss {:.4} eval {}",
            self.env_steps,
            self.episodes,
            mean(&self.acc_returns),
            mean(&self.acc_loss),
            table
                .rows
                .iter()
                .map(|r| format!("{}={:.2}", r.opponent, r.win_rate()))
                .collect::<Vec<_>>()
                .join(" ")
        );
        self.acc_returns.clear();
        self.acc_dca.clear();
        self.acc_loss.clear();
        self.last_eval = Some(table);
        self.last_row_step = Some(self.env_steps);
        Ok(())
    }

    fn run_inline(&mut self) -> Result<()> {
        let mut actor = Actor::new(self.cfg, 0);
        actor.local_episode = self.episodes;
        while self.env_steps < self.cfg.train.total_steps {
            if !actor.in_episode() {
                let view = self.view();
                actor.begin(&view, &self.mix);
            }
            let (transitions, summary) = actor.step(&self.online)?;
            for t in transitions {
                if self.env_steps >= self.cfg.train.total_steps {
                    break;
                }
                self.absorb(t)?;
            }
            if let Some(s) = summary {
                self.finish_episode(s)?;
            }
        }
        Ok(())
    }

    fn run_workers(&mut self) -> Result<()> {
        let workers = self.cfg.train.workers;
        let shared: Arc<RwLock<SharedView>> = Arc::new(RwLock::new(self.view()));
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx): (Sender<WorkerMsg>, Receiver<WorkerMsg>) = bounded(self.cfg.train.queue_capacity.max(1));
        let mix = self.mix;
        let result = std::thread::scope(|scope| -> Result<()> {
            for w in 0..workers {
                let tx = tx.clone();
                let shared = Arc::clone(&shared);
                let stop = Arc::clone(&stop);
                let cfg = self.cfg;
                scope.spawn(move || {
                    let mut actor = Actor::new(cfg, w as u64 + 1);
                    while !stop.load(Ordering::Relaxed) {
                        let params = {
                            let g = shared.read().expect("shared view lock");
                            if !actor.in_episode() {
                                actor.begin(&g, &mix);
                            }
                            Arc::clone(&g.params)
                        };
                        let res = actor.step(&params);
                        match res {
                            Ok((ts, summary)) => {
                                for t in ts {
                                    if tx.send(WorkerMsg::Transition(t)).is_err() {
                                        return;
                                    }
                                }
                                if let Some(s) = summary {
                                    if tx.send(WorkerMsg::Episode(s)).is_err() {
                                        return;
                                    }
                                }
                            }
                            Err(e) => {
                                let _ = tx.send(WorkerMsg::Failed(e));
                                return;
                            }
                        }
                    }
                });
            }
            drop(tx);
            let outcome = (|| -> Result<()> {
                while self.env_steps < self.cfg.train.total_steps {
                    let msg = rx.recv().map_err(|_| BvrError::SimulationFault("all workers exited".into()))?;
                    match msg {
                        WorkerMsg::Transition(t) => {
                            let before = self.learner_steps;
                            let snaps = self.snapshots.len();
                            self.absorb(t)?;
                            let published = self.learner_steps / PUBLISH_EVERY != before / PUBLISH_EVERY;
                            if published || self.snapshots.len() != snaps {
                                *shared.write().expect("shared view lock") = self.view();
                            }
                        }
                        WorkerMsg::Episode(s) => self.finish_episode(s)?,
                        WorkerMsg::Failed(e) => return Err(e),
                    }
                }
                Ok(())
            })();
            stop.store(true, Ordering::Relaxed);
            drop(rx);
            outcome
        });
        result
    }
}

/// Runs (or resumes) a training job writing checkpoints, metrics and the
/// manifest under `out`.
pub fn train(cfg: &RunConfig, out: &Path, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| BvrError::path_io(out, e))?;
    let tr = &cfg.train;
    let mut rng = ChaCha8Rng::seed_from_u64(tr.seed);
    let mut online = NetworkParams::<f32>::for_env(&cfg.rainbow, &mut rng);
    let mut pool = OpponentPool::new(&tr.baselines, tr.initial_rating, tr.pool_cap);
    let mut snapshots = Vec::new();
    let mut snapshot_params = HashMap::new();
    let (mut env_steps, mut episodes, mut learner_steps) = (0, 0, 0);
    let metrics = out.join(METRICS_FILE);

    let state_path = out.join(STATE_FILE);
    let resumed = resume && state_path.exists();
    if resumed {
        let text = fs::read_to_string(&state_path).map_err(|e| BvrError::path_io(&state_path, e))?;
        let state: TrainState = serde_json::from_str(&text)?;
        online = load_checkpoint(&state.checkpoint)?;
        online.check_shapes()?;
        env_steps = state.env_steps;
        episodes = state.episodes;
        learner_steps = state.learner_steps;
        pool = state.pool;
        snapshots = state.snapshots;
        for (_, m) in pool.snapshots() {
            if let MemberKind::Snapshot { path, .. } = &m.kind {
                snapshot_params.insert(m.id.clone(), Arc::new(load_checkpoint(path)?));
            }
        }
        truncate_metrics(&metrics, env_steps)?;
        rng = ChaCha8Rng::seed_from_u64(tr.seed ^ env_steps.rotate_left(17));
        log::info!("resuming at env step {env_steps}");
    } else {
        fs::write(&metrics, format!("{}\n", metrics_header(&tr.baselines)))
            .map_err(|e| BvrError::path_io(&metrics, e))?;
    }

    let mut manifest = RunManifest::new("train", cfg, vec![tr.seed, tr.eval_seed]);
    manifest.add_artifact(METRICS_FILE);
    let target = online.clone();
    let adam = Adam::new(&online, &cfg.rainbow);
    let mut t = Trainer {
        cfg,
        out: out.to_path_buf(),
        settings: EnvSettings::from(cfg),
        mix: OpponentMix {
            latest: tr.mix_latest,
            pool: tr.mix_pool,
            baseline: tr.mix_baseline,
        },
        online,
        target,
        adam,
        replay: PrioritizedReplay::new(cfg.rainbow.buffer_capacity),
        rng,
        pool,
        snapshot_params,
        snapshots,
        env_steps,
        episodes,
        learner_steps,
        started: Instant::now(),
        wall_offset: 0.0,
        acc_returns: Vec::new(),
        acc_dca: Vec::new(),
        acc_loss: Vec::new(),
        last_eval: None,
        last_row_step: None,
        manifest,
    };
    if !resumed {
        t.snapshot()?;
    }

    if tr.workers == 0 {
        t.run_inline()?;
    } else {
        t.run_workers()?;
    }

    if t.snapshots.last().map(|(s, _)| *s) != Some(t.env_steps) {
        t.snapshot()?;
    }
    if t.env_steps > 0 && t.last_row_step != Some(t.env_steps) && tr.eval_period > 0 {
        t.metrics_row()?;
    }
    let final_path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&t.online, &final_path)?;
    t.manifest.add_artifact(FINAL_CHECKPOINT);
    let last_ckpt = t.snapshots.last().map(|(_, p)| p.clone()).unwrap_or_else(|| final_path.clone());
    t.write_state(&last_ckpt)?;

    Ok(TrainSummary {
        env_steps: t.env_steps,
        episodes: t.episodes,
        learner_steps: t.learner_steps,
        snapshots: t.snapshots,
        final_checkpoint: final_path,
        metrics,
        last_eval: t.last_eval,
        params: t.online,
        pool: t.pool,
    })
}
