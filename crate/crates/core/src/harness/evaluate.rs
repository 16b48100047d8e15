use serde::{Deserialize, Serialize};

use super::policies::PolicySpec;
use crate::episode::{EpisodeRecord, EpisodeRecorder};
use crate::error::Result;
use crate::mdp::{dca_index, BvrEnv, EnvSettings, Policy, PolicyAction, BLUE, RED};
use crate::rainbow::NoiseMode;
use crate::simcore::{EntityId, Outcome};
use crate::tactics::TacticAction;

/// One finished episode between a blue and a red policy.
#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub records: Vec<EpisodeRecord>,
    /// Outcome from blue's point of view.
    pub outcome: Outcome,
    pub return_blue: f64,
    pub return_red: f64,
    pub dca_blue: Vec<f64>,
    pub dca_red: Vec<f64>,
}

impl EpisodeRun {
    pub fn outcome_for(&self, side: EntityId) -> Outcome {
        if side == BLUE {
            self.outcome
        } else {
            self.outcome.flipped()
        }
    }

    pub fn return_for(&self, side: EntityId) -> f64 {
        if side == BLUE {
            self.return_blue
        } else {
            self.return_red
        }
    }

    pub fn dca_trace(&self, side: EntityId) -> &[f64] {
        if side == BLUE {
            &self.dca_blue
        } else {
            &self.dca_red
        }
    }

    pub fn mean_dca(&self, side: EntityId) -> f64 {
        let t = self.dca_trace(side);
        t.iter().sum::<f64>() / t.len().max(1) as f64
    }

    pub fn launches(&self) -> usize {
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.records {
            seen.extend(r.missiles.iter().map(|m| m.id));
        }
        seen.len()
    }
}

/// Plays one full episode; both policies act through the same interface.
pub fn run_episode(
    blue: &mut dyn Policy,
    red: &mut dyn Policy,
    seed: u64,
    settings: &EnvSettings,
) -> Result<EpisodeRun> {
    blue.reset();
    red.reset();
    let mut env = BvrEnv::new(settings.clone(), seed, BLUE);
    let mut rec = EpisodeRecorder::start(&env, seed, vec![blue.name(), red.name()]);
    let dca = |env: &BvrEnv, side| dca_index(env.world(), side, &settings.reward, &settings.sim);
    let mut run = EpisodeRun {
        records: Vec::new(),
        outcome: Outcome::Ongoing,
        return_blue: 0.0,
        return_red: 0.0,
        dca_blue: vec![dca(&env, BLUE)],
        dca_red: vec![dca(&env, RED)],
    };
    while !env.is_done() {
        let a = blue.act(env.world(), BLUE, settings);
        let b = red.act(env.world(), RED, settings);
        let step = env.step_joint(a, b)?;
        run.return_blue += step.reward;
        run.return_red += step.opponent_reward;
        run.dca_blue.push(dca(&env, BLUE));
        run.dca_red.push(dca(&env, RED));
        rec.record(&env, &step);
    }
    run.outcome = env.outcome();
    run.records = rec.into_records();
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub opponent: String,
    pub matches: usize,
    pub wins: usize,
    pub losses: usize,
    pub draws: usize,
    pub mean_return: f64,
    pub mean_dca: f64,
    /// Share of decisions spent in each tactic, indexed by action code.
    pub action_freq: Vec<f64>,
}

impl EvalRow {
    pub fn win_rate(&self) -> f64 {
        self.wins as f64 / self.matches.max(1) as f64
    }

    pub fn loss_rate(&self) -> f64 {
        self.losses as f64 / self.matches.max(1) as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTable {
    pub subject: String,
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    pub fn row(&self, opponent: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.opponent == opponent)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("opponent,matches,wins,losses,draws,win_rate,mean_return,mean_dca\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.4},{:.6},{:.6}\n",
                r.opponent,
                r.matches,
                r.wins,
                r.losses,
                r.draws,
                r.win_rate(),
                r.mean_return,
                r.mean_dca
            ));
        }
        out
    }
}

/// Seed and subject side of evaluation match `i`: consecutive pairs share a
/// seed with the subject flying blue, then red.
pub fn match_setup(base_seed: u64, i: usize) -> (u64, EntityId) {
    (base_seed + (i / 2) as u64, if i.is_multiple_of(2) { BLUE } else { RED })
}

#[derive(Clone, Copy, Debug)]
struct MatchResult {
    outcome: Outcome,
    ret: f64,
    dca: f64,
    actions: [usize; TacticAction::COUNT],
}

fn play_match(
    subject: &PolicySpec,
    opponent: &PolicySpec,
    base_seed: u64,
    i: usize,
    settings: &EnvSettings,
) -> Result<MatchResult> {
    let (seed, side) = match_setup(base_seed, i);
    let mut s = subject.build(NoiseMode::Zero, seed);
    let mut o = opponent.build(NoiseMode::Zero, seed);
    let run = if side == BLUE {
        run_episode(s.as_mut(), o.as_mut(), seed, settings)?
    } else {
        run_episode(o.as_mut(), s.as_mut(), seed, settings)?
    };
    let mut actions = [0; TacticAction::COUNT];
    for r in &run.records {
        if let Some(PolicyAction::Tactic(a)) = r.action_of(side) {
            actions[a.index()] += 1;
        }
    }
    Ok(MatchResult {
        outcome: run.outcome_for(side),
        ret: run.return_for(side),
        dca: run.mean_dca(side),
        actions,
    })
}

/// Zero-noise tournament of `subject` against each opponent over
/// `n_matches` mirrored, seeded matches. `workers` > 1 spreads matches over
/// threads; the table does not depend on the worker count.
pub fn evaluate(
    subject: &PolicySpec,
    opponents: &[PolicySpec],
    n_matches: usize,
    base_seed: u64,
    settings: &EnvSettings,
    workers: usize,
) -> Result<EvalTable> {
    let mut table = EvalTable {
        subject: subject.name().to_string(),
        rows: Vec::new(),
    };
    if n_matches == 0 {
        return Ok(table);
    }
    let workers = workers.clamp(1, n_matches);
    for opponent in opponents {
        let results: Vec<Result<MatchResult>> = if workers == 1 {
            (0..n_matches)
                .map(|i| play_match(subject, opponent, base_seed, i, settings))
                .collect()
        } else {
            let mut slots: Vec<Option<Result<MatchResult>>> = (0..n_matches).map(|_| None).collect();
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        scope.spawn(move || {
                            (w..n_matches)
                                .step_by(workers)
                                .map(|i| (i, play_match(subject, opponent, base_seed, i, settings)))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                for h in handles {
                    for (i, r) in h.join().expect("evaluation worker panicked") {
                        slots[i] = Some(r);
                    }
                }
            });
            slots.into_iter().map(|s| s.expect("every match played")).collect()
        };
        let mut row = EvalRow {
            opponent: opponent.name().to_string(),
            matches: n_matches,
            wins: 0,
            losses: 0,
            draws: 0,
            mean_return: 0.0,
            mean_dca: 0.0,
            action_freq: vec![0.0; TacticAction::COUNT],
        };
        let mut counts = [0usize; TacticAction::COUNT];
        for r in results {
            let r = r?;
            match r.outcome {
                Outcome::AgentWin => row.wins += 1,
                Outcome::AgentLoss => row.losses += 1,
                _ => row.draws += 1,
            }
            row.mean_return += r.ret;
            row.mean_dca += r.dca;
            for (c, n) in counts.iter_mut().zip(r.actions) {
                *c += n;
            }
        }
        let decisions = counts.iter().sum::<usize>().max(1) as f64;
        row.action_freq = counts.iter().map(|&c| c as f64 / decisions).collect();
        row.mean_return /= n_matches as f64;
        row.mean_dca /= n_matches as f64;
        table.rows.push(row);
    }
    Ok(table)
}
