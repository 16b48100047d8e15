use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BvrError, Result};

pub const LEARNER_ID: &str = "learner";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberKind {
    /// The policy currently being trained.
    Learner,
    Baseline,
    Snapshot { path: PathBuf, step: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub id: String,
    #[serde(flatten)]
    pub kind: MemberKind,
    pub rating: f64,
    pub games: u64,
}

/// Opponent pool: the learner, permanent scripted baselines and up to `cap`
/// learned snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpponentPool {
    pub members: Vec<PoolMember>,
    pub cap: usize,
}

/// Sampling proportions for latest-self, pool snapshot and baseline opponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpponentMix {
    pub latest: f64,
    pub pool: f64,
    pub baseline: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpponentChoice {
    LatestSelf,
    /// Index into `OpponentPool::members`.
    Member(usize),
}

impl OpponentPool {
    pub fn new(baselines: &[String], initial_rating: f64, cap: usize) -> Self {
        let mut members = vec![PoolMember {
            id: LEARNER_ID.into(),
            kind: MemberKind::Learner,
            rating: initial_rating,
            games: 0,
        }];
        members.extend(baselines.iter().map(|b| PoolMember {
            id: b.clone(),
            kind: MemberKind::Baseline,
            rating: initial_rating,
            games: 0,
        }));
        Self { members, cap }
    }

    pub fn get(&self, id: &str) -> Option<&PoolMember> {
        self.members.iter().find(|m| m.id == id)
    }

    fn index_of(&self, id: &str) -> Result<usize> {
        self.members
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| BvrError::InvalidConfig(format!("no pool member {id:?}")))
    }

    pub fn baselines(&self) -> impl Iterator<Item = (usize, &PoolMember)> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == MemberKind::Baseline)
    }

    pub fn snapshots(&self) -> impl Iterator<Item = (usize, &PoolMember)> {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| matches!(m.kind, MemberKind::Snapshot { .. }))
    }

    pub fn learner_rating(&self) -> f64 {
        self.get(LEARNER_ID).map_or(0.0, |m| m.rating)
    }

    /// Adds a snapshot at the learner's current rating. When the pool holds
    /// more than `cap` snapshots the lowest-rated one is evicted and returned.
    pub fn add_snapshot(&mut self, id: String, path: PathBuf, step: u64) -> Option<PoolMember> {
        let rating = self.learner_rating();
        self.members.push(PoolMember {
            id,
            kind: MemberKind::Snapshot { path, step },
            rating,
            games: 0,
        });
        if self.snapshots().count() <= self.cap {
            return None;
        }
        let worst = self
            .snapshots()
            .min_by(|(_, a), (_, b)| a.rating.total_cmp(&b.rating))
            .map(|(i, _)| i)?;
        Some(self.members.remove(worst))
    }

    pub fn total_rating(&self) -> f64 {
        self.members.iter().map(|m| m.rating).sum()
    }
}

/// Logistic expectation with scale 400.
pub fn elo_expectation(ra: f64, rb: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((rb - ra) / 400.0))
}

/// Zero-sum Elo update; `score_a` is 1, 0 or 0.5.
pub fn elo_update(ra: f64, rb: f64, score_a: f64, k: f64) -> (f64, f64) {
    let delta = k * (score_a - elo_expectation(ra, rb));
    (ra + delta, rb - delta)
}

pub fn update_rating(pool: &mut OpponentPool, a_id: &str, b_id: &str, score_a: f64, k: f64) -> Result<()> {
    let ia = pool.index_of(a_id)?;
    let ib = pool.index_of(b_id)?;
    if ia == ib {
        return Ok(());
    }
    let (ra, rb) = elo_update(pool.members[ia].rating, pool.members[ib].rating, score_a, k);
    pool.members[ia].rating = ra;
    pool.members[ib].rating = rb;
    pool.members[ia].games += 1;
    pool.members[ib].games += 1;
    Ok(())
}

/// Latest self with probability `mix.latest`, a uniform snapshot with
/// `mix.pool` (any non-learner member while no snapshot exists yet), a
/// uniform baseline otherwise.
pub fn sample_opponent<R: Rng + ?Sized>(pool: &OpponentPool, mix: &OpponentMix, rng: &mut R) -> OpponentChoice {
    let u: f64 = rng.random();
    let uniform = |ids: Vec<usize>, rng: &mut R| match ids.len() {
        0 => OpponentChoice::LatestSelf,
        n => OpponentChoice::Member(ids[rng.random_range(0..n)]),
    };
    if u < mix.latest {
        OpponentChoice::LatestSelf
    } else if u < mix.latest + mix.pool {
        let mut ids: Vec<usize> = pool.snapshots().map(|(i, _)| i).collect();
        if ids.is_empty() {
            ids = pool.baselines().map(|(i, _)| i).collect();
        }
        uniform(ids, rng)
    } else {
        uniform(pool.baselines().map(|(i, _)| i).collect(), rng)
    }
}
