use bvr_core::harness::{
    elo_expectation, evaluate, match_setup, sample_opponent, update_rating, OpponentChoice, OpponentMix, OpponentPool,
    PolicySpec, BASELINES, LEARNER_ID,
};
use bvr_core::mdp::{EnvSettings, BLUE, RED};
use bvr_core::RunConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pool_with_snapshots(n: usize) -> OpponentPool {
    let baselines: Vec<String> = BASELINES.iter().map(|b| b.to_string()).collect();
    let mut pool = OpponentPool::new(&baselines, 1000.0, 20);
    for i in 0..n {
        pool.add_snapshot(format!("snap{i}"), format!("snap{i}.ckpt").into(), i as u64);
    }
    pool
}

#[test]
fn opponent_frequencies_follow_the_mix() {
    let pool = pool_with_snapshots(4);
    let mix = OpponentMix {
        latest: 0.5,
        pool: 0.3,
        baseline: 0.2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    let mut counts = vec![0usize; pool.members.len()];
    let mut latest = 0usize;
    for _ in 0..n {
        match sample_opponent(&pool, &mix, &mut rng) {
            OpponentChoice::LatestSelf => latest += 1,
            OpponentChoice::Member(i) => counts[i] += 1,
        }
    }
    let freq = |c: usize| c as f64 / n as f64;
    assert!((freq(latest) - 0.5).abs() <= 0.01);
    let snaps: usize = pool.snapshots().map(|(i, _)| counts[i]).sum();
    let bases: usize = pool.baselines().map(|(i, _)| counts[i]).sum();
    assert!((freq(snaps) - 0.3).abs() <= 0.01, "{}", freq(snaps));
    assert!((freq(bases) - 0.2).abs() <= 0.01, "{}", freq(bases));
    for (i, _) in pool.snapshots() {
        assert!((freq(counts[i]) - 0.3 / 4.0).abs() <= 0.01);
    }
    for (i, _) in pool.baselines() {
        assert!((freq(counts[i]) - 0.2 / 3.0).abs() <= 0.01);
    }
    assert_eq!(counts[0], 0, "the learner entry is never drawn as a member");
}

#[test]
fn empty_snapshot_share_falls_back_to_baselines() {
    let pool = pool_with_snapshots(0);
    let mix = OpponentMix {
        latest: 0.0,
        pool: 1.0,
        baseline: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        match sample_opponent(&pool, &mix, &mut rng) {
            OpponentChoice::Member(i) => assert!(pool.baselines().any(|(j, _)| j == i)),
            OpponentChoice::LatestSelf => panic!("pool share drew latest self"),
        }
    }
}

proptest! {
    #[test]
    fn elo_updates_are_zero_sum_and_bounded(
        ra in 0.0f64..3000.0,
        rb in 0.0f64..3000.0,
        score in prop::sample::select(vec![0.0, 0.5, 1.0]),
        k in 1.0f64..64.0,
    ) {
        let mut pool = pool_with_snapshots(1);
        pool.members[0].rating = ra;
        let snap = pool.snapshots().next().unwrap().0;
        pool.members[snap].rating = rb;
        let before = pool.total_rating();
        update_rating(&mut pool, LEARNER_ID, "snap0", score, k).unwrap();
        prop_assert!((pool.total_rating() - before).abs() <= 1e-9);
        let delta = pool.members[0].rating - ra;
        // Oracle: K·(S − 1/(1 + 10^((Rb − Ra)/400))).
        let expected = k * (score - 1.0 / (1.0 + 10f64.powf((rb - ra) / 400.0)));
        prop_assert!((delta - expected).abs() <= 1e-9);
        prop_assert!(delta.abs() <= k);
        prop_assert!((elo_expectation(ra, rb) + elo_expectation(rb, ra) - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn mirrored_matches_pair_seeds_and_swap_sides() {
    for i in 0..10 {
        let (seed, side) = match_setup(500, i);
        assert_eq!(seed, 500 + (i / 2) as u64);
        assert_eq!(side, if i % 2 == 0 { BLUE } else { RED });
    }
}

#[test]
fn scripted_matchups_have_expected_results() {
    let s = EnvSettings::from(&RunConfig::default());
    let commit = PolicySpec::baseline("aggressive-commit").unwrap();
    let flier = PolicySpec::baseline("straight-flier").unwrap();
    let cap = PolicySpec::baseline("pure-cap").unwrap();
    let t = evaluate(&commit, std::slice::from_ref(&flier), 4, 0, &s, 1).unwrap();
    assert_eq!(t.rows[0].wins, 4, "{:?}", t.rows[0]);
    let t = evaluate(&cap, std::slice::from_ref(&cap), 2, 0, &s, 1).unwrap();
    assert_eq!(t.rows[0].draws, 2);
    let t = evaluate(&flier, std::slice::from_ref(&flier), 2, 0, &s, 1).unwrap();
    assert_eq!(t.rows[0].wins + t.rows[0].losses, 0);
}
