use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BvrError, Result};

/// Binary sum tree over `capacity` leaves (a power of two). Internal nodes hold
/// the sum of their children; a parallel tree tracks the maximum leaf.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SumTree {
    capacity: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity.is_power_of_two(), "sum tree capacity must be a power of two");
        Self {
            capacity,
            sums: vec![0.0; 2 * capacity],
            maxes: vec![0.0; 2 * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    pub fn max_leaf(&self) -> f64 {
        self.maxes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.sums[self.capacity + leaf]
    }

    pub fn set(&mut self, leaf: usize, priority: f64) {
        assert!(leaf < self.capacity, "leaf {leaf} out of range");
        let mut node = self.capacity + leaf;
        self.sums[node] = priority;
        self.maxes[node] = priority;
        while node > 1 {
            node /= 2;
            let (l, r) = (2 * node, 2 * node + 1);
            self.sums[node] = self.sums[l] + self.sums[r];
            self.maxes[node] = self.maxes[l].max(self.maxes[r]);
        }
    }

    /// Leaf whose cumulative priority interval contains `value`. Never lands
    /// on a zero-priority leaf while the total is positive.
    pub fn find_prefix(&self, value: f64) -> usize {
        let mut node = 1;
        let mut v = value.max(0.0);
        while node < self.capacity {
            let (l, r) = (2 * node, 2 * node + 1);
            let left = self.sums[l];
            if (v < left || self.sums[r] <= 0.0) && left > 0.0 {
                node = l;
            } else {
                v = (v - left).max(0.0);
                node = r;
            }
        }
        node - self.capacity
    }

    /// Largest deviation between an internal node and the sum of its children.
    pub fn max_internal_error(&self) -> f64 {
        (1..self.capacity)
            .map(|n| (self.sums[n] - self.sums[2 * n] - self.sums[2 * n + 1]).abs())
            .fold(0.0, f64::max)
    }

    pub fn leaves(&self) -> &[f64] {
        &self.sums[self.capacity..]
    }
}

/// A stored transition with its replay priority.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry<T> {
    pub transition: T,
    pub priority: f64,
}

/// One prioritized minibatch.
#[derive(Clone, Debug)]
pub struct ReplaySample<T> {
    pub entries: Vec<T>,
    pub indices: Vec<usize>,
    pub is_weights: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Ring buffer of transitions indexed by a sum tree.
#[derive(Clone, Debug)]
pub struct PrioritizedReplay<T> {
    tree: SumTree,
    items: Vec<Option<T>>,
    next: usize,
    len: usize,
}

impl<T: Clone> PrioritizedReplay<T> {
    /// Capacity is rounded up to the next power of two.
    pub fn new(capacity: usize) -> Self {
        let cap = capacity.max(1).next_power_of_two();
        Self {
            tree: SumTree::new(cap),
            items: vec![None; cap],
            next: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index).and_then(Option::as_ref)
    }

    /// Inserts at the ring cursor with priority max(entry priority, current
    /// max leaf), so fresh transitions are replayed at least once. Returns the
    /// slot used.
    pub fn push(&mut self, entry: ReplayEntry<T>) -> usize {
        assert!(entry.priority > 0.0, "replay priority must be positive");
        let slot = self.next;
        let priority = entry.priority.max(self.tree.max_leaf());
        self.items[slot] = Some(entry.transition);
        self.tree.set(slot, priority);
        self.next = (self.next + 1) % self.capacity();
        self.len = (self.len + 1).min(self.capacity());
        slot
    }

    /// Stratified sample: the priority mass is cut into `batch` equal strata
    /// with one uniform draw in each.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, beta: f64, rng: &mut R) -> Result<ReplaySample<T>> {
        if batch == 0 || batch > self.len {
            return Err(BvrError::InsufficientSamples {
                population: self.len,
                batch,
            });
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let n = self.len as f64;
        let mut out = ReplaySample {
            entries: Vec::with_capacity(batch),
            indices: Vec::with_capacity(batch),
            is_weights: Vec::with_capacity(batch),
            probabilities: Vec::with_capacity(batch),
        };
        for i in 0..batch {
            let u = segment * (i as f64 + rng.random::<f64>());
            let idx = self.tree.find_prefix(u);
            let p = self.tree.get(idx) / total;
            out.entries.push(self.items[idx].clone().expect("positive-priority slot is filled"));
            out.indices.push(idx);
            out.probabilities.push(p);
            out.is_weights.push((n * p).powf(-beta));
        }
        let max = out.is_weights.iter().cloned().fold(0.0, f64::max);
        for w in &mut out.is_weights {
            *w /= max;
        }
        Ok(out)
    }

    /// Sets each sampled leaf to (|δ| + ε)^α.
    pub fn update(&mut self, indices: &[usize], td_errors: &[f64], alpha: f64, eps: f64) {
        assert_eq!(indices.len(), td_errors.len());
        for (&i, &d) in indices.iter().zip(td_errors) {
            self.tree.set(i, priority_from_td(d, alpha, eps));
        }
    }
}

pub fn priority_from_td(td_error: f64, alpha: f64, eps: f64) -> f64 {
    (td_error.abs() + eps).powf(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(v: u32, p: f64) -> ReplayEntry<u32> {
        ReplayEntry {
            transition: v,
            priority: p,
        }
    }

    #[test]
    fn first_push_sets_root() {
        let mut r = PrioritizedReplay::new(8);
        r.push(entry(0, 0.7));
        assert_eq!(r.tree().total(), 0.7);
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut r = PrioritizedReplay::new(4);
        for v in 0..4 {
            r.push(entry(v, 1.0));
        }
        assert_eq!(r.push(entry(4, 1.0)), 0);
        assert_eq!(r.get(0), Some(&4));
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn ascending_priorities_sum() {
        let mut r = PrioritizedReplay::new(4);
        for (v, p) in [(0, 1.0), (1, 2.0), (2, 3.0)] {
            r.push(entry(v, p));
        }
        assert_eq!(r.tree().total(), 6.0);
    }

    #[test]
    fn capacity_rounds_up() {
        assert_eq!(PrioritizedReplay::<u32>::new(100_000).capacity(), 131_072);
    }

    #[test]
    fn equal_priorities_give_unit_weights() {
        let mut r = PrioritizedReplay::new(16);
        for v in 0..10 {
            r.push(entry(v, 1.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = r.sample(8, 0.4, &mut rng).unwrap();
        assert!(s.is_weights.iter().all(|w| (*w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let mut r = PrioritizedReplay::new(4);
        r.push(entry(0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            r.sample(2, 0.4, &mut rng),
            Err(BvrError::InsufficientSamples { population: 1, batch: 2 })
        ));
    }

    #[test]
    fn update_priorities() {
        assert_relative_eq!(priority_from_td(0.0, 0.5, 1e-3), 1e-3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(priority_from_td(7.5, 0.0, 1e-3), 1.0);
    }

    #[test]
    fn weights_favour_rare_samples() {
        let mut r = PrioritizedReplay::new(4);
        r.push(entry(0, 1.0));
        r.push(entry(1, 1.0));
        r.push(entry(2, 1.0));
        r.update(&[2], &[3.0], 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = r.sample(3, 1.0, &mut rng).unwrap();
        for (i, w) in s.indices.iter().zip(&s.is_weights) {
            assert!(*w > 0.0 && *w <= 1.0);
            if *i == 2 {
                assert!(*w < 1.0);
            }
        }
    }

    proptest! {
        #[test]
        fn root_tracks_leaf_sum(ops in proptest::collection::vec((any::<bool>(), 0usize..16, 0.001f64..10.0), 1..200)) {
            let mut r = PrioritizedReplay::new(16);
            for (push, idx, p) in ops {
                if push || r.is_empty() {
                    r.push(entry(0, p));
                } else {
                    r.update(&[idx % r.len()], &[p], 0.6, 1e-3);
                }
                let leaves: f64 = r.tree().leaves().iter().sum();
                prop_assert!((r.tree().total() - leaves).abs() <= 1e-6);
                prop_assert!(r.tree().max_internal_error() <= 1e-6);
            }
        }
    }
}
