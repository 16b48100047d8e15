use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::mdp::{Observation, Transition};
use crate::tactics::TacticAction;

/// A multi-step transition with its effective discount γ^m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NStepTransition {
    pub s: Observation,
    pub a: TacticAction,
    pub r: f64,
    pub s_next: Observation,
    pub done: bool,
    pub gamma_eff: f64,
}

/// Folds up to `n` consecutive transitions starting at `window[0]`, stopping at
/// the first terminal one.
pub fn accumulate_nstep(window: &[Transition], n: usize, gamma: f64) -> NStepTransition {
    assert!(!window.is_empty() && n >= 1, "empty n-step window");
    let mut r = 0.0;
    let mut discount = 1.0;
    let mut last = &window[0];
    for t in window.iter().take(n) {
        r += discount * t.r;
        discount *= gamma;
        last = t;
        if t.done {
            break;
        }
    }
    NStepTransition {
        s: window[0].s,
        a: window[0].a,
        r,
        s_next: last.s_next,
        done: last.done,
        gamma_eff: discount,
    }
}

/// Sliding window that turns a stream of one-step transitions from a single
/// episode into n-step transitions.
#[derive(Clone, Debug)]
pub struct NStepBuffer {
    n: usize,
    gamma: f64,
    window: VecDeque<Transition>,
}

impl NStepBuffer {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1);
        Self {
            n,
            gamma,
            window: VecDeque::with_capacity(n),
        }
    }

    /// Adds a transition and returns whatever n-step transitions are now
    /// complete. A terminal transition flushes the whole window.
    pub fn push(&mut self, t: Transition) -> Vec<NStepTransition> {
        let done = t.done;
        self.window.push_back(t);
        let mut out = Vec::new();
        if done {
            while !self.window.is_empty() {
                out.push(accumulate_nstep(self.window.make_contiguous(), self.n, self.gamma));
                self.window.pop_front();
            }
        } else if self.window.len() == self.n {
            out.push(accumulate_nstep(self.window.make_contiguous(), self.n, self.gamma));
            self.window.pop_front();
        }
        out
    }

    /// Drops partial windows, e.g. when an episode is truncated externally.
    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn pending(&self) -> usize {
        self.window.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::OBS_DIM;

    fn tr(i: usize, r: f64, done: bool) -> Transition {
        let mut s = [0.0; OBS_DIM];
        s[0] = i as f64;
        let mut s_next = [0.0; OBS_DIM];
        s_next[0] = (i + 1) as f64;
        Transition {
            s: Observation(s),
            a: TacticAction::from_index(i % 6).unwrap(),
            r,
            s_next: Observation(s_next),
            done,
        }
    }

    #[test]
    fn three_step_sum() {
        let w = [tr(0, 1.0, false), tr(1, 1.0, false), tr(2, 1.0, false)];
        let t = accumulate_nstep(&w, 3, 0.5);
        assert_eq!(t.r, 1.75);
        assert_eq!(t.gamma_eff, 0.125);
        assert_eq!(t.s_next.0[0], 3.0);
        assert!(!t.done);
    }

    #[test]
    fn terminal_truncates_window() {
        let w = [tr(0, 2.0, true), tr(1, 5.0, false)];
        let t = accumulate_nstep(&w, 3, 0.9);
        assert_eq!(t.r, 2.0);
        assert!(t.done);
        assert_eq!(t.gamma_eff, 0.9);
    }

    #[test]
    fn single_step_is_identity() {
        let one = tr(4, -0.3, false);
        let t = accumulate_nstep(std::slice::from_ref(&one), 1, 0.99);
        assert_eq!((t.s, t.a, t.r, t.s_next, t.done), (one.s, one.a, one.r, one.s_next, one.done));
        assert_eq!(t.gamma_eff, 0.99);
    }

    #[test]
    fn buffer_emits_one_per_step_and_flushes_on_done() {
        let mut b = NStepBuffer::new(3, 0.5);
        assert!(b.push(tr(0, 1.0, false)).is_empty());
        assert!(b.push(tr(1, 1.0, false)).is_empty());
        let out = b.push(tr(2, 1.0, false));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].r, 1.75);
        let out = b.push(tr(3, 4.0, true));
        // windows starting at 1, 2, 3
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].r, 1.0 + 0.5 + 0.25 * 4.0);
        assert_eq!(out[2].r, 4.0);
        assert!(out.iter().all(|t| t.done));
        assert_eq!(b.pending(), 0);
    }
}
