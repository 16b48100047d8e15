use serde::{Deserialize, Serialize};

/// Fixed categorical support z_1 < … < z_K on [v_min, v_max].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Support {
    atoms: Vec<f64>,
    v_min: f64,
    v_max: f64,
    delta: f64,
}

impl Support {
    pub fn new(count: usize, v_min: f64, v_max: f64) -> Self {
        assert!(count >= 1 && v_min < v_max, "invalid support");
        let delta = if count > 1 {
            (v_max - v_min) / (count - 1) as f64
        } else {
            0.0
        };
        let atoms = (0..count)
            .map(|i| {
                if i + 1 == count && count > 1 {
                    v_max
                } else {
                    v_min + delta * i as f64
                }
            })
            .collect();
        Self {
            atoms,
            v_min,
            v_max,
            delta,
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Σ z_i p_i.
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        self.atoms.iter().zip(probs).map(|(z, p)| z * p).sum()
    }

    /// Categorical projection of the shifted distribution r + γ·Z onto this
    /// support, written into `out`.
    pub fn project_into(&self, probs: &[f64], r: f64, gamma_eff: f64, done: bool, out: &mut [f64]) {
        let k = self.atoms.len();
        assert_eq!(probs.len(), k);
        assert_eq!(out.len(), k);
        out.iter_mut().for_each(|o| *o = 0.0);
        let last = (k - 1) as f64;
        for (z, &p) in self.atoms.iter().zip(probs) {
            let shifted = if done { r } else { r + gamma_eff * z };
            let tz = shifted.clamp(self.v_min, self.v_max);
            let b = ((tz - self.v_min) / self.delta).clamp(0.0, last);
            let lo = b.floor();
            let hi = b.ceil();
            if lo == hi {
                out[lo as usize] += p;
            } else {
                out[lo as usize] += p * (hi - b);
                out[hi as usize] += p * (b - lo);
            }
        }
    }
}

/// A categorical return distribution over a fixed support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueDistribution {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ValueDistribution {
    pub fn new(support: &Support, probs: Vec<f64>) -> Self {
        assert_eq!(support.len(), probs.len());
        Self {
            atoms: support.atoms().to_vec(),
            probs,
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(z, p)| z * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn support(&self) -> Support {
        let k = self.atoms.len();
        Support::new(k, self.atoms[0], self.atoms[k - 1])
    }
}

/// Expected value per action.
pub fn q_values(dists: &[ValueDistribution]) -> Vec<f64> {
    dists.iter().map(ValueDistribution::mean).collect()
}

/// Bellman target r + γ·Z projected back onto the distribution's own support.
pub fn project_target(
    target: &ValueDistribution,
    r: f64,
    gamma_eff: f64,
    done: bool,
) -> ValueDistribution {
    let support = target.support();
    let mut out = vec![0.0; support.len()];
    support.project_into(&target.probs, r, gamma_eff, done, &mut out);
    ValueDistribution {
        atoms: target.atoms.clone(),
        probs: out,
    }
}
