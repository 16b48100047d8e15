use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward, forward_batch, NetworkNoise, NetworkParams, Scalar};
use super::nstep::NStepTransition;
use crate::config::RainbowConfig;
use crate::error::{BvrError, Result};
use crate::mdp::OBS_DIM;

/// A learner minibatch laid out as dense arrays.
#[derive(Clone, Debug)]
pub struct TrainBatch<F> {
    pub obs: Array2<F>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Array2<F>,
    pub gamma_eff: Vec<f64>,
    pub done: Vec<bool>,
    pub is_weights: Vec<f64>,
}

impl<F: Scalar> TrainBatch<F> {
    pub fn from_transitions(transitions: &[NStepTransition], is_weights: &[f64]) -> Self {
        assert_eq!(transitions.len(), is_weights.len());
        let n = transitions.len();
        Self {
            obs: Array2::from_shape_fn((n, OBS_DIM), |(b, i)| F::of(transitions[b].s.0[i])),
            actions: transitions.iter().map(|t| t.a.index()).collect(),
            rewards: transitions.iter().map(|t| t.r).collect(),
            next_obs: Array2::from_shape_fn((n, OBS_DIM), |(b, i)| F::of(transitions[b].s_next.0[i])),
            gamma_eff: transitions.iter().map(|t| t.gamma_eff).collect(),
            done: transitions.iter().map(|t| t.done).collect(),
            is_weights: is_weights.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Bellman targets for a batch: projected distributions (K > 1) or scalar
/// returns (K = 1), plus the scalar target used for TD errors.
#[derive(Clone, Debug)]
pub struct Targets {
    /// batch × atoms; in scalar mode a single column holding y.
    pub dists: Array2<f64>,
    pub scalar: Vec<f64>,
}

/// Double-Q target construction. Online picks a* on s' with fresh noise; the
/// target network evaluates it under independent noise.
pub fn build_targets<F: Scalar, R: Rng + ?Sized>(
    online: &NetworkParams<F>,
    target: &NetworkParams<F>,
    batch: &TrainBatch<F>,
    double_q: bool,
    rng: &mut R,
) -> Result<Targets> {
    let support = &target.support;
    let k = support.len();
    let tgt_noise = NetworkNoise::sample(target, rng);
    let tgt = forward_batch(target, &batch.next_obs, &tgt_noise)?;
    let tgt_q = tgt.q_values(support);
    let selector_q = if double_q {
        let noise = NetworkNoise::sample(online, rng);
        forward_batch(online, &batch.next_obs, &noise)?.q_values(&online.support)
    } else {
        tgt_q.clone()
    };

    let n = batch.len();
    let mut dists = Array2::zeros((n, k));
    let mut scalar = Vec::with_capacity(n);
    for b in 0..n {
        let row: Vec<f64> = selector_q.row(b).iter().map(|v| v.f64()).collect();
        let a_star = super::network::argmax(&row);
        let q_next = tgt_q[(b, a_star)].f64();
        let (r, g, done) = (batch.rewards[b], batch.gamma_eff[b], batch.done[b]);
        scalar.push(if done { r } else { r + g * q_next });
        if k > 1 {
            let probs: Vec<f64> = (0..k).map(|i| tgt.probs[(b, a_star, i)].f64()).collect();
            let mut out = vec![0.0; k];
            support.project_into(&probs, r, g, done, &mut out);
            for (i, m) in out.into_iter().enumerate() {
                dists[(b, i)] = m;
            }
        } else {
            dists[(b, 0)] = scalar[b];
        }
    }
    Ok(Targets { dists, scalar })
}

/// Loss, gradients and the online Q(s, a) for a fixed noise draw and fixed
/// targets. Distributional: weighted mean cross-entropy −Σ m log p. Scalar:
/// weighted mean Huber loss.
pub fn loss_and_gradients<F: Scalar>(
    online: &NetworkParams<F>,
    noise: &NetworkNoise<F>,
    obs: &Array2<F>,
    actions: &[usize],
    weights: &[f64],
    targets: &Targets,
) -> Result<(f64, NetworkParams<F>, Vec<f64>)> {
    let pass = forward_batch(online, obs, noise)?;
    let (n, a, k) = pass.logits.dim();
    let q = pass.q_values(&online.support);
    let inv_n = 1.0 / n as f64;
    let mut dlogits = Array3::<F>::zeros((n, a, k));
    let mut loss = 0.0;
    let mut q_taken = Vec::with_capacity(n);
    for b in 0..n {
        let act = actions[b];
        let w = weights[b];
        q_taken.push(q[(b, act)].f64());
        if k > 1 {
            let logits: Vec<f64> = (0..k).map(|i| pass.logits[(b, act, i)].f64()).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            let mass: f64 = targets.dists.row(b).sum();
            let mut ce = 0.0;
            for i in 0..k {
                let m = targets.dists[(b, i)];
                ce -= m * (logits[i] - lse);
                let p = pass.probs[(b, act, i)].f64();
                dlogits[(b, act, i)] = F::of(w * inv_n * (p * mass - m));
            }
            loss += w * inv_n * ce;
        } else {
            let e = q_taken[b] - targets.scalar[b];
            let huber = if e.abs() <= 1.0 { 0.5 * e * e } else { e.abs() - 0.5 };
            loss += w * inv_n * huber;
            dlogits[(b, act, 0)] = F::of(w * inv_n * e.clamp(-1.0, 1.0));
        }
    }
    let grads = backward(online, noise, &pass, &dlogits);
    Ok((loss, grads, q_taken))
}

pub fn global_norm<F: Scalar>(grads: &NetworkParams<F>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|g| {
            let g = g.f64();
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

/// Adam optimiser state, one moment pair per parameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<F: Scalar>(params: &NetworkParams<F>, cfg: &RainbowConfig) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step<F: Scalar>(&mut self, params: &mut NetworkParams<F>, grads: &NetworkParams<F>, scale: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        let g_tensors = grads.tensors();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(g_tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i].f64() * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let update = self.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                p[i] -= F::of(update);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub loss: f64,
    pub td_errors: Vec<f64>,
    pub grad_norm: f64,
    /// False when every importance weight was zero and no update happened.
    pub applied: bool,
}

/// One gradient update of `online` from a prioritized minibatch.
#[allow(clippy::too_many_arguments)]
pub fn learner_step<F: Scalar, R: Rng + ?Sized>(
    online: &mut NetworkParams<F>,
    target: &NetworkParams<F>,
    adam: &mut Adam,
    batch: &TrainBatch<F>,
    cfg: &RainbowConfig,
    step: u64,
    rng: &mut R,
) -> Result<StepReport> {
    let targets = build_targets(online, target, batch, cfg.double_q, rng)?;
    let noise = NetworkNoise::sample(online, rng);
    let (loss, grads, q_taken) =
        loss_and_gradients(online, &noise, &batch.obs, &batch.actions, &batch.is_weights, &targets)?;
    let td_errors: Vec<f64> = q_taken
        .iter()
        .zip(&targets.scalar)
        .map(|(q, y)| (q - y).abs())
        .collect();

    let grad_norm = global_norm(&grads);
    if !loss.is_finite() || !grad_norm.is_finite() {
        let max_param = online
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.f64().abs())
            .fold(0.0, f64::max);
        let (rmin, rmax) = batch
            .rewards
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(*r), hi.max(*r)));
        return Err(BvrError::NonFiniteLoss {
            step,
            detail: format!(
                "loss={loss} grad_norm={grad_norm} batch={} rewards=[{rmin}, {rmax}] max|param|={max_param} params_finite={}",
                batch.len(),
                online.is_finite()
            ),
        });
    }

    if batch.is_weights.iter().all(|w| *w == 0.0) {
        return Ok(StepReport {
            loss,
            td_errors,
            grad_norm,
            applied: false,
        });
    }
    let scale = if cfg.grad_clip_norm > 0.0 && grad_norm > cfg.grad_clip_norm {
        cfg.grad_clip_norm / grad_norm
    } else {
        1.0
    };
    adam.step(online, &grads, scale);
    Ok(StepReport {
        loss,
        td_errors,
        grad_norm,
        applied: true,
    })
}

/// Hard-copies online into target when `counter` is a multiple of `period`.
pub fn sync_target<F: Scalar>(
    online: &NetworkParams<F>,
    target: &mut NetworkParams<F>,
    counter: u64,
    period: u64,
) -> bool {
    if period > 0 && counter.is_multiple_of(period) {
        target.clone_from(online);
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Observation;
    use crate::tactics::TacticAction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> RainbowConfig {
        RainbowConfig {
            atoms: 5,
            hidden: vec![8],
            learning_rate: 1e-2,
            ..RainbowConfig::default()
        }
    }

    fn transitions(n: usize, seed: u64) -> Vec<NStepTransition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut s = [0.0; OBS_DIM];
                let mut s2 = [0.0; OBS_DIM];
                for j in 0..OBS_DIM {
                    s[j] = rng.random_range(-1.0..1.0);
                    s2[j] = rng.random_range(-1.0..1.0);
                }
                NStepTransition {
                    s: Observation(s),
                    a: TacticAction::from_index(i % 6).unwrap(),
                    r: rng.random_range(-1.0..1.0),
                    s_next: Observation(s2),
                    done: i % 3 == 0,
                    gamma_eff: 0.97,
                }
            })
            .collect()
    }

    #[test]
    fn zero_weights_leave_parameters_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut online = NetworkParams::<f64>::for_env(&cfg(), &mut rng);
        let target = online.clone();
        let mut adam = Adam::new(&online, &cfg());
        let before = online.clone();
        let batch = TrainBatch::from_transitions(&transitions(8, 2), &[0.0; 8]);
        let rep = learner_step(&mut online, &target, &mut adam, &batch, &cfg(), 0, &mut rng).unwrap();
        assert!(!rep.applied);
        assert_eq!(online, before);
    }

    #[test]
    fn repeated_steps_reduce_loss_on_fixed_batch() {
        let c = RainbowConfig {
            noisy: false,
            ..cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut online = NetworkParams::<f64>::for_env(&c, &mut rng);
        let target = online.clone();
        let mut adam = Adam::new(&online, &c);
        let batch = TrainBatch::from_transitions(&transitions(16, 4), &[1.0; 16]);
        let first = learner_step(&mut online, &target, &mut adam, &batch, &c, 0, &mut rng).unwrap();
        let mut last = first.clone();
        for s in 1..200 {
            last = learner_step(&mut online, &target, &mut adam, &batch, &c, s, &mut rng).unwrap();
        }
        assert!(last.loss < first.loss * 0.8, "{} -> {}", first.loss, last.loss);
    }

    #[test]
    fn scalar_mode_learns_too() {
        let c = RainbowConfig::plain_dqn();
        let c = RainbowConfig {
            hidden: vec![8],
            learning_rate: 1e-2,
            ..c
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut online = NetworkParams::<f64>::for_env(&c, &mut rng);
        assert_eq!(online.atoms(), 1);
        let target = online.clone();
        let mut adam = Adam::new(&online, &c);
        let batch = TrainBatch::from_transitions(&transitions(16, 6), &[1.0; 16]);
        let first = learner_step(&mut online, &target, &mut adam, &batch, &c, 0, &mut rng).unwrap();
        let mut last = first.clone();
        for s in 1..200 {
            last = learner_step(&mut online, &target, &mut adam, &batch, &c, s, &mut rng).unwrap();
        }
        assert!(last.loss < first.loss * 0.5);
    }

    #[test]
    fn non_finite_input_is_a_fault() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut online = NetworkParams::<f64>::for_env(&cfg(), &mut rng);
        let target = online.clone();
        let mut adam = Adam::new(&online, &cfg());
        let mut batch = TrainBatch::from_transitions(&transitions(4, 8), &[1.0; 4]);
        batch.obs[(0, 0)] = f64::NAN;
        let err = learner_step(&mut online, &target, &mut adam, &batch, &cfg(), 42, &mut rng).unwrap_err();
        assert!(matches!(err, BvrError::NonFiniteLoss { step: 42, .. }));
    }

    #[test]
    fn target_sync_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let online = NetworkParams::<f32>::for_env(&cfg(), &mut rng);
        let mut target = NetworkParams::<f32>::for_env(&cfg(), &mut rng);
        let old = target.clone();
        assert!(!sync_target(&online, &mut target, 3, 4));
        assert_eq!(target, old);
        assert!(sync_target(&online, &mut target, 8, 4));
        assert_eq!(target, online);
        assert!(sync_target(&online, &mut target, 5, 1));
    }
}
