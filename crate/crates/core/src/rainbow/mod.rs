//! Rainbow-style distributional Q-learning: categorical return distributions,
//! noisy dueling MLP, n-step returns, prioritized replay and the learner
//! update.

mod checkpoint;
mod distribution;
mod learner;
mod network;
mod nstep;
mod replay;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use distribution::{project_target, q_values, Support, ValueDistribution};
pub use learner::{
    build_targets, global_norm, learner_step, loss_and_gradients, sync_target, Adam, StepReport, Targets,
    TrainBatch,
};
pub use network::{
    action_values, action_values_with, argmax, backward, forward, forward_batch, select_action, ForwardPass, Layer, LayerKind,
    LayerNoise, NetworkNoise, NetworkParams, NoiseMode, Scalar,
};
pub use nstep::{accumulate_nstep, NStepBuffer, NStepTransition};
pub use replay::{priority_from_td, PrioritizedReplay, ReplayEntry, ReplaySample, SumTree};
