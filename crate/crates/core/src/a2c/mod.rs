//! Advantage actor-critic written against a flat `f64` parameter vector.

pub mod checkpoint;
pub mod evaluate;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod returns;
pub mod train;
pub mod update;

pub use checkpoint::Checkpoint;
pub use evaluate::{evaluate, GreedyAgent, SamplingAgent};
pub use optim::{clip_grad_norm, global_norm, Adam};
pub use policy::{ActorCritic, MaskedCategorical, DEFAULT_HIDDEN};
pub use returns::compute_returns;
pub use train::{train, EarlyStop, EvalPoint, TrainConfig, TrainOutcome};
pub use update::{a2c_update, loss, loss_and_grad, Batch, LossBreakdown, LossConfig};
