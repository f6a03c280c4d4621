//! Actor-critic agent around a recurrent m-STPN core, and its training loop.

mod a2c;
mod layers;
mod model;
mod train;

pub use a2c::{
    a2c_update, apply_gradients, clip_global_norm, compute_returns, global_norm, rollout_gradients,
    LinearSchedule, LossConfig, LossSums, Optimizer, OptimizerConfig, Rollout, UpdateMetrics,
};
pub use layers::{Conv2d, ConvSpec, Linear};
pub use model::{
    agent_forward, greedy_action, sample_action, softmax, AgentConfig, AgentModel, AgentStep, Encoder,
    EncoderCache, EncoderConfig,
};
pub use train::{
    init_model, run_episode, train, train_model, write_reward_curve, EnvFactory, EpisodeSummary, Policy, Progress,
    RewardPoint, StepRecord, TrainConfig, TrainOutcome,
};
