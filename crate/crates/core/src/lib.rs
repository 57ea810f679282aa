//! Simulator of N-stage coherent optical pulse stacking, packaged as an
//! episodic control environment with reference controllers.

pub mod baselines;
pub mod binding;
pub mod config;
pub mod env;
pub mod field;
pub mod noise;
pub mod stacking;
pub mod trajectory;

pub use config::StackConfig;
pub use env::{
    compute_reward, init_delays, EnvConfig, EnvError, Mode, Observation, OpsEnv, RenderFrame, Split,
    StepInfo, Transition,
};
pub use field::{apply_delay, pulse_energy, FieldError, FieldGrid};
pub use stacking::{
    make_pulse_train, optimal_delays, reference_energies, stack_all, stack_stage, DelayVector,
    PulseGroups, ReferenceEnergies,
};
pub use noise::{drift_mean, sample_noise, DriftKnot, NoiseConfig, NoiseDraw, NoiseProcess};
pub use baselines::{grid_oracle, random_agent, run_episode, spgd_optimize, spgd_step, Controller, GridScan, Objective, RandomController, SpgdConfig, SpgdController, ZeroController};
pub use trajectory::{EpisodeOutcome, RunSummary, TrajectoryRecord};
