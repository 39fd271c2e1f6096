//! Experiment configuration, runner, sweeps, and report emission.

mod config;
mod experiment;
mod sweep;

pub use config::{
    defaults, load_config, parse_config, serialize_config, AttackerConfig, ConfigError,
    DataSource, EvalCadence, ExperimentConfig, TriggerKind,
};
pub use experiment::{run_experiment, ExperimentOutput, PersistenceRow, RunError, StealthRow};
pub use sweep::{
    ablate_replay, apply_sweep_value, sweep, without_replay_config, AblationOutput, SweepError,
    SweepOutput, SweepParam, SweepRow,
};
