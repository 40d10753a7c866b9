//! Configuration-file front end: parse run configurations, dispatch the
//! engines and oracles, and write reproducible tabular or structured outputs
//! together with a run manifest.

mod config;
mod plot;
mod run;

pub use config::{
    build_system, parse_config, resolve_and_validate, resolve_observable,
    resolve_single_operator, ConfigError, CorrelateConfig, CountingConfig, HomodyneTaskConfig,
    ModelConfig, Observable, OutputConfig, RunConfig, StateSpec, Task, WaitingTaskConfig,
};
pub use plot::emit_plot_script;
pub use run::{config_from_manifest, events_file, run, RunError, RunReport};
