//! Config-driven experiment runner: a flat `key = value` config format
//! with `sweep.<key> = a,b` grid axes, synthetic data generation, and CSV
//! artifact emission.
//!
//! ```text
//! mode = federated
//! model = gcn
//! privacy.epsilon = 0.5
//! synthetic.classes = 3
//! sweep.model = gcn,ffn
//! ```

mod config;
mod run;

pub use config::{
    parse_config, resolve, DataConfig, DataSource, ExperimentConfig, Mode, PrivacyConfig,
    RawConfig, SyntheticConfig, TestbedConfig, TrainingConfig,
};
pub use run::{
    expand, generate_dataset, median, model_spec, planned_releases, prepare_clients, privacy_spec,
    run_cell, run_experiment, run_replicate, run_testbed, CellOutcome, ReplicateResult, Summary,
    SUMMARY_HEADER,
};

#[cfg(test)]
mod tests;
