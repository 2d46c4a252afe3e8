//! Replication harness: experiment configs, seeded runs and RMSE tables.

pub mod config;
pub mod run;
pub mod table;

pub use config::{BanditSection, DatasetSource, Domain, EnvKind, ExperimentConfig, FeatureKind, Method, PaperScale, RlSection};
pub use run::{bandit_dataset, rl_base_policy, run_replications, run_replications_with_threads, Experiment, Replication, Setting};
pub use table::{parse_csv, rmse, FailureRecord, RmseTable, TableFormat, TableRow};
