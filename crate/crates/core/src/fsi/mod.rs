//! Experiment protocols, aggregation and reporting.

pub mod project;
pub mod protocol;
pub mod report;
pub mod stats;

pub use project::{project_2d, write_projection, ProjectedPoint};
pub use protocol::{
    full_data_augment, generate, generated_count, run_fsi, seed_sweep, ExperimentResult, FullDataSpec,
    GeneratorConfigs, SimulationSpec, TrainedGenerators,
};
pub use report::{markdown_table, read_rows, result_rows, results_from_rows, sweep_table, write_rows, ResultRow};
pub use stats::{aggregate, format_mean_sd, spearman, AggregateResult, AugSize, Summary};
