//! Data generation, file loading, experiment orchestration, and output
//! emission.

pub mod cifar;
pub mod dataset;
pub mod experiment;
pub mod idx;
pub mod plot;

pub use cifar::{load_cifar10, CIFAR_CAT, CIFAR_DOG};
pub use dataset::{gen_gaussian, gen_smooth, Dataset};
pub use experiment::{
    measure_dataset, parse_csv, run_experiment, run_experiment_rows, write_csv, DataSource,
    ExperimentConfig, ExperimentId, ResultRow, CSV_HEADER,
};
pub use idx::load_idx;
pub use plot::{emit_plot, render_plot, PlotSpec};
