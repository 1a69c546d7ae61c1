//! Boundless DAS: counterfactual data, the training loop, IIA evaluation,
//! sweeps over sites, and boundary dynamics.

mod config;
mod dataset;
mod dynamics;
mod sweep;
mod train;

pub use config::TrainConfig;
pub use dataset::{
    counterfactual_label, gen_counterfactual_dataset, gen_counterfactual_dataset_with, CounterfactualExample, Sampling,
};
pub use dynamics::{
    boundary_dynamics, log_to_csv, snapped_width, write_log_csv, AlignmentClass, BoundaryDynamics, DynamicsPoint,
};
pub use sweep::{sweep, HeatmapCell, IIAHeatmap, SweepResult, SweepRun};
pub use train::{
    eval_alignment, eval_iia, eval_prepared, objective_on_tape, train_alignment, LogEntry, PreparedSet, TrainOutcome,
};
