//! Semi-supervised self-organizing map whose nodes learn their own receptive
//! fields from bias-corrected moving averages of the observed distances, plus
//! the dataset, metric and sweep tooling used to evaluate it.

pub mod cli;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod learning;
pub mod metrics;
mod persist;
pub mod som;

pub use datasets::{make_folds, mask_labels, parse_arff, parse_csv, rescale_minmax, Dataset, FoldPlan};
pub use error::{Error, Result};
pub use learning::{fit, fit_with, StepKind, TrainStepOutcome};
pub use metrics::{accuracy, clustering_error, optimal_assignment, ContingencyTable};
pub use som::{ClassId, Node, NodeId, Params, Phase, SomModel};
