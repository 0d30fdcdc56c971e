//! Classification metrics, utility loss, embedding export, and a quadratic
//! testbed for the federated convergence bound.

mod metrics;
mod testbed;

pub use metrics::{
    accuracy, confusion, export_embeddings, f1_score, macro_f1, utility_loss, ConfusionMatrix,
    F1Average,
};
pub use testbed::{
    fit_geometric_ratio, quadratic_testbed, theoretical_floor, ConvergenceBoundParams, Trajectory,
};
