//! Selection evaluation: clustering, metrics and grid search.

pub mod grid;
pub mod kmeans;
pub mod metrics;

pub use grid::{evaluate_selection, grid_run, CellRecord, ClusterMetrics, ClusterProtocol, GridReport, GridSpec, Method, MethodSpec};
pub use kmeans::{encode_features, kmeans, Points};
pub use metrics::{clustering_acc, kuhn_munkres_map, nmi, poc, potc};
