//! Model-agnostic interaction detection: ICE and PD curves, REPID trees,
//! rival interaction indices and a seeded simulation harness.

pub mod data;
pub mod dgp;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod indices;
pub mod ice;
pub mod linalg;
pub mod plot;
pub mod predict;
pub mod repid;
pub mod report;
pub mod rng;
pub mod stats;

pub use data::{load_dataset, Dataset, FeatureKind, FeatureMeta, RowMatrix};
pub use error::{Error, ErrorKind, Result};
pub use grid::{make_grid, Grid, GridStrategy};
pub use ice::{center_ice, ice_matrix, pd_curve, IceMatrix, PdCurve};
pub use predict::{Predict, Predictor};
pub use repid::{fit_repid, interaction_report, RepidTree, StopParams};
pub use report::{InteractionReport, Method};
