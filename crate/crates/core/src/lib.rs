//! Multiscale shared-structure learning for scalar-on-function regression.

pub mod artifact;
pub mod error;
pub mod fdata;
pub mod filtpls;
pub mod forest;
pub mod fusionpath;
pub mod io;
pub(crate) mod linalg;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod simgen;

pub use artifact::FORMAT_VERSION;
pub use error::{Error, Result};
pub use fdata::{Curve, CurveSet, Dataset, Grid, PreparedData, ResponseVector, Standardization};
pub use filtpls::{run_filtration, LayerFit, StopReason, StoppingConfig};
pub use forest::{CandidateSet, Forest, GicConfig, McCvConfig};
pub use fusionpath::{compute_path, FusionConfig, GroupingPath, GroupingStructure, Penalty};
pub use model::{coefficient_cis, pss_table, FittedModel, SharedLayerMatrix};
pub use pipeline::{fit_filtrated, PipelineConfig, Session, StructureReport};
pub use simgen::{gen_dataset, run_experiment, Decay, ExperimentConfig, ExperimentReport, Method, SimConfig};
