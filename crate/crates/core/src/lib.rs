//! Botnet detection over NetFlow features: dimension reduction (autoencoder,
//! variational autoencoder, PCA), KNN graph construction, and a multi-head
//! graph-attention classifier, with the evaluation tooling around them.

pub mod autodiff;
pub mod dataset;
pub mod dimred;
pub mod error;
pub mod eval;
pub mod gat;
pub mod graph;
pub mod matrix;
pub mod pipeline;

pub use autodiff::{AdamState, Checkpoint, DenseLayer, ParamStore, Tape, Tensor, Var};
pub use dataset::{FlowDataset, LabelMap, Scaler, Split, SplitSpec};
pub use dimred::{Reducer, ReducerKind, TrainConfig};
pub use error::{Error, ErrorClass, Result};
pub use eval::{
    classification_report, cost_estimate, ClassificationReport, CostEstimate, CostInputs,
};
pub use gat::{GatArchitecture, GatModel, GatTrainConfig, RoleMasks};
pub use graph::{build_knn_graph, KnnGraph, Metric};
pub use matrix::FeatureMatrix;
pub use pipeline::{run_grid, run_pipeline, PipelineConfig, SynthSpec};
