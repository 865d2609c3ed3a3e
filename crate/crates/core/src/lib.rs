//! Multi-granularity open-set classification with granular balls.
//!
//! Labeled vectors are clustered into granular balls by purity-driven
//! splitting ([`cluster_adaptive`]). The quality-filtered balls act as
//! sub-centroids for representation learning ([`train_hrl`]) and as spheres
//! of a multi-granularity decision boundary at inference
//! ([`classify_open`]): a query that falls outside every sphere is reported
//! as the unknown class `K + 1`.

pub mod ball;
pub mod boundary;
pub mod cluster;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod metric;
pub mod objective;
pub mod params;
pub mod split;
pub mod synth;
pub mod train;

pub use ball::{BallStats, GranularBall};
pub use boundary::{
    build_boundaries, build_single_boundary_baseline, classify_closed, classify_dataset,
    classify_open, classify_open_with, Boundary, BoundaryModel, ClassBoundaries, InferenceRule,
    OpenSetPrediction,
};
pub use cluster::{cluster_adaptive, ClusterReport, ClusterResult};
pub use data::{Dataset, Label, LabeledVector, Stage};
pub use encoder::{DenseEncoder, EncoderCheckpoint};
pub use error::{Error, FormatErrorKind, Result};
pub use eval::{evaluate, EvalReport};
pub use experiment::{
    run_experiment, Ablation, DatasetSource, ExperimentConfig, ExperimentOutcome, Sweep, SweepParam,
};
pub use io::{decode_gbem, encode_gbem, load_embeddings, save_embeddings};
pub use metric::{distance, Metric};
pub use objective::{grad_loss, loss_gb};
pub use params::HyperParams;
pub use split::{split_designated, split_open, OpenSplit, SplitFractions};
pub use synth::{gen_synthetic, Family, SyntheticSpec};
pub use train::{train_ce_baseline, train_hrl, CeOutcome, HrlOutcome};
