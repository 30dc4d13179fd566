//! Tessellation-comparison pipeline for spatio-temporal demand forecasting.
//!
//! A city is partitioned either into Voronoi cells around K-Means centroids of
//! the demand points or into level-6 geohash cells. Events are binned per
//! region, each region's series is joined with its most correlated
//! first-order neighbors, a small LSTM (tuned by a Tree-structured Parzen
//! Estimator) forecasts the final day, and both partitions are scored with
//! SMAPE, MASE and RMSE.

pub mod error;
pub mod experiment;
pub mod features;
pub mod forecaster;
pub mod geo;
pub mod hyperopt;
pub mod ingest;
pub mod metrics;
pub mod seed;
pub mod synthetic;
pub mod tessellation;

pub use error::{Error, ErrorCategory, Result};

pub use experiment::{ExperimentConfig, Report};
pub use features::{FeatureTensor, NeighborMap, SeriesMatrix, SplitSpec};
pub use forecaster::{Activation, HyperParams, OptimizerKind, TrainConfig, TrainedModel};
pub use geo::{GeoBBox, LatLon};
pub use ingest::{EventSet, GpsEvent, Schema, TimeWindow};
pub use tessellation::{Tessellation, TessellationKind};
