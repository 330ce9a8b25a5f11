//! Provable fairness analysis for feed-forward ReLU classifiers.
//!
//! The pipeline: exact input-space region enumeration for a trained network,
//! polytope geometry (feasibility, vertex enumeration, volume), histogram
//! density integration, and the fairness metrics built on top of them
//! (weighted symmetric difference, volumetric symmetric difference, net
//! preference). A fairness-aware training harness with four strategies
//! (baseline, permuted protected feature, iterative removal, iterative
//! augmentation) rounds out the toolkit.

pub mod density;
pub mod fairtrain;
pub mod geometry;
pub mod metrics;
pub mod model_io;
pub mod reach;

pub use model_io::{Dataset, FeatureSchema, FeatureSpec, FeedForwardNetwork};

