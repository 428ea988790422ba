//! OOD-aware evaluation for 2D object detection.
//!
//! Detections are bucketed into ID foreground, OOD and ID background by two
//! confidence thresholds, counted in an extended confusion matrix and
//! summarised by OBS, OFS and their weighted harmonic mean, Separability.
//! The crate also carries the margin entropy loss with analytic gradients and
//! a small synthetic training lab that exercises it end to end.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod matching;
pub mod meloss;
pub mod metrics;
pub mod taxonomy;
pub mod toylab;

pub use error::{Error, Result};
pub use geometry::{intersection_area, iop, iou, BoundingBox};
pub use matching::{
    match_image, GroundTruthObject, MatchConfig, MatchResult, ObjectKind, Prediction,
};
pub use metrics::{obs, ofs, separability, ConfidenceHistogram, SeparabilityScores};
pub use taxonomy::{
    accumulate, classify, ExtendedConfusionMatrix, PredictedCategory, ThresholdConfig,
};
