//! Tracking of rigid, roughly planar objects that show two faces (obverse and
//! reverse) over the course of a video.
//!
//! The pipeline segments each frame with a k-NN classifier over per-pixel
//! embeddings, estimates the object pose as a homography to the side's
//! ground-truth canonical frame by simulated annealing over a four-component
//! score, and conservatively adapts the classifier while tracking is
//! confident. The crate also ships the matching evaluation protocol, dataset
//! statistics, and a synthetic sequence generator with exact ground truth
//! used as the verification oracle.
//!
//! Entry points:
//! - [`tracker::Tracker`] / [`tracker::run_sequence`] — per-frame pipeline.
//! - [`synth::write_dataset`] — synthetic dataset generation.
//! - [`evalkit`] — IoU protocol and dataset statistics.
//! - [`config::Config`] — all tunables, TOML-backed.

pub mod adaptation;
pub mod config;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod imgproc;
pub mod mask;
pub mod optimizer;
pub mod overlay;
pub mod scoring;
pub mod segmenter;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{Homography, Point2, Rect};
pub use mask::{BinaryMask, Label, LabelImage, Side};
