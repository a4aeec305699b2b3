//! Spatial statistics for collision hotspot detection.
//!
//! The pipeline maps point events to polygon zones, builds a k-nearest
//! neighbor weights graph over zone centroids, and runs global and local
//! Moran's I with permutation inference to label LISA clusters. Severity is
//! analysed through an Empirical Bayes Index of smoothed rates, and event
//! density through a Gaussian kernel raster.

pub mod autocorr;
pub mod ebi;
pub mod error;
pub mod geojson;
pub mod geometry;
pub mod ingest;
pub mod kde;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod temporal;
pub mod weights;

pub use error::{Error, ErrorKind, Result};
