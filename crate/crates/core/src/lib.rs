//! Preprocessing and evaluation toolkit for small-defect detection on large
//! grayscale scans: foreground cropping, overlapping tiling with annotation
//! projection, dataset balancing and grouped splits, anchor-shape
//! optimization by differential evolution, detection merging and metrics,
//! and a synthetic-data kit for end-to-end testing.
//!
//! Everything seeded is bit-reproducible: the same inputs, parameters, and
//! seed yield identical outputs on every run and platform.

pub mod anchor_opt;
pub mod cropper;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod gray;
pub mod synthkit;
pub mod tiler;
