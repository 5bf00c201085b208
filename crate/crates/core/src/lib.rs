//! eigengaze: attention-weighted face-space construction.
//!
//! Builds face spaces from image datasets three ways — standard principal
//! components, feature-based weighting of individual pixels by a spatial
//! attention map (wPCA), and pattern-based re-ranking of standard
//! components by how well they align with the map as a whole (dPCA) — and
//! evaluates them with a nearest-class-mean Mahalanobis classifier under
//! cross-validated component sweeps, with random attention maps as control
//! conditions.
//!
//! Modules follow the pipeline:
//!
//! * [`datamodel`] — manifests, grayscale rasters, flattening, centering.
//! * [`attention`] — fixation filtering, duration heat maps, normalized
//!   attention maps and random controls.
//! * [`facespace`] — the three fits (snapshot method), projection,
//!   reconstruction, serialization.
//! * [`classify`] — Mahalanobis nearest-class-mean with equal priors.
//! * [`harness`] — stratified folds, component sweeps, Wilcoxon paired
//!   tests, summary statistics.
//! * [`synth`] — the synthetic informative-patch benchmark generator.

pub mod attention;
pub mod classify;
pub mod datamodel;
pub mod error;
pub mod facespace;
pub mod harness;
pub mod synth;

pub use error::{Error, Result};
