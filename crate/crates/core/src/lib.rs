//! Hyperspectral image classification by superpixel-wise low-rank
//! restoration with a global discriminability term.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`] holds the matrix operators the solver is assembled from
//!   (soft thresholding, singular value thresholding, nuclear norm and its
//!   subgradient).
//! * [`dlrr`] is the inexact augmented Lagrangian solver that splits a pixel
//!   matrix into a restored part `L` and a sparse variation part `E`, with a
//!   per-superpixel low-rank term and a global discriminability term.
//! * [`superpixel`] segments a cube into superpixels and splits the ones a
//!   classifier marks as noisy.
//! * [`classify`] has the pluggable pixel classifiers and OA/AA/kappa metrics.
//! * [`pipeline`] alternates segmentation and decomposition for a fixed number
//!   of rounds and classifies the final restoration.
//! * [`io`] reads and writes cubes, label rasters, maps and run configs.
//! * [`synthetic`] builds seeded instances with known ground truth.

pub mod classify;
pub mod dlrr;
pub mod error;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod superpixel;
pub mod synthetic;

pub use classify::{ClassifierKind, LabelField, MetricsReport, TrainSplit};
pub use dlrr::{BlockPartition, DlrrParams, DlrrSolution, DlrrSolver, IterationRecord, SolveTrace};
pub use error::{Error, Result};
pub use linalg::{Matrix, SvdFactors};
pub use pipeline::{HsiCube, PipelineConfig, PipelineResult};
pub use superpixel::{BaseImage, SuperpixelPartition};
