//! Offline post-processing for UAV building surveys.
//!
//! The crate turns survey by-products (a reconstructed point cloud with
//! camera poses, flight-log telemetry, segmentation masks and nadir image
//! sequences) into metric inspection quantities:
//!
//! * distances between adjacent buildings ([`distance`]), built on
//!   euclidean clustering and piecewise RANSAC plane search ([`planes`]);
//! * the metric scale of the reconstruction from time-synced flight logs
//!   ([`scale`]);
//! * roof plan area and rooftop object occupancy ([`roof`]) from binary
//!   masks ([`imaging`]);
//! * a stitched roof mosaic from chained affine transforms ([`stitching`]).
//!
//! [`synth`] produces deterministic fixtures with known ground truth and
//! [`report`] ties every result into one JSON report.
//!
//! Hot loops run on rayon when the `parallel` feature is enabled (default);
//! see [`Exec`].

pub mod cloud;
pub mod distance;
pub mod error;
pub mod geometry;
pub mod imaging;
mod par;
pub mod planes;
pub mod report;
pub mod roof;
pub mod scale;
pub mod stitching;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
pub use geometry::{Axis, Plane, Pose, Vec3};
pub use par::Exec;
