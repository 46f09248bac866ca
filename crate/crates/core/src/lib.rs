//! Extended-landmark mapping from cluttered 2-D detections.
//!
//! Detections of elliptical landmarks are grouped into cells by a collapsed
//! Gibbs sampler over measurement partitions. Each cell carries a
//! normal-inverse-Wishart/gamma posterior over landmark position, extent and
//! detection rate, so the unknown landmark parameters never enter the chain.

pub mod conjugacy;
pub mod enumerate;
pub mod error;
pub mod gating;
pub mod io;
pub mod metrics;
pub mod model;
pub mod estimation;
pub mod partition;
pub mod sampler;
pub mod scenario;
pub mod undetected;

pub use error::{Error, Result};
