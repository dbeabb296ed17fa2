//! Pavement survey processing: camera/LiDAR calibration, trajectory fusion
//! and georeferencing, road metrics (IRI, MPD, crossfall), surface
//! detection, and agreement checks between survey systems.
//!
//! [`synthgen`] builds inputs with exactly known ground truth for every
//! stage. The `pavekit` binary drives the same functions through [`cli`].

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod camera;
pub mod cli;
pub mod detection;
pub mod error;
pub mod georef;
pub mod harmonization;
pub mod io;
pub mod lm;
pub mod metrics;
pub mod synthgen;

pub use error::{Error, Result};

// Every guide chapter and the README compile and run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/georeferencing.md")]
    mod georeferencing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/harmonization.md")]
    mod harmonization {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
