//! Graph spatiotemporal neural CDE forecasting and forecast-only anomaly
//! scoring for multivariate time series with missing values.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, checkpoints and
//! the command-line driver live in the `gstpro` companion crate.
//!
//! Pipeline, bottom to top:
//!
//! * [`series`]: datasets with observation masks, normalization, windows.
//! * [`spline`]: natural cubic spline control paths over each window.
//! * [`autodiff`]: a reverse-mode tape over dense matrices.
//! * [`model`]: the coupled spatial/temporal CDE forecaster.
//! * [`train`]: masked L1 training with Adam and early stopping.
//! * [`scoring`]: the rolling Gaussian scorer plus PCA and k-means baselines.
//! * [`metrics`]: ROC-AUC and average precision.
//! * [`pipeline`]: mask, train, score and evaluate in one call.
#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod series;
pub mod solver;
pub mod spline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
