//! Window-state modeling toolkit.
//!
//! The crate covers the full pipeline for data-driven window opening models
//! in office buildings:
//!
//! * [`timeseries`]: CSV ingestion, weather join, resampling, imputation,
//!   feature scaling and sample construction with lagged features.
//! * [`segmentation`]: per-office behavioral profiles, Ward clustering and
//!   an exact t-SNE projection.
//! * [`nn`]: a feed-forward binary classifier trained with minibatch
//!   proximal Adagrad and L1 shrinkage, plus checkpoint persistence.
//! * [`metrics`]: confusion matrices, rates, F1, ROC/AUC and window behavior
//!   indicators (fraction open, actions per day, open/closed durations).
//! * [`hypersearch`]: grid and random search and the repeated-seed study.
//! * [`adaptation`]: continued training on a new building.
//! * [`cosim`]: a lumped single-zone thermal/CO2 model in closed loop with a
//!   window model, and a line protocol for external simulators.
//! * [`synth`]: synthetic weather and occupant data with known behavior rules.

pub mod adaptation;
pub mod cli;
pub mod cosim;
pub mod error;
pub mod hypersearch;
pub mod metrics;
pub mod nn;
pub mod segmentation;
pub mod synth;
pub mod timeseries;
pub(crate) mod util;

pub use error::{Error, Result};
