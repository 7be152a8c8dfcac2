//! Storage, reporting and command-line support for [`treff_core`].
//!
//! * [`format`](mod@format): the TREFFEMB embedding container,
//! * [`params`]: adapter parameters on disk,
//! * [`dataset`]: loading audio and text embedding files,
//! * [`eval`]: episode-parallel evaluation,
//! * [`manifest`] and [`report`]: reproducible JSON and CSV outputs,
//! * [`cli`]: the `treff` binary.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod format;
pub mod manifest;
pub mod params;
pub mod report;

pub use treff_core as core;
