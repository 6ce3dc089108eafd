//! File formats, datasets, parallel rendering, fine-tuning, evaluation, the
//! render service and the `fpo` command line, built on `fpo-core`.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod format;
pub mod imageio;
pub mod parallel;
pub mod pipeline;
pub mod service;
pub mod train;
