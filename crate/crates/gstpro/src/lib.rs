//! File formats, checkpoints and the `gstpro` command-line driver on top
//! of [`gstpro_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod io;
