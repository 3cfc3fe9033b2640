//! File formats, Monte Carlo reports, SVG rendering and the command-line
//! driver for [`riskmdp_core`].
//!
//! - [`io`]: `mdp.json` / `grid.json` and the 12-significant-digit output
//!   convention.
//! - [`manifest`]: run manifests and their hashes.
//! - [`evaluate`]: parallel Monte Carlo and Table-1 CSVs.
//! - [`render`]: static SVG heatmaps with policy arrows.
//! - [`cli`]: the `riskmdp` subcommands.

pub mod cli;
pub mod evaluate;
pub mod io;
pub mod manifest;
pub mod render;

pub use riskmdp_core as core;
