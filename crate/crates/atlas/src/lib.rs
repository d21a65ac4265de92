//! Catalog, rendering and HTTP service for tumor/TIL prediction maps, plus
//! the `tilmap` command line.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod render;
pub mod service;
pub mod stats;
pub mod synth;
pub mod tiles;

pub use error::{AtlasError, Result};
pub use tilmap_core;
