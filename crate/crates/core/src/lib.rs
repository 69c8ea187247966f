//! Inspection path planning from depth-camera point clouds.

pub mod acquisition;
pub mod cli;
pub mod cloud;
pub mod clustering;
pub mod config;
pub mod eigen;
pub mod error;
pub mod geom;
pub mod hull;
pub mod io;
pub mod pipeline;
pub mod profile;
pub mod server;
pub mod spatial;
pub mod synth;
pub mod target;
pub mod visibility;

pub use error::{Error, Result};
