//! Interactive evolution of small tile maps.
//!
//! A per-tileset convolutional scorer (the aesthetic prediction model) learns
//! from A-vs-B poll vote shares over sliding 4×4 windows; a μ+λ evolutionary
//! search uses it as fitness to produce maps meant to win future polls. A
//! synthetic voter built from tile entropy and tile-pattern KL divergence
//! stands in for live voters during pretraining and simulation.

pub mod apm;
pub mod corpus;
pub mod evolve;
pub mod experiments;
pub mod pollhub;
pub mod render;
pub mod synthvoter;
pub mod tilemap;
pub mod tileset;
pub mod util;

pub use tilemap::{Grid, MapSubmission, Origin, PatternLibrary, TileMap};
pub use tileset::{Registry, Tileset};
