//! Aesthetic prediction model: a small CNN that maps a 4×4 one-hot tile
//! window to a predicted vote share, plus the whole-map baseline network.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod network;

use thiserror::Error;

pub use checkpoint::{list_versions, load_checkpoint, load_latest, save_checkpoint, version_dir, CheckpointManifest};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{
    build_apm, build_post_network, build_training_set, map_samples, score_map_post, train_post,
    train_update, ApmModel, PostModel, Tally, TrainConfig, TrainingSample, POST_SIZES,
};
pub use network::Network;

#[derive(Debug, Error, PartialEq)]
pub enum ApmError {
    #[error("model is for tileset {0:?}, map uses {1:?}")]
    TilesetMismatch(String, String),
    #[error("expected input of {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("poll has no votes")]
    EmptyPoll,
    #[error("no training samples")]
    EmptySamples,
    #[error("loss or weights became non-finite")]
    NonFiniteLoss,
    #[error("fixed-input network supports sizes 6 and 10, not {0}")]
    UnsupportedSize(usize),
    #[error("network expects {expected}x{expected} maps, got {got}x{got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("no checkpoint at {0}")]
    MissingCheckpoint(String),
    #[error("checkpoint {path} already holds different weights for version {version}")]
    VersionExists { path: String, version: u64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ApmError {
    fn from(e: std::io::Error) -> Self {
        ApmError::Io(e.to_string())
    }
}
