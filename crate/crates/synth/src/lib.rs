//! Synthetic indoor scenes with exact ground truth.
//!
//! A [`SceneRecipe`] describes a box-shaped room, a handful of primitive
//! objects and a ring of cameras. [`generate_bundle`] samples surface points,
//! ray-casts depth, panoptic masks and RGB for every camera, and writes a
//! standard scene bundle together with a `ground_truth.json` file. Everything
//! is a pure function of the recipe and the seed.
//!
//! The [`oracles`] module holds slow, obviously-correct reference versions of
//! the core algorithms, used by tests to check the fast ones.

// Validation code writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fixtures;
pub mod generate;
pub mod oracles;
pub mod raycast;
pub mod recipe;
pub mod truth;

pub use generate::{generate_bundle, generate_scene, GeneratedScene, GROUND_TRUTH_FILE};
pub use recipe::{CameraRing, NoiseSpec, ObjectSpec, Room, SceneRecipe, Shape};
pub use truth::{oracle_relations, GroundTruth, GtObject, OracleRelation};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid recipe: {0}")]
    Recipe(String),
    #[error(transparent)]
    Core(#[from] qsr_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;
