//! Queryable 3D scene representation.
//!
//! The pipeline lifts per-frame panoptic masks onto a point cloud
//! ([`lifting`]), captions each object ([`captions`]), assembles an
//! attributed scene graph ([`scene_graph`]), indexes object crops and node
//! documents by embedding ([`embedding`]) and answers descriptive,
//! affordance and negation queries over both ([`query`]). [`nav`] plans
//! paths to retrieved objects on an occupancy grid and [`eval`] scores
//! query suites.

// Validation code writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod canonical;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod captions;
pub mod geometry;
pub mod imaging;
pub mod lifting;
pub mod nav;
pub mod prompts;
pub mod query;
pub mod scene_graph;
pub mod spatial;

pub use error::{Error, Result};
