//! Scene ingestion, build orchestration and the REST service.
//!
//! [`pipeline::build_scene`] turns a scene bundle into derived artifacts
//! (instance labeling, captions, scene graph, embedding index, occupancy
//! grid) cached under the bundle's `derived/` directory, and
//! [`api::router`] serves the result.

pub mod api;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod providers;

pub use api::{router, serve, AppState};
pub use config::Config;
pub use error::{Result, ServiceError};
pub use pipeline::{build_scene, BuildOptions, BuildReport, SceneState, Stage, StageStatus};
pub use providers::Providers;
