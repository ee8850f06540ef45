//! Service configuration, read from TOML.
//!
//! Every tolerance and default lives here. Environment variables may replace
//! provider endpoints (and nothing else):
//!
//! | variable               | provider    |
//! |------------------------|-------------|
//! | `QSR_CAPTION_ENDPOINT` | captions    |
//! | `QSR_EMBED_ENDPOINT`   | embeddings  |
//! | `QSR_LLM_ENDPOINT`     | llm         |
//!
//! Setting one switches that provider to HTTP at the given base URL.

use std::path::{Path, PathBuf};

use qsr_core::embedding::IndexConfig;
use qsr_core::lifting::LiftingConfig;
use qsr_core::nav::{GridConfig, PlannerConfig};
use qsr_core::query::QueryConfig;
use qsr_core::scene_graph::ConsolidationParams;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionConfig {
    /// Views handed to the caption provider per object.
    pub views_per_object: usize,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        Self { views_per_object: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Only object pairs with centroids this close are related per frame.
    pub pair_radius: f64,
    /// Edges between centroids farther apart than this are pruned.
    pub prune_distance: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            pair_radius: 1.5,
            prune_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    #[default]
    None,
    /// Deterministic provider backed by a JSON mapping file.
    Fixture { path: PathBuf },
    Http {
        endpoint: String,
        /// Vector length; required for embedding endpoints.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dimension: Option<usize>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationSource {
    /// Above / below / next-to from bounding boxes.
    #[default]
    Geometric,
    /// Ask the configured LLM for each pair.
    Llm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    pub captions: ProviderSpec,
    pub embeddings: ProviderSpec,
    pub llm: ProviderSpec,
    pub relations: RelationSource,
    pub http: HttpConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub lifting: LiftingConfig,
    pub captions: CaptionConfig,
    pub graph: GraphConfig,
    pub index: IndexConfig,
    pub query: QueryConfig,
    pub grid: GridConfig,
    pub planner: PlannerConfig,
    pub consolidation: ConsolidationParams,
    pub providers: ProvidersConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads a config file. Relative fixture paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in [
            &mut cfg.providers.captions,
            &mut cfg.providers.embeddings,
            &mut cfg.providers.llm,
        ] {
            if let ProviderSpec::Fixture { path } = spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies endpoint overrides from `lookup` (normally the process
    /// environment).
    pub fn with_endpoint_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        let slots = [
            ("QSR_CAPTION_ENDPOINT", &mut self.providers.captions),
            ("QSR_EMBED_ENDPOINT", &mut self.providers.embeddings),
            ("QSR_LLM_ENDPOINT", &mut self.providers.llm),
        ];
        for (var, spec) in slots {
            if let Some(endpoint) = lookup(var).filter(|v| !v.trim().is_empty()) {
                let dimension = match spec {
                    ProviderSpec::Http { dimension, .. } => *dimension,
                    _ => None,
                };
                *spec = ProviderSpec::Http { endpoint, dimension };
            }
        }
        self
    }

    pub fn with_env_overrides(self) -> Self {
        self.with_endpoint_overrides(|k| std::env::var(k).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.graph.prune_distance, 1.0);
        assert_eq!(cfg.lifting.dbscan.min_pts, 10);
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let cfg = Config::from_toml(
            r#"
            [graph]
            pair_radius = 2.0
            [grid]
            cell_size = 0.1
            [providers.embeddings]
            kind = "http"
            endpoint = "http://localhost:9000"
            dimension = 512
            "#,
        )
        .unwrap();
        assert_eq!(cfg.graph.pair_radius, 2.0);
        assert_eq!(cfg.graph.prune_distance, 1.0);
        assert_eq!(cfg.grid.cell_size, 0.1);
        assert!(matches!(cfg.providers.embeddings, ProviderSpec::Http { dimension: Some(512), .. }));
    }

    #[test]
    fn env_overrides_touch_endpoints_only() {
        let cfg = Config::default().with_endpoint_overrides(|k| (k == "QSR_LLM_ENDPOINT").then(|| "http://llm:1".to_string()));
        assert_eq!(
            cfg.providers.llm,
            ProviderSpec::Http {
                endpoint: "http://llm:1".into(),
                dimension: None
            }
        );
        assert_eq!(cfg.providers.captions, ProviderSpec::None);
        assert_eq!(cfg.graph, GraphConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_by_type() {
        assert!(Config::from_toml("[graph]\npair_radius = \"far\"").is_err());
    }
}
