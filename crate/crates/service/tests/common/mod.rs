#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use qsr_core::bundle::SceneBundle;
use qsr_service::{build_scene, AppState, BuildOptions, Config, Providers, SceneState};
use qsr_synth::{fixtures, generate_bundle, GroundTruth, SceneRecipe};
use serde_json::Value;
use tower::ServiceExt;

pub fn repo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture_config() -> Config {
    Config::load(&repo_dir().join("fixtures/qsr.toml")).expect("fixture config")
}

pub fn living_room(dir: &Path) -> (SceneBundle, GroundTruth) {
    generate_bundle(&fixtures::living_room(), 7, dir).expect("living room bundle")
}

/// A room split by a full-width partition, with a crate behind it.
pub fn sealed_room_recipe() -> SceneRecipe {
    SceneRecipe::from_json(
        r#"{
          "scene_id": "sealed_room",
          "room": { "min": [-3.0, -2.0, 0.0], "max": [4.0, 2.0, 2.6] },
          "objects": [
            { "class": "partition", "shape": { "kind": "box", "center": [1.5, 0.0, 0.8], "size": [0.2, 4.0, 1.6] }, "color": [200, 30, 30] },
            { "class": "crate", "shape": { "kind": "box", "center": [3.0, 0.0, 0.45], "size": [0.4, 0.4, 0.5] }, "color": [139, 90, 43] }
          ],
          "cameras": { "count": 10, "radius": 1.5, "height": 2.5, "center": [1.5, 0.0], "look_at": [1.5, 0.0, 0.0] }
        }"#,
    )
    .expect("sealed room recipe")
}

pub fn build(bundle: &SceneBundle, config: &Config) -> SceneState {
    let providers = Providers::from_config(&config.providers).expect("providers");
    build_scene(bundle, config, &providers, BuildOptions::default()).expect("build")
}

pub fn app(config: Config, states: Vec<SceneState>) -> Arc<AppState> {
    let providers = Providers::from_config(&config.providers).expect("providers");
    Arc::new(AppState::new(config, providers, states))
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", String::from_utf8_lossy(&self.bytes)))
    }
}

pub async fn call(router: &Router, method: &str, uri: &str, body: Option<&Value>) -> Reply {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(b).unwrap()))
            .unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = router.clone().oneshot(req).await.expect("router is infallible");
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, bytes }
}

pub async fn call_raw(router: &Router, method: &str, uri: &str, body: &str) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, bytes }
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let path = repo_dir().join("docs/schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Validation errors of `value` against a shipped schema, as strings.
pub fn schema_errors(name: &str, value: &Value) -> Vec<String> {
    schema(name).iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

pub fn assert_schema(name: &str, value: &Value) {
    let errors = schema_errors(name, value);
    assert!(errors.is_empty(), "{name}: {errors:#?}\n{value:#}");
}

/// Id of the graph node with the given class.
pub fn object_of_class(state: &SceneState, class: &str) -> u32 {
    state
        .graph
        .nodes
        .values()
        .find(|n| n.class == class)
        .unwrap_or_else(|| panic!("no {class} in the graph"))
        .object_id
}
