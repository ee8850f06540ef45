//! HTTP provider clients against an in-process mock model server.

mod common;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use base64::Engine;
use common::*;
use qsr_core::captions::{CaptionProvider, FixtureCaptionProvider, ViewCrop};
use qsr_core::embedding::{EmbeddingProvider, VocabularyEmbedder};
use qsr_core::prompts::TextGenerator;
use qsr_core::query::{Query, Route};
use qsr_service::config::{HttpConfig, ProviderSpec, RelationSource};
use qsr_service::providers::{HttpCaptioner, HttpEmbedder, HttpTextGenerator};
use qsr_service::{Stage, StageStatus};
use serde_json::{json, Value};

struct Mock {
    embedder: VocabularyEmbedder,
    captioner: FixtureCaptionProvider,
    /// Requests to fail with 503 before answering normally.
    flaky: AtomicUsize,
    calls: AtomicUsize,
}

type Shared = Arc<Mock>;

fn decode(v: &Value) -> image::RgbImage {
    let bytes = base64::engine::general_purpose::STANDARD.decode(v.as_str().unwrap()).unwrap();
    image::load_from_memory(&bytes).unwrap().to_rgb8()
}

fn flaky(m: &Mock) -> Option<Response> {
    m.calls.fetch_add(1, Ordering::SeqCst);
    let left = m.flaky.load(Ordering::SeqCst);
    if left > 0 && m.flaky.compare_exchange(left, left - 1, Ordering::SeqCst, Ordering::SeqCst).is_ok() {
        return Some(StatusCode::SERVICE_UNAVAILABLE.into_response());
    }
    None
}

async fn embed_text(State(m): State<Shared>, Json(body): Json<Value>) -> Response {
    if let Some(r) = flaky(&m) {
        return r;
    }
    let v = m.embedder.embed_text(body["text"].as_str().unwrap()).unwrap();
    Json(json!({ "vector": v })).into_response()
}

async fn embed_image(State(m): State<Shared>, Json(body): Json<Value>) -> Response {
    let v = m.embedder.embed_image(&decode(&body["image"])).unwrap();
    Json(json!({ "vector": v })).into_response()
}

async fn caption(State(m): State<Shared>, Json(body): Json<Value>) -> Response {
    let crop = ViewCrop {
        frame_id: 0,
        image: decode(&body["image"]),
    };
    let text = m.captioner.per_view_caption(&crop, body["hint"].as_str().unwrap()).unwrap();
    Json(json!({ "caption": text })).into_response()
}

async fn synthesize(State(m): State<Shared>, Json(body): Json<Value>) -> Response {
    let captions: Vec<String> = serde_json::from_value(body["captions"].clone()).unwrap();
    let s = m.captioner.synthesize(&captions, body["hint"].as_str().unwrap()).unwrap();
    Json(json!({ "caption": s.caption, "attributes": s.attributes })).into_response()
}

async fn generate(Json(body): Json<Value>) -> Response {
    let text = match body["task"].as_str().unwrap() {
        "relation" => "Next to.",
        _ => "none",
    };
    Json(json!({ "text": text })).into_response()
}

async fn broken() -> Response {
    StatusCode::INTERNAL_SERVER_ERROR.into_response()
}

/// Starts the mock on a background runtime and returns its base URL.
fn start_mock(flaky: usize) -> (String, Shared) {
    let mock = Arc::new(Mock {
        embedder: VocabularyEmbedder::new(qsr_synth::fixtures::vocabulary()).unwrap(),
        captioner: FixtureCaptionProvider::new(qsr_synth::fixtures::captions()),
        flaky: AtomicUsize::new(flaky),
        calls: AtomicUsize::new(0),
    });
    let app = Router::new()
        .route("/embed_text", post(embed_text))
        .route("/embed_image", post(embed_image))
        .route("/caption", post(caption))
        .route("/synthesize", post(synthesize))
        .route("/generate", post(generate))
        .route("/broken/caption", post(broken))
        .route("/broken/synthesize", post(broken))
        .with_state(mock.clone());
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}", rx.recv().unwrap()), mock)
}

fn dim() -> usize {
    VocabularyEmbedder::new(qsr_synth::fixtures::vocabulary()).unwrap().dimension()
}

fn fast_http() -> HttpConfig {
    HttpConfig {
        timeout_ms: 5_000,
        retries: 2,
    }
}

#[test]
fn http_embedder_matches_the_fixture_bit_for_bit() {
    let (base, _) = start_mock(0);
    let http = HttpEmbedder::new(&base, dim(), &fast_http());
    let local = VocabularyEmbedder::new(qsr_synth::fixtures::vocabulary()).unwrap();
    for text in ["a blue vase", "something to sit on", "zebra"] {
        assert_eq!(http.embed_text(text).unwrap(), local.embed_text(text).unwrap());
    }
    let img = image::RgbImage::from_pixel(8, 6, image::Rgb([40, 80, 200]));
    assert_eq!(http.embed_image(&img).unwrap(), local.embed_image(&img).unwrap());
}

#[test]
fn transient_failures_are_retried() {
    let (base, mock) = start_mock(2);
    let http = HttpEmbedder::new(&base, dim(), &fast_http());
    assert!(http.embed_text("vase").is_ok());
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);

    let (base, _) = start_mock(5);
    let err = HttpEmbedder::new(&base, dim(), &fast_http()).embed_text("vase").unwrap_err();
    assert!(err.to_string().contains("503"), "{err}");
}

#[test]
fn unreachable_endpoint_is_a_provider_error() {
    let gen = HttpTextGenerator::new(
        "http://127.0.0.1:9",
        &HttpConfig {
            timeout_ms: 500,
            retries: 0,
        },
    );
    assert!(matches!(gen.generate("relation", "x"), Err(qsr_core::Error::Provider(_))));
}

#[test]
fn http_captioner_round_trips() {
    let (base, _) = start_mock(0);
    let http = HttpCaptioner::new(&base, &fast_http());
    let crop = ViewCrop {
        frame_id: 3,
        image: image::RgbImage::from_pixel(8, 6, image::Rgb([40, 80, 200])),
    };
    let text = http.per_view_caption(&crop, "bowl").unwrap();
    assert!(text.contains("vase"), "{text}");
    let s = http.synthesize(&[text], "bowl").unwrap();
    assert!(s.attributes.is_some());
}

#[test]
fn scene_built_over_http_answers_like_the_fixture_build() {
    let (base, _) = start_mock(0);
    let dir_http = tempfile::tempdir().unwrap();
    let dir_fix = tempfile::tempdir().unwrap();
    let (bundle_http, _) = living_room(dir_http.path());
    let (bundle_fix, _) = living_room(dir_fix.path());

    let mut cfg = fixture_config();
    cfg.providers.http = fast_http();
    cfg.providers.captions = ProviderSpec::Http {
        endpoint: base.clone(),
        dimension: None,
    };
    cfg.providers.embeddings = ProviderSpec::Http {
        endpoint: base.clone(),
        dimension: Some(dim()),
    };
    let over_http = build(&bundle_http, &cfg);
    let local = build(&bundle_fix, &fixture_config());
    assert_eq!(over_http.status(), "ready");
    assert_eq!(over_http.graph_json, local.graph_json);

    let http_app = app(cfg, vec![over_http.clone()]);
    let local_app = app(fixture_config(), vec![local.clone()]);
    for text in ["where is the vase?", "something to sit on", "Anything to sit on other than a chair?"] {
        for route in [Route::PointCloud, Route::SceneGraph, Route::TwoStep] {
            let q = Query::new(text).with_route(route);
            let a = http_app.query(&over_http, &q).unwrap();
            let b = local_app.query(&local, &q).unwrap();
            assert_eq!(a.object_ids(), b.object_ids(), "{text} via {route}");
        }
    }
}

#[test]
fn failing_caption_endpoint_degrades_the_build() {
    let (base, _) = start_mock(0);
    let dir = tempfile::tempdir().unwrap();
    let (bundle, _) = living_room(dir.path());
    let mut cfg = fixture_config();
    cfg.providers.http = HttpConfig {
        timeout_ms: 2_000,
        retries: 0,
    };
    cfg.providers.captions = ProviderSpec::Http {
        endpoint: format!("{base}/broken"),
        dimension: None,
    };
    let state = build(&bundle, &cfg);
    assert_eq!(state.report.stages[&Stage::Caption].status, StageStatus::Degraded);
    assert_eq!(state.graph.nodes[&1].class, "bowl");
    let warnings = &state.report.stages[&Stage::Caption].warnings;
    assert!(warnings.iter().any(|w| w.contains("500")), "{warnings:?}");
}

#[test]
fn llm_relations_come_from_the_generate_endpoint() {
    let (base, _) = start_mock(0);
    let dir = tempfile::tempdir().unwrap();
    let (bundle, _) = living_room(dir.path());
    let mut cfg = fixture_config();
    cfg.providers.http = fast_http();
    cfg.providers.llm = ProviderSpec::Http {
        endpoint: base,
        dimension: None,
    };
    cfg.providers.relations = RelationSource::Llm;
    let state = build(&bundle, &cfg);
    assert!(!state.graph.edges.is_empty());
    assert!(state.graph.edges.iter().all(|e| e.relation == "next to"));
    for e in &state.graph.edges {
        let (a, b) = (&state.graph.nodes[&e.src], &state.graph.nodes[&e.dst]);
        assert!(a.centroid.distance(&b.centroid) <= cfg.graph.prune_distance);
    }
}

#[test]
fn llm_relations_without_an_llm_is_a_config_error() {
    let mut cfg = fixture_config();
    cfg.providers.relations = RelationSource::Llm;
    let err = qsr_service::Providers::from_config(&cfg.providers).err().unwrap();
    assert_eq!(err.code(), "config");
}
