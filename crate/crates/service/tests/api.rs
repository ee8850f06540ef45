mod common;

use std::sync::OnceLock;

use axum::http::StatusCode;
use axum::Router;
use common::*;
use qsr_service::api::{BUILD_HASH_HEADER, SCENE_HEADER};
use qsr_service::config::ProviderSpec;
use qsr_service::{router, SceneState};
use serde_json::{json, Value};

struct Fixture {
    _dirs: Vec<tempfile::TempDir>,
    living: SceneState,
    sealed: SceneState,
    no_index: SceneState,
}

/// Scenes are built once per test binary; every test gets its own router.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = fixture_config();
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let living = build(&living_room(a.path()).0, &cfg);
        let sealed = build(&qsr_synth::generate_bundle(&sealed_room_recipe(), 3, b.path()).unwrap().0, &cfg);
        let mut bare = cfg.clone();
        bare.providers.embeddings = ProviderSpec::None;
        let (bundle, _) = qsr_synth::generate_bundle(
            &{
                let mut r = qsr_synth::fixtures::living_room();
                r.scene_id = "living_room_bare".into();
                r
            },
            7,
            c.path(),
        )
        .unwrap();
        let no_index = build(&bundle, &bare);
        Fixture {
            _dirs: vec![a, b, c],
            living,
            sealed,
            no_index,
        }
    })
}

fn app_router() -> Router {
    let f = fixture();
    router(app(fixture_config(), vec![f.living.clone(), f.sealed.clone(), f.no_index.clone()]))
}

fn assert_scene_headers(reply: &Reply, state: &SceneState) {
    assert_eq!(reply.headers[SCENE_HEADER], state.scene_id.as_str());
    assert_eq!(reply.headers[BUILD_HASH_HEADER], state.build_hash.as_str());
}

fn assert_error(reply: &Reply, status: StatusCode, code: &str) {
    assert_eq!(reply.status, status, "{}", String::from_utf8_lossy(&reply.bytes));
    let v = reply.json();
    assert_schema("error.schema.json", &v);
    assert_eq!(v["error"]["code"], code);
    assert_eq!(v["error"]["status"], status.as_u16());
}

#[tokio::test]
async fn lists_scenes() {
    let r = call(&app_router(), "GET", "/scenes", None).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_schema("scene_list.schema.json", &v);
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|s| s["scene_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["living_room", "living_room_bare", "sealed_room"]);
    assert_eq!(v[0]["status"], "ready");
    assert_eq!(v[0]["object_count"], 8);
    assert_eq!(v[1]["status"], "degraded");
}

#[tokio::test]
async fn graph_is_the_canonical_artifact() {
    let f = fixture();
    let r = call(&app_router(), "GET", "/scenes/living_room/graph", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_scene_headers(&r, &f.living);
    let on_disk = std::fs::read(f.living.root.join("derived/scene_graph.json")).unwrap();
    assert_eq!(r.bytes, on_disk);
    assert_schema("scene_graph.schema.json", &r.json());
}

#[tokio::test]
async fn object_endpoint() {
    let f = fixture();
    let router = app_router();
    let r = call(&router, "GET", "/scenes/living_room/objects/1", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_scene_headers(&r, &f.living);
    let v = r.json();
    assert_schema("object.schema.json", &v);
    assert_eq!(v["class"], "vase");
    assert_eq!(v["scene_id"], "living_room");
    assert_eq!(v["point_count"], f.living.graph.nodes[&1].point_indices.len());

    assert_error(&call(&router, "GET", "/scenes/living_room/objects/99", None).await, StatusCode::NOT_FOUND, "unknown_object");
    assert_error(&call(&router, "GET", "/scenes/living_room/objects/abc", None).await, StatusCode::BAD_REQUEST, "bad_request");
    assert_error(&call(&router, "GET", "/scenes/nowhere/objects/1", None).await, StatusCode::NOT_FOUND, "unknown_scene");
}

#[tokio::test]
async fn query_for_the_vase_returns_its_geometry() {
    let f = fixture();
    let r = call(&app_router(), "POST", "/scenes/living_room/query", Some(&json!({"text": "where is the vase?"}))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    assert_scene_headers(&r, &f.living);
    let v = r.json();
    assert_schema("query_result.schema.json", &v);
    let top = &v["hits"][0];
    assert_eq!(top["object_id"], 1);
    let node = &f.living.graph.nodes[&1];
    assert_eq!(top["centroid"], serde_json::to_value(node.centroid).unwrap());
    assert_eq!(top["aabb"], serde_json::to_value(node.aabb).unwrap());
}

#[tokio::test]
async fn query_routes_and_modes_are_honored() {
    let router = app_router();
    for route in ["point_cloud", "scene_graph", "two_step"] {
        let body = json!({"text": "Anything to sit on other than a chair?", "mode": "negation", "route": route, "top_k": 1});
        let r = call(&router, "POST", "/scenes/living_room/query", Some(&body)).await;
        assert_eq!(r.status, StatusCode::OK);
        let v = r.json();
        assert_schema("query_result.schema.json", &v);
        assert!(v["route_taken"].as_str().unwrap().starts_with(route), "{v}");
    }
}

#[tokio::test]
async fn bad_query_requests_are_400() {
    let router = app_router();
    for body in [
        json!({"text": ""}),
        json!({"text": "vase", "top_k": 0}),
        json!({"text": "vase", "route": "teleport"}),
        json!({"mode": "negation"}),
    ] {
        let r = call(&router, "POST", "/scenes/living_room/query", Some(&body)).await;
        assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");
    }
    let r = call_raw(&router, "POST", "/scenes/living_room/query", "{not json").await;
    assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");
    assert_scene_headers(&r, &fixture().living);
}

#[tokio::test]
async fn query_without_index_is_503() {
    let r = call(&app_router(), "POST", "/scenes/living_room_bare/query", Some(&json!({"text": "vase"}))).await;
    assert_error(&r, StatusCode::SERVICE_UNAVAILABLE, "stage_unavailable");
}

#[tokio::test]
async fn unknown_scene_and_endpoint_are_404() {
    let router = app_router();
    assert_error(
        &call(&router, "POST", "/scenes/kitchen/query", Some(&json!({"text": "vase"}))).await,
        StatusCode::NOT_FOUND,
        "unknown_scene",
    );
    assert_error(&call(&router, "GET", "/scenes/kitchen/graph", None).await, StatusCode::NOT_FOUND, "unknown_scene");
    assert_error(&call(&router, "GET", "/nothing/here", None).await, StatusCode::NOT_FOUND, "not_found");
}

fn free_waypoints(state: &SceneState, waypoints: &Value) {
    let grid = &state.grid;
    for w in waypoints.as_array().unwrap() {
        let (x, y) = (w[0].as_f64().unwrap(), w[1].as_f64().unwrap());
        let (ix, iy) = grid.cell_of(x, y).expect("waypoint on the grid");
        assert!(!grid.is_occupied(ix, iy), "waypoint ({x}, {y}) is occupied");
    }
}

#[tokio::test]
async fn navigate_to_object_and_to_point() {
    let f = fixture();
    let router = app_router();
    let sofa = object_of_class(&f.living, "sofa");
    let r = call(&router, "POST", "/scenes/living_room/navigate", Some(&json!({"object_id": sofa, "start": [-2.3, 1.8]}))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    assert_scene_headers(&r, &f.living);
    let v = r.json();
    assert_schema("nav_path.schema.json", &v);
    assert_eq!(v["goal_object_id"], sofa);
    free_waypoints(&f.living, &v["waypoints"]);
    assert!(v["length"].as_f64().unwrap() > 1.0);

    let r = call(&router, "POST", "/scenes/living_room/navigate", Some(&json!({"goal": [2.2, -0.3], "start": [-2.3, 1.8]}))).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_schema("nav_path.schema.json", &v);
    assert!(v.get("goal_object_id").is_none());
}

#[tokio::test]
async fn navigate_errors() {
    let router = app_router();
    let sealed = fixture().sealed.clone();
    // The fixture captioner names objects by colour, so find the crate by position.
    let crate_id = *sealed.graph.nodes.iter().find(|(_, n)| n.centroid.x > 2.5).expect("crate behind the partition").0;
    let r = call(&router, "POST", "/scenes/sealed_room/navigate", Some(&json!({"object_id": crate_id, "start": [-1.5, 0.0]}))).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "path_not_found");
    assert_scene_headers(&r, &sealed);

    // The vase stands in the middle of the table: every cell within reach of
    // its footprint lies inside the table's inflated outline.
    let vase = object_of_class(&fixture().living, "vase");
    let r = call(&router, "POST", "/scenes/living_room/navigate", Some(&json!({"object_id": vase, "start": [-2.3, 1.8]}))).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "goal_unreachable");

    // Inside the wall band there is no free cell near the goal.
    let r = call(&router, "POST", "/scenes/living_room/navigate", Some(&json!({"goal": [3.1, 0.0], "start": [-2.3, 1.8]}))).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "goal_unreachable");

    for body in [
        json!({"start": [0.0, 0.0]}),
        json!({"object_id": 1, "goal": [0.0, 0.0], "start": [0.0, 0.0]}),
        json!({"object_id": 1}),
        json!({"object_id": 1, "start": [0.0, 0.0], "speed": 2}),
    ] {
        let r = call(&router, "POST", "/scenes/living_room/navigate", Some(&body)).await;
        assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");
    }
    let r = call(&router, "POST", "/scenes/living_room/navigate", Some(&json!({"object_id": 42, "start": [0.0, 0.0]}))).await;
    assert_error(&r, StatusCode::NOT_FOUND, "unknown_object");
}

#[tokio::test]
async fn consolidate_reports_moved_and_removed_objects() {
    let f = fixture();
    let mut observed = f.living.graph.clone();
    observed.nodes.remove(&7);
    observed.edges.retain(|e| e.src != 7 && e.dst != 7);
    let sofa = observed.nodes.get_mut(&4).unwrap();
    sofa.centroid.y += 0.3;
    sofa.aabb.min.y += 0.3;
    sofa.aabb.max.y += 0.3;
    let body = json!({ "observed_graph": observed.to_value() });

    let r = call(&app_router(), "POST", "/scenes/living_room/consolidate", Some(&body)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
    assert_scene_headers(&r, &f.living);
    let v = r.json();
    assert_schema("consolidate_response.schema.json", &v);
    let changes: Vec<(String, u64)> = v["changes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["kind"].as_str().unwrap().to_string(), c["object_id"].as_u64().unwrap()))
        .collect();
    assert!(changes.contains(&("moved".into(), 4)), "{changes:?}");
    assert!(changes.contains(&("removed".into(), 7)), "{changes:?}");
    assert_eq!(changes.len(), 2, "{changes:?}");
    assert!(v["updated_graph"]["nodes"].get("7").is_none());
}

#[tokio::test]
async fn consolidate_rejects_malformed_graphs() {
    let router = app_router();
    let r = call(&router, "POST", "/scenes/living_room/consolidate", Some(&json!({"observed_graph": {"nodes": {}}}))).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "graph_parse");
    let r = call(&router, "POST", "/scenes/living_room/consolidate", Some(&json!({}))).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");
}

#[tokio::test]
async fn grid_image_is_a_pgm() {
    let f = fixture();
    let r = call(&app_router(), "GET", "/scenes/living_room/grid.pgm", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_scene_headers(&r, &f.living);
    assert_eq!(r.headers["content-type"], "image/x-portable-graymap");
    assert!(r.bytes.starts_with(b"P5"));
    assert_eq!(r.bytes, f.living.grid_pgm);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_requests_match_serial_execution() {
    let router = app_router();
    let texts = [
        "where is the vase?",
        "something to sit on",
        "Anything to sit on other than a chair?",
        "a purple book",
        "somewhere to put my cup",
    ];
    let routes = ["point_cloud", "scene_graph", "two_step", "auto"];
    let mut requests: Vec<(String, Value)> = Vec::new();
    for i in 0..100usize {
        if i % 4 == 3 {
            let start = [-2.3 + 0.05 * (i % 7) as f64, 1.8];
            requests.push(("/scenes/living_room/navigate".into(), json!({"object_id": (i % 8) as u32, "start": start})));
        } else {
            let body = json!({"text": texts[i % texts.len()], "route": routes[i % routes.len()], "top_k": 1 + i % 3});
            requests.push(("/scenes/living_room/query".into(), body));
        }
    }

    let mut serial = Vec::new();
    for (uri, body) in &requests {
        let r = call(&router, "POST", uri, Some(body)).await;
        serial.push((r.status, r.bytes));
    }
    let handles: Vec<_> = requests
        .iter()
        .cloned()
        .map(|(uri, body)| {
            let router = router.clone();
            tokio::spawn(async move {
                let r = call(&router, "POST", &uri, Some(&body)).await;
                (r.status, r.bytes)
            })
        })
        .collect();
    for (i, h) in handles.into_iter().enumerate() {
        assert_eq!(h.await.unwrap(), serial[i], "request {i} differs");
    }
}

#[tokio::test]
async fn atomic_scene_swap_keeps_in_flight_state() {
    let f = fixture();
    let state = app(fixture_config(), vec![f.living.clone()]);
    let held = state.scene("living_room").unwrap();
    let mut replacement = f.living.clone();
    replacement.build_hash = "0".repeat(64);
    state.put_scene(replacement);
    assert_eq!(held.build_hash, f.living.build_hash);
    assert_eq!(state.scene("living_room").unwrap().build_hash, "0".repeat(64));
}
