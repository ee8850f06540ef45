use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use qsr_core::bundle::SceneBundle;
use qsr_core::embedding::build_index;
use qsr_core::eval::{render_table, run_suite, Suite};
use qsr_core::lifting::{segment_point_cloud, InstanceLabeling};
use qsr_core::query::{Query, QueryContext, QueryMode, Route};
use qsr_core::scene_graph::SceneGraph3D;
use qsr_service::api::{ConsolidateRequest, NavigateRequest};
use qsr_service::pipeline::{build_scene_graph, caption_objects, discover_bundles, HashLedger};
use qsr_service::{build_scene, AppState, BuildOptions, Config, Providers, Result, ServiceError};
use qsr_synth::SceneRecipe;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "qsr", version, about = "Queryable 3D scene representations: build, query and serve")]
struct Cli {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle with ground truth.
    Synth {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a bundle and report the state of its derived artifacts.
    Ingest { bundle: PathBuf },
    /// Build (or refresh) every derived artifact of a bundle.
    Build {
        bundle: PathBuf,
        /// Re-run every stage even when cached artifacts are current.
        #[arg(long)]
        force: bool,
    },
    /// Build every bundle under a directory and serve them over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        scenes: PathBuf,
    },
    /// Lift the bundle's masks onto its point cloud.
    Segment {
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Caption objects and build the pruned scene graph from a labeling.
    Graph {
        bundle: PathBuf,
        #[arg(long)]
        labeling: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the embedding index for a scene graph.
    Index {
        bundle: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one query against a built scene.
    Query {
        bundle: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "auto")]
        mode: QueryMode,
        #[arg(long, default_value = "auto")]
        route: Route,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        /// Print the full result as JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Score a query suite over one or more routes.
    Eval {
        bundle: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "point_cloud,scene_graph,two_step", value_delimiter = ',')]
        routes: Vec<Route>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a path to an object or a floor position.
    Navigate {
        bundle: PathBuf,
        #[arg(long, conflicts_with = "goal")]
        object: Option<u32>,
        /// Floor position as `x,y`.
        #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
        goal: Option<[f64; 2]>,
        /// Start position as `x,y`.
        #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
        start: [f64; 2],
    },
    /// Diff the built scene graph against an observed one.
    Consolidate {
        bundle: PathBuf,
        #[arg(long)]
        observed: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    Ok(cfg.with_env_overrides())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())))
}

fn parse_xy(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => Ok([
            x.parse().map_err(|e| format!("bad x coordinate {x:?}: {e}"))?,
            y.parse().map_err(|e| format!("bad y coordinate {y:?}: {e}"))?,
        ]),
        _ => Err(format!("expected x,y but got {s:?}")),
    }
}

/// Builds (or loads) a scene and wraps it for the query-side commands.
fn built_app(bundle: &Path, config: Config) -> Result<(AppState, String)> {
    let providers = Providers::from_config(&config.providers)?;
    let state = build_scene(&SceneBundle::load(bundle)?, &config, &providers, BuildOptions::default())?;
    for (stage, outcome) in &state.report.stages {
        for w in &outcome.warnings {
            log::warn!("{}: {w}", stage.as_str());
        }
    }
    let id = state.scene_id.clone();
    Ok((AppState::new(config, providers, [state]), id))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { recipe, seed, out } => {
            let recipe = SceneRecipe::from_json(&read_text(&recipe)?)?;
            let (bundle, truth) = qsr_synth::generate_bundle(&recipe, seed, &out)?;
            print_json(&serde_json::json!({
                "scene_id": bundle.manifest.scene_id,
                "frames": bundle.frames.len(),
                "points": truth.point_instance.len(),
                "objects": truth.objects.len(),
                "out": out,
            }))
        }
        Command::Ingest { bundle } => {
            let b = SceneBundle::load(&bundle)?;
            let derived = b.derived_dir();
            let stages = HashLedger::read(&derived).map(|l| l.statuses(&derived)).unwrap_or_else(|| {
                qsr_service::Stage::ALL
                    .iter()
                    .map(|s| (*s, qsr_service::StageStatus::Absent))
                    .collect()
            });
            print_json(&serde_json::json!({
                "scene_id": b.manifest.scene_id,
                "frames": b.frames.len(),
                "semantic_classes": b.manifest.semantic_classes,
                "stages": stages,
            }))
        }
        Command::Build { bundle, force } => {
            let providers = Providers::from_config(&config.providers)?;
            let state = build_scene(&SceneBundle::load(&bundle)?, &config, &providers, BuildOptions { force })?;
            print_json(&state.report)
        }
        Command::Serve { port, host, scenes } => {
            let providers = Providers::from_config(&config.providers)?;
            let dirs = discover_bundles(&scenes)?;
            if dirs.is_empty() {
                return Err(ServiceError::Config(format!("no scene bundles under {}", scenes.display())));
            }
            let states = dirs
                .par_iter()
                .map(|d| build_scene(&SceneBundle::load(d)?, &config, &providers, BuildOptions::default()))
                .collect::<Result<Vec<_>>>()?;
            for s in &states {
                log::info!("scene {} {} ({} objects)", s.scene_id, s.status(), s.graph.nodes.len());
            }
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| ServiceError::Config(format!("bad listen address: {e}")))?;
            let app = Arc::new(AppState::new(config, providers, states));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(qsr_service::serve(app, addr, async {
                let _ = tokio::signal::ctrl_c().await;
            }))
        }
        Command::Segment { bundle, out } => {
            let b = SceneBundle::load(&bundle)?;
            let seg = segment_point_cloud(&b.load_point_cloud()?, &b.load_frames()?, &b.manifest.semantic_classes, &config.lifting)?;
            for w in &seg.warnings {
                log::warn!("{w}");
            }
            std::fs::write(&out, seg.labeling.to_json())?;
            Ok(())
        }
        Command::Graph { bundle, labeling, out } => {
            let b = SceneBundle::load(&bundle)?;
            let providers = Providers::from_config(&config.providers)?;
            let labeling = InstanceLabeling::from_json(&read_text(&labeling)?)?;
            let (cloud, frames) = (b.load_point_cloud()?, b.load_frames()?);
            let tol = config.lifting.tolerance;
            let (captions, mut warnings) = caption_objects(
                &labeling,
                &cloud,
                &frames,
                providers.captions.as_deref(),
                config.captions.views_per_object,
                &tol,
            );
            let (graph, w) = build_scene_graph(
                &labeling,
                &cloud,
                &frames,
                &captions,
                providers.relations.as_ref(),
                config.graph.pair_radius,
                config.graph.prune_distance,
                &tol,
            )?;
            warnings.extend(w);
            for w in &warnings {
                log::warn!("{w}");
            }
            std::fs::write(&out, graph.to_canonical_json())?;
            Ok(())
        }
        Command::Index { bundle, graph, out } => {
            let b = SceneBundle::load(&bundle)?;
            let providers = Providers::from_config(&config.providers)?;
            let embedder = providers
                .embedder
                .as_deref()
                .ok_or_else(|| ServiceError::ProviderUnavailable("no embedding provider configured".into()))?;
            let graph = SceneGraph3D::from_json(&read_text(&graph)?)?;
            let cloud = b.load_point_cloud()?;
            let (index, warnings) = build_index(&graph, cloud.points(), &b.load_frames()?, embedder, &config.index, &config.lifting.tolerance)?;
            for w in &warnings {
                log::warn!("{w}");
            }
            index.save(&out)?;
            Ok(())
        }
        Command::Query {
            bundle,
            text,
            mode,
            route,
            top_k,
            json,
        } => {
            let (app, id) = built_app(&bundle, config)?;
            let scene = app.scene(&id)?;
            let q = Query::new(text).with_mode(mode).with_route(route).with_top_k(top_k);
            let result = app.query(&scene, &q)?;
            if json {
                return print_json(&result);
            }
            println!("route: {}", result.route_taken);
            if let Some(answer) = &result.answer_text {
                println!("{answer}");
            }
            for h in &result.hits {
                let c = h.centroid;
                println!("{:>4}  {:<12} {:.3}  ({:.2}, {:.2}, {:.2})", h.object_id, h.class, h.score, c.x, c.y, c.z);
            }
            Ok(())
        }
        Command::Eval { bundle, suite, routes, out } => {
            let (app, id) = built_app(&bundle, config)?;
            let scene = app.scene(&id)?;
            let suite: Suite = serde_json::from_str(&read_text(&suite)?)?;
            let index = scene.index.as_ref().ok_or_else(|| ServiceError::StageUnavailable {
                stage: "index",
                reason: "the scene was built without an embedding provider".into(),
            })?;
            let embedder = app
                .providers
                .embedder
                .as_deref()
                .ok_or_else(|| ServiceError::ProviderUnavailable("no embedding provider configured".into()))?;
            let ctx = QueryContext {
                graph: &scene.graph,
                index,
                embedder,
                llm: app.providers.llm.as_deref(),
                config: &app.config.query,
            };
            let report = run_suite(&ctx, &suite, &routes)?;
            print!("{}", render_table(&report));
            if let Some(out) = out {
                std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            Ok(())
        }
        Command::Navigate { bundle, object, goal, start } => {
            let (app, id) = built_app(&bundle, config)?;
            let scene = app.scene(&id)?;
            let req = NavigateRequest {
                object_id: object,
                goal,
                start,
            };
            print_json(&app.navigate(&scene, &req)?)
        }
        Command::Consolidate { bundle, observed } => {
            let (app, id) = built_app(&bundle, config)?;
            let scene = app.scene(&id)?;
            let observed_graph = serde_json::from_str(&read_text(&observed)?)?;
            print_json(&app.consolidate(&scene, ConsolidateRequest { observed_graph })?)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error [{}]: {e}", e.code());
        std::process::exit(match e.status().as_u16() {
            400..=499 => 2,
            _ => 1,
        });
    }
}
