//! Provider wiring: fixture providers for offline use and HTTP clients for
//! real models.
//!
//! HTTP contracts (JSON bodies, relative to the configured base URL):
//!
//! * LLM: `POST /generate {task, prompt}` returns `{text}`
//! * embeddings: `POST /embed_text {text}` and `POST /embed_image {image}`
//!   return `{vector}`; images are base64 PNG
//! * captions: `POST /caption {image, hint}` returns `{caption}`;
//!   `POST /synthesize {captions, hint}` returns `{caption, attributes}`

use std::collections::BTreeMap;
use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use image::RgbImage;
use qsr_core::captions::{CaptionProvider, FixtureCaptionProvider, Synthesis, ViewCrop};
use qsr_core::embedding::{EmbeddingProvider, VocabularyEmbedder};
use qsr_core::prompts::{self, TextGenerator};
use qsr_core::scene_graph::{GeometricRelationProvider, ObjectSummary, RelationProvider};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{HttpConfig, ProviderSpec, ProvidersConfig, RelationSource};
use crate::error::{Result, ServiceError};

/// Blocking JSON-over-HTTP client with bounded retries on transport errors
/// and 5xx responses.
#[derive(Debug, Clone)]
pub struct JsonClient {
    base: String,
    agent: ureq::Agent,
    retries: u32,
}

impl JsonClient {
    pub fn new(base: &str, http: &HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(http.timeout_ms))
            .build();
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent,
            retries: http.retries,
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn post(&self, path: &str, body: &Value) -> qsr_core::Result<Value> {
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
            match self.agent.post(&url).send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<Value>()
                        .map_err(|e| qsr_core::Error::provider(format!("{url}: unreadable response: {e}")))
                }
                Err(ureq::Error::Status(code, resp)) if code < 500 => {
                    let text = resp.into_string().unwrap_or_default();
                    return Err(qsr_core::Error::provider(format!("{url}: HTTP {code}: {text}")));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(qsr_core::Error::provider(format!("{url}: {last}")))
    }
}

fn field<'a>(v: &'a Value, key: &str, url: &str) -> qsr_core::Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| qsr_core::Error::provider(format!("{url}: response lacks \"{key}\"")))
}

fn png_base64(img: &RgbImage) -> qsr_core::Result<String> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
}

pub struct HttpTextGenerator {
    client: JsonClient,
    name: String,
}

impl HttpTextGenerator {
    pub fn new(endpoint: &str, http: &HttpConfig) -> Self {
        Self {
            client: JsonClient::new(endpoint, http),
            name: format!("http:{endpoint}"),
        }
    }
}

impl TextGenerator for HttpTextGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, task: &str, prompt: &str) -> qsr_core::Result<String> {
        let v = self.client.post("/generate", &json!({ "task": task, "prompt": prompt }))?;
        field(&v, "text", self.client.base())?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| qsr_core::Error::provider("\"text\" is not a string"))
    }
}

pub struct HttpEmbedder {
    client: JsonClient,
    name: String,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, dimension: usize, http: &HttpConfig) -> Self {
        Self {
            client: JsonClient::new(endpoint, http),
            name: format!("http:{endpoint}"),
            dimension,
        }
    }

    fn vector(&self, path: &str, body: Value) -> qsr_core::Result<Vec<f32>> {
        let v = self.client.post(path, &body)?;
        let arr = field(&v, "vector", self.client.base())?
            .as_array()
            .ok_or_else(|| qsr_core::Error::provider("\"vector\" is not an array"))?;
        arr.iter()
            .map(|x| x.as_f64().map(|f| f as f32).ok_or_else(|| qsr_core::Error::provider("non-numeric vector entry")))
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_image(&self, crop: &RgbImage) -> qsr_core::Result<Vec<f32>> {
        self.vector("/embed_image", json!({ "image": png_base64(crop)? }))
    }

    fn embed_text(&self, text: &str) -> qsr_core::Result<Vec<f32>> {
        self.vector("/embed_text", json!({ "text": text }))
    }
}

pub struct HttpCaptioner {
    client: JsonClient,
    name: String,
}

impl HttpCaptioner {
    pub fn new(endpoint: &str, http: &HttpConfig) -> Self {
        Self {
            client: JsonClient::new(endpoint, http),
            name: format!("http:{endpoint}"),
        }
    }
}

impl CaptionProvider for HttpCaptioner {
    fn name(&self) -> &str {
        &self.name
    }

    fn per_view_caption(&self, crop: &ViewCrop, hint: &str) -> qsr_core::Result<String> {
        let v = self
            .client
            .post("/caption", &json!({ "image": png_base64(&crop.image)?, "hint": hint }))?;
        field(&v, "caption", self.client.base())?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| qsr_core::Error::provider("\"caption\" is not a string"))
    }

    fn synthesize(&self, captions: &[String], hint: &str) -> qsr_core::Result<Synthesis> {
        let v = self
            .client
            .post("/synthesize", &json!({ "captions": captions, "hint": hint }))?;
        let caption = field(&v, "caption", self.client.base())?
            .as_str()
            .ok_or_else(|| qsr_core::Error::provider("\"caption\" is not a string"))?
            .to_string();
        Ok(Synthesis {
            caption,
            attributes: v.get("attributes").cloned(),
        })
    }
}

/// Relation provider that asks an LLM about each pair.
pub struct LlmRelationProvider {
    llm: Arc<dyn TextGenerator>,
}

impl LlmRelationProvider {
    pub fn new(llm: Arc<dyn TextGenerator>) -> Self {
        Self { llm }
    }
}

fn describe(o: &ObjectSummary) -> String {
    let e = o.aabb.extents();
    format!(
        "{} #{} centered at ({:.2}, {:.2}, {:.2}) m, size {:.2} x {:.2} x {:.2} m",
        o.class, o.object_id, o.centroid.x, o.centroid.y, o.centroid.z, e.x, e.y, e.z
    )
}

impl RelationProvider for LlmRelationProvider {
    fn name(&self) -> &str {
        "llm"
    }

    fn relate(&self, a: &ObjectSummary, b: &ObjectSummary) -> qsr_core::Result<Option<String>> {
        let prompt = prompts::render(prompts::RELATION, &[("a", &describe(a)), ("b", &describe(b))]);
        let text = self.llm.generate("relation", &prompt)?;
        let phrase = text.lines().next().unwrap_or("").trim().trim_matches(|c| c == '"' || c == '.').to_lowercase();
        Ok((!phrase.is_empty() && phrase != "none").then_some(phrase))
    }
}

/// The providers one scene build or server uses, plus a fingerprint per slot
/// so that a provider change invalidates the stages that depend on it.
#[derive(Clone)]
pub struct Providers {
    pub captions: Option<Arc<dyn CaptionProvider>>,
    pub embedder: Option<Arc<dyn EmbeddingProvider>>,
    pub llm: Option<Arc<dyn TextGenerator>>,
    pub relations: Arc<dyn RelationProvider>,
    pub fingerprints: BTreeMap<&'static str, String>,
}

fn file_fingerprint(path: &std::path::Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
    Ok(format!("fixture:{}", hex::encode(Sha256::digest(bytes))))
}

impl Providers {
    pub fn from_config(cfg: &ProvidersConfig) -> Result<Self> {
        let mut fingerprints = BTreeMap::new();
        let cfg_err = |m: String| ServiceError::Config(m);

        let captions: Option<Arc<dyn CaptionProvider>> = match &cfg.captions {
            ProviderSpec::None => None,
            ProviderSpec::Fixture { path } => {
                fingerprints.insert("captions", file_fingerprint(path)?);
                Some(Arc::new(FixtureCaptionProvider::from_file(path)?))
            }
            ProviderSpec::Http { endpoint, .. } => {
                fingerprints.insert("captions", format!("http:{endpoint}"));
                Some(Arc::new(HttpCaptioner::new(endpoint, &cfg.http)))
            }
        };
        let embedder: Option<Arc<dyn EmbeddingProvider>> = match &cfg.embeddings {
            ProviderSpec::None => None,
            ProviderSpec::Fixture { path } => {
                fingerprints.insert("embeddings", file_fingerprint(path)?);
                Some(Arc::new(VocabularyEmbedder::from_file(path)?))
            }
            ProviderSpec::Http { endpoint, dimension } => {
                let dim = dimension.ok_or_else(|| cfg_err("HTTP embedding provider needs a dimension".into()))?;
                fingerprints.insert("embeddings", format!("http:{endpoint}:{dim}"));
                Some(Arc::new(HttpEmbedder::new(endpoint, dim, &cfg.http)))
            }
        };
        let llm: Option<Arc<dyn TextGenerator>> = match &cfg.llm {
            ProviderSpec::None => None,
            ProviderSpec::Fixture { .. } => return Err(cfg_err("the LLM slot has no fixture provider".into())),
            ProviderSpec::Http { endpoint, .. } => {
                fingerprints.insert("llm", format!("http:{endpoint}"));
                Some(Arc::new(HttpTextGenerator::new(endpoint, &cfg.http)))
            }
        };
        let relations: Arc<dyn RelationProvider> = match cfg.relations {
            RelationSource::Geometric => {
                let g = GeometricRelationProvider::default();
                fingerprints.insert("relations", format!("geometric:{}:{}", g.contact_tol, g.next_to_gap));
                Arc::new(g)
            }
            RelationSource::Llm => {
                let llm = llm.clone().ok_or_else(|| cfg_err("LLM relations need an LLM provider".into()))?;
                fingerprints.insert("relations", format!("llm:{}", llm.name()));
                Arc::new(LlmRelationProvider::new(llm))
            }
        };
        Ok(Self {
            captions,
            embedder,
            llm,
            relations,
            fingerprints,
        })
    }

    /// Directly supplied providers, for embedding the pipeline in other code.
    pub fn custom(
        captions: Option<Arc<dyn CaptionProvider>>,
        embedder: Option<Arc<dyn EmbeddingProvider>>,
        llm: Option<Arc<dyn TextGenerator>>,
    ) -> Self {
        let mut fingerprints = BTreeMap::new();
        if let Some(c) = &captions {
            fingerprints.insert("captions", c.name().to_string());
        }
        if let Some(e) = &embedder {
            fingerprints.insert("embeddings", format!("{}:{}", e.name(), e.dimension()));
        }
        if let Some(l) = &llm {
            fingerprints.insert("llm", l.name().to_string());
        }
        let g = GeometricRelationProvider::default();
        fingerprints.insert("relations", format!("geometric:{}:{}", g.contact_tol, g.next_to_gap));
        Self {
            captions,
            embedder,
            llm,
            relations: Arc::new(g),
            fingerprints,
        }
    }

    pub fn fingerprint(&self, slot: &str) -> &str {
        self.fingerprints.get(slot).map(String::as_str).unwrap_or("none")
    }
}
