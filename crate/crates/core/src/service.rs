//! HTTP front end for interactive use.
//!
//! * `POST /api/generate` runs the generator, the detector and the scoring
//!   for one request and returns everything the client needs to draw feedback.
//! * `GET /api/concepts` lists the vocabulary with display colors.
//! * `GET /healthz` answers `ok`.
//! * Anything else is served from an optional static assets directory.
//!
//! Handlers share only the immutable vocabulary, so identical requests get
//! identical bodies (apart from `timing_ms`).

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::error::Error;
use crate::evaluation::{match_guidance, ConsistencyRecord, DetectionRecord};
use crate::generator::{generate, oracle_detect, ConceptVocabulary, GenerationConfig, BACKGROUND};
use crate::geometry::BoundingBox;
use crate::guidance::{GuidanceEntry, GuidanceSet};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8787";

/// Upper bound on `steps` accepted from clients.
pub const MAX_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestObject {
    pub concept: String,
    pub bbox: Vec<f64>,
}

/// Body of `POST /api/generate`. Omitted tuning fields take the generator
/// defaults. An empty prompt means "the objects' concepts, in order".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    #[serde(default)]
    pub prompt: Vec<String>,
    #[serde(default)]
    pub objects: Vec<RequestObject>,
    #[serde(default)]
    pub w_prime: Option<f64>,
    #[serde(default)]
    pub mask_mode: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub softness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    /// Base64 of a binary PPM with one pixel per latent cell.
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub detections: Vec<DetectionRecord>,
    pub consistency: Vec<ConsistencyRecord>,
    pub warnings: Vec<String>,
    pub timing_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptInfo {
    pub name: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub field: Option<String>,
    pub error: String,
}

/// A request rejection with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub field: Option<String>,
    pub message: String,
}

impl ApiError {
    fn bad(field: impl Into<String>, message: impl ToString) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field: Some(field.into()),
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: match &self.field {
                Some(f) => format!("{f}: {}", self.message),
                None => self.message.clone(),
            },
            field: self.field,
        };
        (self.status, Json(body)).into_response()
    }
}

impl GenerateRequest {
    /// Turns the request into guidance and a generator configuration,
    /// reporting the first invalid field.
    pub fn validate(
        &self,
        vocab: &ConceptVocabulary,
    ) -> Result<(GuidanceSet, GenerationConfig), ApiError> {
        for (i, t) in self.prompt.iter().enumerate() {
            if vocab.index_of(t).is_none() {
                return Err(ApiError::bad(
                    format!("prompt[{i}]"),
                    format!("unknown concept `{t}`"),
                ));
            }
        }
        let mut prompt: Vec<String> = self
            .prompt
            .iter()
            .map(|t| t.trim().to_lowercase())
            .collect();
        let derive_prompt = prompt.is_empty();
        let mut entries = Vec::with_capacity(self.objects.len());
        for (i, o) in self.objects.iter().enumerate() {
            let field = |f: &str| format!("objects[{i}].{f}");
            let name = o.concept.trim().to_lowercase();
            if vocab.index_of(&name).is_none() {
                return Err(ApiError::bad(
                    field("concept"),
                    format!("unknown concept `{}`", o.concept),
                ));
            }
            let concept = match prompt.iter().position(|t| *t == name) {
                Some(c) => c,
                None if derive_prompt => {
                    prompt.push(name);
                    prompt.len() - 1
                }
                None => {
                    return Err(ApiError::bad(
                        field("concept"),
                        format!("`{}` is not in the prompt", o.concept),
                    ))
                }
            };
            let [x0, y0, x1, y1] = <[f64; 4]>::try_from(o.bbox.as_slice()).map_err(|_| {
                ApiError::bad(field("bbox"), "expected [x_min, y_min, x_max, y_max]")
            })?;
            let bbox =
                BoundingBox::new(x0, y0, x1, y1).map_err(|e| ApiError::bad(field("bbox"), e))?;
            entries.push(GuidanceEntry { bbox, concept });
        }
        if prompt.is_empty() {
            prompt.push(BACKGROUND.to_string());
        }
        let guidance = GuidanceSet::new(prompt, entries, crate::geometry::DEFAULT_REFERENCE_SIZE)
            .map_err(|e| ApiError::bad("objects", e))?;

        let mut cfg = GenerationConfig::default();
        if let Some(w) = self.w_prime {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ApiError::bad("w_prime", "must be a finite number >= 0"));
            }
            cfg.w_prime = w;
        }
        if let Some(mode) = &self.mask_mode {
            cfg.mask_mode = mode.parse().map_err(|e| ApiError::bad("mask_mode", e))?;
        }
        if let Some(s) = self.softness {
            if !(s > 0.0 && s.is_finite()) {
                return Err(ApiError::bad("softness", "must be a finite number > 0"));
            }
            cfg.softness = s;
        }
        if let Some(steps) = self.steps {
            if !(1..=MAX_STEPS).contains(&steps) {
                return Err(ApiError::bad(
                    "steps",
                    format!("must be between 1 and {MAX_STEPS}"),
                ));
            }
            cfg.steps = steps;
        }
        cfg.seed = self.seed.unwrap_or(0);
        Ok((guidance, cfg))
    }
}

/// Runs one request end to end. `timing_ms` is left at 0.
pub fn handle_generate(
    req: &GenerateRequest,
    vocab: &ConceptVocabulary,
) -> Result<GenerateResponse, ApiError> {
    let (guidance, cfg) = req.validate(vocab)?;
    let out = generate(&guidance, vocab, &cfg).map_err(|e| match e {
        Error::AllSuppressed { .. } => ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            field: Some("objects".into()),
            message: e.to_string(),
        },
        other => ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            field: None,
            message: other.to_string(),
        },
    })?;
    let detections = oracle_detect(&out.image, vocab);
    // score against the request's own token order
    let consistency = match_guidance(&detections, &guidance);
    let grid = out.image.grid();
    Ok(GenerateResponse {
        image: base64::engine::general_purpose::STANDARD.encode(out.image.to_ppm(1)),
        width: grid.width,
        height: grid.height,
        detections,
        consistency,
        warnings: out.warnings.iter().map(ToString::to_string).collect(),
        timing_ms: 0,
    })
}

struct AppState {
    vocab: ConceptVocabulary,
}

/// The service's routes. Without an assets directory `/` serves a short
/// page describing the API.
pub fn router(vocab: ConceptVocabulary, assets: Option<PathBuf>) -> Router {
    let state = Arc::new(AppState { vocab });
    let api = Router::new()
        .route("/api/generate", post(generate_handler))
        .route("/api/concepts", get(concepts_handler))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX_PAGE) })),
    }
}

const INDEX_PAGE: &str = "<!doctype html><title>layout guidance</title>\
<p>POST /api/generate, GET /api/concepts, GET /healthz</p>";

async fn generate_handler(State(state): State<Arc<AppState>>, body: axum::body::Bytes) -> Response {
    let req: GenerateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return ApiError {
                status: StatusCode::BAD_REQUEST,
                field: Some("body".into()),
                message: e.to_string(),
            }
            .into_response()
        }
    };
    let started = Instant::now();
    let result = tokio::task::spawn_blocking(move || handle_generate(&req, &state.vocab)).await;
    match result {
        Ok(Ok(mut resp)) => {
            resp.timing_ms = started.elapsed().as_millis() as u64;
            Json(resp).into_response()
        }
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            field: None,
            message: e.to_string(),
        }
        .into_response(),
    }
}

async fn concepts_handler(State(state): State<Arc<AppState>>) -> Json<Vec<ConceptInfo>> {
    Json(
        state
            .vocab
            .concepts()
            .iter()
            .map(|c| ConceptInfo {
                name: c.name.clone(),
                color: c.color.hex(),
            })
            .collect(),
    )
}

/// Binds `listen` and serves until the process is stopped.
pub async fn serve(
    listen: &str,
    vocab: ConceptVocabulary,
    assets: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(vocab, assets)).await
}
