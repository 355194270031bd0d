//! HTTP API over a corpus and one model, optionally trained live in an
//! N-shot session whose annotation requests are answered over HTTP.

use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use docsynth::background::Catalog;
use docsynth::docgen::TemplateSpec;
use docsynth::extraction::{extract_document, ExtractOptions};
use docsynth::factstore::{Annotation, DatatypeDetector, DocumentFacts};
use docsynth::harness::Corpus;
use docsynth::synthesis::{check_completeness, ExtractionProgram};
use docsynth::training::{
    disambiguate, train_os, AnnotationRequest, Annotator, AnnotatorReply, PoolOracle, TemplateModel, TrainConfig,
    TrainMode,
};

use crate::{train_config, training_doc, CliError, ServeArgs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    /// No training session; the model was loaded.
    Idle,
    Training,
    /// Waiting for an answer to the pending request.
    Waiting,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Answered {
    pub entity: String,
    pub doc_id: String,
    /// `None` when skipped.
    pub value: Option<String>,
    /// Surviving programs after the answer was applied.
    pub programs: usize,
}

struct Pending {
    request: AnnotationRequest,
    reply: mpsc::Sender<AnnotatorReply>,
}

struct Session {
    state: SessionState,
    training_doc: Option<String>,
    pool: Vec<String>,
    pending: Option<Pending>,
    answered: Vec<Answered>,
    error: Option<String>,
}

pub struct AppState {
    catalog: Catalog,
    docs: Vec<DocumentFacts>,
    template_id: String,
    model: RwLock<Option<TemplateModel>>,
    session: Mutex<Session>,
}

impl AppState {
    fn new(catalog: Catalog, docs: Vec<DocumentFacts>, template_id: &str) -> Self {
        AppState {
            catalog,
            docs,
            template_id: template_id.to_string(),
            model: RwLock::new(None),
            session: Mutex::new(Session {
                state: SessionState::Idle,
                training_doc: None,
                pool: Vec::new(),
                pending: None,
                answered: Vec::new(),
                error: None,
            }),
        }
    }

    /// Serves a trained model.
    pub fn with_model(catalog: Catalog, docs: Vec<DocumentFacts>, model: TemplateModel) -> Arc<Self> {
        let s = AppState::new(catalog, docs, &model.meta.template_id);
        *s.model.write().unwrap() = Some(model);
        Arc::new(s)
    }

    /// Starts N-shot training of `docs[train]` on a background thread; the
    /// pool is the `pool` documents that follow it.
    pub fn with_session(
        catalog: Catalog,
        docs: Vec<DocumentFacts>,
        template_id: &str,
        train: usize,
        annotations: Vec<Annotation>,
        pool: usize,
        config: TrainConfig,
    ) -> Arc<Self> {
        let s = Arc::new(AppState::new(catalog, docs, template_id));
        {
            let mut session = s.session.lock().unwrap();
            session.state = SessionState::Training;
            session.training_doc = Some(s.docs[train].doc_id().to_string());
            session.pool = s.docs.iter().skip(train + 1).take(pool).map(|d| d.doc_id().to_string()).collect();
        }
        let worker = s.clone();
        std::thread::spawn(move || {
            let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                worker.train(train, &annotations, pool, &config)
            }));
            let mut session = worker.session.lock().unwrap();
            session.pending = None;
            match outcome {
                Ok(Ok(())) => session.state = SessionState::Done,
                Ok(Err(e)) => {
                    session.state = SessionState::Failed;
                    session.error = Some(e);
                }
                Err(_) => {
                    session.state = SessionState::Failed;
                    session.error = Some("training panicked".into());
                }
            }
        });
        s
    }

    fn doc(&self, id: &str) -> Option<&DocumentFacts> {
        self.docs.iter().find(|d| d.doc_id() == id)
    }

    /// The body of [`docsynth::training::train_ns`], publishing the model
    /// after one-shot training and after every answer.
    fn train(&self, train: usize, annotations: &[Annotation], pool: usize, config: &TrainConfig) -> Result<(), String> {
        let d = &self.docs[train];
        let mut model =
            train_os(&self.template_id, d, annotations, &self.catalog, config).map_err(|e| e.to_string())?;
        let pool: Vec<&DocumentFacts> = self.docs.iter().skip(train + 1).take(pool).collect();
        model.meta.mode = TrainMode::Ns;
        model.meta.pool_size = pool.len();
        let entities: Vec<String> = model.entities().map(str::to_string).collect();
        *self.model.write().unwrap() = Some(model);
        let oracle = LivePool { catalog: &self.catalog, pool: &pool };
        let mut annotator = HttpAnnotator { state: self };
        for entity in entities {
            let (mut set, mut record) = {
                let guard = self.model.read().unwrap();
                let m = guard.as_ref().expect("published above");
                (m.program_set(&entity).unwrap().clone(), m.record(&entity).unwrap().clone())
            };
            disambiguate(&mut set, &mut record, &pool, &oracle, &mut annotator);
            let mut guard = self.model.write().unwrap();
            let m = guard.as_mut().expect("published above");
            m.programs.insert(entity.clone(), set);
            if let Some(r) = m.meta.entities.iter_mut().find(|r| r.entity == entity) {
                *r = record;
            }
        }
        Ok(())
    }
}

struct LivePool<'a> {
    catalog: &'a Catalog,
    pool: &'a [&'a DocumentFacts],
}

impl PoolOracle for LivePool<'_> {
    fn first(&self, p: &ExtractionProgram, i: usize) -> Option<String> {
        p.first_output(self.catalog, self.pool[i]).ok().flatten()
    }

    fn holds(&self, p: &ExtractionProgram, i: usize, value: &str) -> bool {
        check_completeness(p, self.catalog, self.pool[i], value)
    }
}

/// Parks each request in the session and blocks until it is answered.
struct HttpAnnotator<'a> {
    state: &'a AppState,
}

impl Annotator for HttpAnnotator<'_> {
    fn annotate(&mut self, request: &AnnotationRequest, doc: &DocumentFacts) -> AnnotatorReply {
        let (tx, rx) = mpsc::channel();
        {
            let mut s = self.state.session.lock().unwrap();
            s.pending = Some(Pending { request: request.clone(), reply: tx });
            s.state = SessionState::Waiting;
        }
        let reply = rx.recv().unwrap_or(AnnotatorReply::Abort);
        // mirror the refinement on the published set so that readers see
        // every round, not just finished entities
        let mut programs = 0;
        if let Some(m) = self.state.model.write().unwrap().as_mut() {
            if let Some(set) = m.programs.get_mut(&request.entity) {
                if let AnnotatorReply::Value(v) = &reply {
                    if !doc.locate(v).is_empty() {
                        set.programs.retain(|_, p| check_completeness(p, &self.state.catalog, doc, v));
                    }
                }
                programs = set.len();
            }
        }
        let mut s = self.state.session.lock().unwrap();
        s.state = SessionState::Training;
        if reply != AnnotatorReply::Abort {
            s.answered.push(Answered {
                entity: request.entity.clone(),
                doc_id: request.doc_id.clone(),
                value: match &reply {
                    AnnotatorReply::Value(v) => Some(v.clone()),
                    _ => None,
                },
                programs,
            });
        }
        reply
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/templates", get(templates))
        .route("/doc/{id}/layout", get(layout))
        .route("/session/pending", get(pending))
        .route("/session/annotate", post(annotate))
        .route("/session/status", get(status))
        .route("/programs/{entity}", get(programs))
        .route("/extract", post(extract))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn templates(State(s): State<Arc<AppState>>) -> Json<Value> {
    let builtin: Vec<Value> = TemplateSpec::builtin_ids()
        .iter()
        .map(|id| json!({ "id": id, "entities": TemplateSpec::builtin(id).map(|t| t.entities()).unwrap_or_default() }))
        .collect();
    Json(json!({ "active": s.template_id, "templates": builtin }))
}

async fn layout(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(d) = s.doc(&id) else {
        return error(StatusCode::NOT_FOUND, format!("no document {id:?}"));
    };
    let tokens: Vec<Value> = d
        .tokens()
        .iter()
        .map(|t| {
            let b = t.bbox;
            json!({
                "text": t.text,
                "box": [b.x0, b.y0, b.x1, b.y1],
                "line": t.line_id,
                "word": t.word_id,
                "block": t.block_id,
            })
        })
        .collect();
    let p = d.page();
    Json(json!({ "doc_id": d.doc_id(), "page": { "width": p.width, "height": p.height }, "tokens": tokens }))
        .into_response()
}

async fn pending(State(s): State<Arc<AppState>>) -> Json<Vec<AnnotationRequest>> {
    let session = s.session.lock().unwrap();
    Json(session.pending.iter().map(|p| p.request.clone()).collect())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateBody {
    pub entity: String,
    pub doc_id: String,
    /// `null` skips the document.
    pub value: Option<String>,
    #[serde(default)]
    pub abort: bool,
}

async fn annotate(State(s): State<Arc<AppState>>, Json(body): Json<AnnotateBody>) -> Response {
    let mut session = s.session.lock().unwrap();
    let matches =
        session.pending.as_ref().is_some_and(|p| p.request.entity == body.entity && p.request.doc_id == body.doc_id);
    if !matches {
        return error(StatusCode::CONFLICT, format!("no pending request for {} in {}", body.entity, body.doc_id));
    }
    let p = session.pending.take().expect("checked above");
    let reply = match (body.abort, body.value) {
        (true, _) => AnnotatorReply::Abort,
        (false, Some(v)) if !v.trim().is_empty() => AnnotatorReply::Value(v.trim().to_string()),
        (false, _) => AnnotatorReply::Skip,
    };
    session.state = SessionState::Training;
    if p.reply.send(reply).is_err() {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "training session has ended");
    }
    (StatusCode::ACCEPTED, Json(json!({ "accepted": true }))).into_response()
}

async fn status(State(s): State<Arc<AppState>>) -> Json<Value> {
    let session = s.session.lock().unwrap();
    let model = s.model.read().unwrap();
    let entities = model.as_ref().map(|m| m.meta.entities.clone()).unwrap_or_default();
    let programs: Value = model
        .as_ref()
        .map(|m| m.programs.iter().map(|(e, set)| (e.clone(), json!(set.len()))).collect())
        .unwrap_or_default();
    Json(json!({
        "state": session.state,
        "template_id": s.template_id,
        "training_doc": session.training_doc,
        "pool": session.pool,
        "pending": session.pending.iter().count(),
        "answered": session.answered,
        "error": session.error,
        "entities": entities,
        "programs": programs,
    }))
}

async fn programs(State(s): State<Arc<AppState>>, UrlPath(entity): UrlPath<String>) -> Response {
    let model = s.model.read().unwrap();
    let Some(set) = model.as_ref().and_then(|m| m.program_set(&entity)) else {
        return error(StatusCode::NOT_FOUND, format!("no programs for {entity:?}"));
    };
    let list: Vec<Value> = set
        .iter()
        .map(|p| {
            let lines: Vec<String> = p.clause.body.iter().filter_map(|lit| s.catalog.interpret(lit)).collect();
            json!({ "text": p.canonical, "interpretation": lines })
        })
        .collect();
    Json(json!({ "entity": entity, "programs": list })).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractBody {
    pub doc_id: String,
}

async fn extract(State(s): State<Arc<AppState>>, Json(body): Json<ExtractBody>) -> Response {
    let Some(d) = s.doc(&body.doc_id) else {
        return error(StatusCode::NOT_FOUND, format!("no document {:?}", body.doc_id));
    };
    let model = s.model.read().unwrap();
    let Some(m) = model.as_ref() else {
        return error(StatusCode::CONFLICT, "no model yet");
    };
    Json(extract_document(m, &s.catalog, d, &ExtractOptions::default())).into_response()
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Internal(format!("cannot listen on {addr}: {e}")))
}

pub fn serve(a: ServeArgs, catalog: Catalog, detector: DatatypeDetector) -> Result<(), CliError> {
    let corpus = Corpus::load(&a.corpus, &detector)?;
    let state = match &a.model {
        Some(dir) => AppState::with_model(catalog.clone(), corpus.docs, TemplateModel::load(dir, &catalog)?),
        None => {
            let (i, anns) = training_doc(&corpus, a.doc.as_deref(), None)?;
            let cfg = train_config(a.depth, a.seed);
            AppState::with_session(catalog, corpus.docs, &a.template, i, anns, a.pool, cfg)
        }
    };
    let addr: SocketAddr =
        format!("{}:{}", a.host, a.port).parse().map_err(|e| CliError::Usage(format!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(async {
        let listener = bind(addr).await?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, router(state)).await.map_err(|e| CliError::Internal(e.to_string()))
    })
}
