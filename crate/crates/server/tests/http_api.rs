//! The HTTP API against an in-memory service built from the bundled mini
//! collection.

use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use codesearch::corpus::load_collection;
use codesearch::embed::TrainSpec;
use codesearch::encoders::{EncodeError, Encoder, EncoderKind, Encoding, NbowEncoder};
use codesearch::index::{build_index, EnsembleSpec, Half};
use codesearch::pipeline::{nbow_half, train_nbow};
use codesearch_server::http::{cors_layer, router};
use codesearch_server::service::{SearchResponse, SearchService};
use serde_json::Value;
use tower::ServiceExt;

fn mini_collection() -> codesearch::corpus::SnippetCollection {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/mini/snippets.jsonl");
    load_collection(path).unwrap()
}

fn small_spec() -> TrainSpec {
    TrainSpec { dim: 16, epochs: 30, min_count: 1, seed: 3, ..TrainSpec::default() }
}

fn service() -> Arc<SearchService> {
    let collection = mini_collection();
    let table = Arc::new(train_nbow(&collection, &[] as &[&str], &small_spec()).unwrap());
    let spec = EnsembleSpec::description_only(nbow_half(table));
    let index = build_index(&collection, &spec).unwrap().index;
    Arc::new(SearchService::new(collection, spec, index).unwrap())
}

/// Delegates to NBOW but fails on queries mentioning "explode".
struct FragileQuery(NbowEncoder);

impl Encoder for FragileQuery {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::External
    }

    fn encode(&self, text: &str) -> Result<Encoding, EncodeError> {
        if text.contains("explode") {
            return Err(EncodeError::MissingKey(text.to_string()));
        }
        self.0.encode(text)
    }
}

fn fragile_service() -> Arc<SearchService> {
    let collection = mini_collection();
    let table = Arc::new(train_nbow(&collection, &[] as &[&str], &small_spec()).unwrap());
    let half = Half::new(Arc::new(NbowEncoder::new(table.clone())), Arc::new(FragileQuery(NbowEncoder::new(table))));
    let spec = EnsembleSpec::description_only(half);
    let index = build_index(&collection, &spec).unwrap().index;
    Arc::new(SearchService::new(collection, spec, index).unwrap())
}

fn app(service: Arc<SearchService>) -> Router {
    router(service, cors_layer(&[]).unwrap())
}

async fn get(app: Router, uri: &str) -> (StatusCode, Value, String) {
    let response = app.oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = response.status();
    let bytes = to_bytes(response.into_body(), usize::MAX).await.unwrap();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null), text)
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, body, _) = get(app(service()), "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::json!({ "status": "ok" }));
}

#[tokio::test]
async fn search_returns_ranked_results() {
    let svc = service();
    let (status, _, text) = get(app(svc.clone()), "/api/search?q=sort+list").await;
    assert_eq!(status, StatusCode::OK);
    let body: SearchResponse = serde_json::from_str(&text).unwrap();
    assert_eq!(body.query, "sort list");
    assert!(!body.results.is_empty() && body.results.len() <= 10);
    for (i, r) in body.results.iter().enumerate() {
        assert_eq!(r.rank, i + 1);
        let snippet = svc.collection().get(&r.id).unwrap();
        assert_eq!(r.code, snippet.code);
        assert_eq!(r.description, snippet.description);
        assert_eq!(r.url, snippet.url);
    }
    assert!(body.results.windows(2).all(|w| w[0].score >= w[1].score));
}

#[tokio::test]
async fn search_matches_the_shared_service_path() {
    let svc = service();
    let (_, _, text) = get(app(svc.clone()), "/api/search?q=read%20a%20file&k=7").await;
    let body: SearchResponse = serde_json::from_str(&text).unwrap();
    assert_eq!(body, svc.search("read a file", 7).unwrap());
    assert_eq!(body.results.len(), 7);
}

#[tokio::test]
async fn k_bounds() {
    let svc = service();
    let (status, _, text) = get(app(svc.clone()), "/api/search?q=plot&k=100").await;
    assert_eq!(status, StatusCode::OK);
    let body: SearchResponse = serde_json::from_str(&text).unwrap();
    assert_eq!(body.results.len(), 40);
    for uri in ["/api/search?q=plot&k=0", "/api/search?q=plot&k=101", "/api/search?q=plot&k=ten", "/api/search?q=plot&k=-1"] {
        let (status, body, _) = get(app(svc.clone()), uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(body["error"].is_string(), "{uri}");
    }
}

#[tokio::test]
async fn missing_or_blank_query_is_rejected() {
    for uri in ["/api/search", "/api/search?k=3", "/api/search?q=", "/api/search?q=%20%20"] {
        let (status, body, _) = get(app(service()), uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(body["error"].is_string(), "{uri}");
    }
}

#[tokio::test]
async fn unknown_words_give_an_empty_result_list() {
    let (status, _, text) = get(app(service()), "/api/search?q=qqqzzzxxx").await;
    assert_eq!(status, StatusCode::OK);
    let body: SearchResponse = serde_json::from_str(&text).unwrap();
    // Subword vectors may still place an unknown word near something,
    // but results must stay well-formed.
    assert!(body.results.iter().enumerate().all(|(i, r)| r.rank == i + 1));
}

#[tokio::test]
async fn encoder_failure_is_an_opaque_500() {
    let svc = fragile_service();
    let (status, body, text) = get(app(svc.clone()), "/api/search?q=explode+now").await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(body["error"], "internal error");
    assert!(!text.contains("explode"));
    let (status, _, _) = get(app(svc), "/api/search?q=sort+list").await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let svc = service();
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let a = app(svc.clone());
            tokio::spawn(async move { get(a, "/api/search?q=convert+string+to+datetime&k=25").await.2 })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        bodies.push(t.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn cors_headers_follow_configuration() {
    let request = || Request::get("/api/health").header("origin", "http://ui.example").body(Body::empty()).unwrap();
    let any = router(service(), cors_layer(&[]).unwrap()).oneshot(request()).await.unwrap();
    assert_eq!(any.headers()["access-control-allow-origin"], "*");
    let listed = router(service(), cors_layer(&["http://ui.example".into()]).unwrap()).oneshot(request()).await.unwrap();
    assert_eq!(listed.headers()["access-control-allow-origin"], "http://ui.example");
    let other = router(service(), cors_layer(&["http://elsewhere.example".into()]).unwrap()).oneshot(request()).await.unwrap();
    assert!(other.headers().get("access-control-allow-origin").is_none());
}
