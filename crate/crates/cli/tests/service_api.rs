mod common;

use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use common::*;
use rapid_cli::config::Defaults;
use rapid_cli::service::AppState;
use rapid_core::index::top_k;
use rapid_core::{Drafter, Error, MockDrafter};

struct Failing(fn() -> Error);

impl Drafter for Failing {
    fn generate_drafts(&self, _q0: &str, _n: usize) -> rapid_core::Result<Vec<String>> {
        Err((self.0)())
    }
}

#[tokio::test]
async fn augment_defaults_to_six_drafts() {
    let f = fixture(8);
    let (status, body) = call_json(mock_state(&f), "POST", "/api/augment", Some(r#"{"query": "A monk is writing"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let drafts = body["drafts"].as_array().unwrap();
    assert_eq!(drafts.len(), 6);
    assert_eq!(drafts[0], format!("A monk is writing {}", f.corpus.gazetteer[0]));

    let (_, again) = call_json(mock_state(&f), "POST", "/api/augment", Some(r#"{"query": "A monk is writing"}"#)).await;
    assert_eq!(body, again);

    let (_, two) = call_json(mock_state(&f), "POST", "/api/augment", Some(r#"{"query": "x", "n_drafts": 2}"#)).await;
    assert_eq!(two["drafts"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn augment_rejects_bad_requests() {
    let f = fixture(4);
    for body in [r#"{"query": ""}"#, r#"{"query": "  "}"#, r#"{"query": "x", "extra": 1}"#, "not json", r#"{"query": "x", "n_drafts": 0}"#] {
        let (status, _) = call_json(mock_state(&f), "POST", "/api/augment", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
}

#[tokio::test]
async fn augment_failures() {
    let f = fixture(4);
    let unparseable = state(&f, Arc::new(Failing(|| Error::Parse { message: "junk".into(), raw: "junk".into() })), None);
    let (status, body) = call_json(unparseable, "POST", "/api/augment", Some(r#"{"query": "x"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["drafts"], json!([]));
    assert!(body["warning"].as_str().unwrap().contains("junk"));

    let down = state(&f, Arc::new(Failing(|| Error::Drafting("gave up after 3 attempts".into()))), None);
    let (status, _) = call_json(down, "POST", "/api/augment", Some(r#"{"query": "x"}"#)).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
}

#[tokio::test]
async fn search_without_drafts_is_direct_retrieval() {
    let f = fixture(20);
    let q = &f.corpus.records[0].query;
    let body = json!({ "original_query": q, "drafts": [], "K": 10 }).to_string();
    let (status, resp) = call_json(mock_state(&f), "POST", "/api/search", Some(&body)).await;
    assert_eq!(status, StatusCode::OK);
    let got: Vec<u64> = resp["results"].as_array().unwrap().iter().map(|r| r["keyframe_id"].as_u64().unwrap()).collect();

    let qv = f.engine.embedder().embed_texts(&[q.clone()]).unwrap().remove(0);
    let scores: Vec<f32> = (0..f.engine.index().len()).map(|i| f.engine.index().score(&qv, i)).collect();
    let want: Vec<u64> = top_k(&scores, 10).unwrap().ids().into_iter().map(|i| i as u64).collect();
    assert_eq!(got, want);

    let first = &resp["results"][0];
    let id = first["keyframe_id"].as_u64().unwrap() as usize;
    let rec = &f.engine.manifest().records()[id];
    assert_eq!(first["video_id"], rec.video_id);
    assert_eq!(first["frame_index"], rec.frame_index);
    assert_eq!(first["image_url"], format!("/api/keyframes/{id}/image"));
}

#[tokio::test]
async fn search_is_byte_stable_and_filters_ocr() {
    let f = fixture(20);
    let body = json!({ "original_query": "monk writing", "drafts": ["monk writing old stone pagoda"], "k": 30, "K": 15 }).to_string();
    let (s1, b1) = call(mock_state(&f), "POST", "/api/search", Some(&body)).await;
    let (s2, b2) = call(mock_state(&f), "POST", "/api/search", Some(&body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);

    let none = json!({ "original_query": "monk", "drafts": [], "ocr_filter": "no such channel" }).to_string();
    let (status, resp) = call_json(mock_state(&f), "POST", "/api/search", Some(&none)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp, json!({ "results": [] }));

    let news = json!({ "original_query": "monk", "drafts": [], "ocr_filter": "vtv", "K": 1000 }).to_string();
    let (_, resp) = call_json(mock_state(&f), "POST", "/api/search", Some(&news)).await;
    for hit in resp["results"].as_array().unwrap() {
        let rec = &f.engine.manifest().records()[hit["keyframe_id"].as_u64().unwrap() as usize];
        assert!(rec.ocr_text.as_deref().unwrap().to_lowercase().contains("vtv"));
    }
}

#[tokio::test]
async fn search_validation_and_missing_index() {
    let f = fixture(4);
    for body in [
        r#"{"original_query": ""}"#,
        r#"{"original_query": "x", "K": 0}"#,
        r#"{"original_query": "x", "ocr_filter": ""}"#,
        r#"{"original_query": "x", "surprise": true}"#,
        r#"{"drafts": []}"#,
    ] {
        let (status, _) = call_json(mock_state(&f), "POST", "/api/search", Some(body)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
    let empty = Arc::new(AppState {
        engine: None,
        drafter: Arc::new(MockDrafter::new(vec!["x".into()]).unwrap()),
        defaults: Defaults::default(),
        videos: Default::default(),
        submit_url: None,
    });
    let (status, _) = call_json(empty, "POST", "/api/search", Some(r#"{"original_query": "x"}"#)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn neighbors_and_assets() {
    let f = fixture(4);
    let (status, body) = call_json(mock_state(&f), "GET", "/api/keyframes/0/neighbors?pi=0", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["frames"].as_array().unwrap().len(), 1);

    let (_, body) = call_json(mock_state(&f), "GET", "/api/keyframes/0/neighbors?pi=3", None).await;
    let frames = body["frames"].as_array().unwrap();
    assert!(frames.len() <= 4);
    assert_eq!(frames[0]["keyframe_id"], 0);

    let (_, body) = call_json(mock_state(&f), "GET", "/api/keyframes/2/neighbors", None).await;
    assert_eq!(body["pi"], 5);

    let unknown = f.engine.manifest().len();
    for route in ["neighbors", "image", "video_link"] {
        let (status, _) = call_json(mock_state(&f), "GET", &format!("/api/keyframes/{unknown}/{route}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{route}");
    }

    let (status, bytes) = call(mock_state(&f), "GET", "/api/keyframes/1/image", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, b"jpeg-bytes-1");

    let (status, body) = call_json(mock_state(&f), "GET", "/api/keyframes/1/video_link", None).await;
    assert_eq!(status, StatusCode::OK);
    let rec = &f.engine.manifest().records()[1];
    assert_eq!(body["url"], format!("https://example.org/{}", rec.video_id));
    let expected = (rec.frame_index - 1) as f64 / 25.0;
    assert!((body["timestamp_seconds"].as_f64().unwrap() - expected).abs() < 1e-9);
}

#[tokio::test]
async fn submit_forwards_to_webhook_or_logs() {
    let f = fixture(4);
    let (status, body) = call_json(mock_state(&f), "POST", "/api/submit", Some(r#"{"keyframe_id": 3}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "logged");

    let received: Arc<Mutex<Vec<Value>>> = Arc::default();
    let sink = received.clone();
    let app = Router::new().route(
        "/hook",
        post(move |Json(v): Json<Value>| {
            let sink = sink.clone();
            async move {
                sink.lock().unwrap().push(v);
                "ok"
            }
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });

    let st = state(&f, Arc::new(MockDrafter::new(vec!["x".into()]).unwrap()), Some(format!("http://{addr}/hook")));
    let (status, body) = call_json(st, "POST", "/api/submit", Some(r#"{"keyframe_id": 3}"#)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "forwarded");
    let got = received.lock().unwrap().clone();
    assert_eq!(got.len(), 1);
    assert_eq!(got[0]["keyframe_id"], 3);

    let (status, _) = call_json(mock_state(&f), "POST", "/api/submit", Some(r#"{"keyframe_id": 99999}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
