#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use rapid_cli::config::Defaults;
use rapid_cli::service::{router, AppState, VideoMeta};
use rapid_core::embedding::{embed_keyframes, KeyframeSource};
use rapid_core::keyframes::ImagePathTemplate;
use rapid_core::synth::{generate, SyntheticCorpus, SyntheticParams};
use rapid_core::{Drafter, EmbeddingIndex, Engine, MockDrafter, MockEmbedder};

pub const DIM: usize = 128;

pub struct Fixture {
    pub corpus: SyntheticCorpus,
    pub engine: Engine,
    pub _dir: tempfile::TempDir,
}

/// A small synthetic corpus whose keyframe images exist on disk.
pub fn fixture(events: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&SyntheticParams { events, ..Default::default() }).unwrap();
    let images = ImagePathTemplate::with_root(dir.path().to_string_lossy());
    let manifest = corpus.manifest(&images).unwrap();
    for rec in manifest.records() {
        let p = Path::new(&rec.image_path);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, format!("jpeg-bytes-{}", rec.keyframe_id)).unwrap();
    }
    let captions: HashMap<usize, String> = corpus
        .captions(&manifest)
        .into_iter()
        .map(|c| (c.keyframe_id, c.caption_tokens))
        .collect();
    let embedder = Arc::new(MockEmbedder::new(DIM).unwrap());
    let store = embed_keyframes(&manifest, KeyframeSource::Captions(&captions), embedder.as_ref()).unwrap();
    let engine = Engine::new(EmbeddingIndex::from_store(store), manifest, embedder).unwrap();
    Fixture { corpus, engine, _dir: dir }
}

pub fn state(f: &Fixture, drafter: Arc<dyn Drafter>, submit_url: Option<String>) -> Arc<AppState> {
    let videos = f
        .engine
        .manifest()
        .records()
        .iter()
        .map(|r| {
            (
                r.video_id.clone(),
                VideoMeta { video_id: r.video_id.clone(), url: format!("https://example.org/{}", r.video_id), fps: Some(25.0) },
            )
        })
        .collect();
    Arc::new(AppState {
        engine: Some(f.engine.clone()),
        drafter,
        defaults: Defaults::default(),
        videos,
        submit_url,
    })
}

pub fn mock_state(f: &Fixture) -> Arc<AppState> {
    state(f, Arc::new(MockDrafter::new(f.corpus.gazetteer.clone()).unwrap()), None)
}

pub async fn call(state: Arc<AppState>, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(state: Arc<AppState>, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, serde_json::Value) {
    let (status, bytes) = call(state, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}
