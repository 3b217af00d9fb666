use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rapid_core::embedding::mock_embed;
use rapid_core::index::top_k;
use rapid_core::keyframes::KeyframeRecord;
use rapid_core::pipeline::neighbor_window;
use rapid_core::{EmbeddingIndex, Engine, Manifest, MockEmbedder, SearchRequest};

const D: usize = 64;
const VOCAB: &[&str] = &["red", "car", "boat", "river", "man", "dog", "street", "night", "crowd", "flag"];

fn caption() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(VOCAB), 1..5).prop_map(|w| w.join(" "))
}

fn corpus() -> impl Strategy<Value = (Vec<String>, Vec<usize>)> {
    // captions plus per-frame video assignment (sorted so ids stay in video order)
    proptest::collection::vec((caption(), 0usize..4), 1..40).prop_map(|mut v| {
        v.sort_by_key(|(_, video)| *video);
        v.into_iter().unzip()
    })
}

fn engine(captions: &[String], videos: &[usize]) -> Engine {
    let records = captions
        .iter()
        .zip(videos)
        .enumerate()
        .map(|(i, (_, v))| KeyframeRecord {
            keyframe_id: i,
            video_id: format!("v{v}"),
            scene_index: 1,
            frame_index: i as u64 + 1,
            image_path: String::new(),
            ocr_text: None,
        })
        .collect();
    let vectors: Vec<_> = captions.iter().map(|c| mock_embed(c, D)).collect();
    Engine::new(
        EmbeddingIndex::from_vectors(D, &vectors).unwrap(),
        Manifest::from_records(records).unwrap(),
        Arc::new(MockEmbedder::new(D).unwrap()),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn original_draft_top_k_survives_reranking(
        (captions, videos) in corpus(),
        q0 in caption(),
        drafts in proptest::collection::vec(caption(), 0..4),
        k in 1usize..15,
    ) {
        let e = engine(&captions, &videos);
        let req = SearchRequest::new(q0.clone()).with_drafts(drafts).with_k(k, k);
        let got: BTreeSet<usize> = e.search(&req).unwrap().ids().into_iter().collect();
        let q = mock_embed(&q0, D);
        let scores: Vec<f32> = (0..captions.len()).map(|i| e.index().score(&q, i)).collect();
        for id in top_k(&scores, k).unwrap().ids() {
            prop_assert!(got.contains(&id));
        }
    }

    #[test]
    fn pool_never_exceeds_drafts_times_k(
        (captions, videos) in corpus(),
        q0 in caption(),
        drafts in proptest::collection::vec(caption(), 0..4),
        k in 1usize..10,
    ) {
        let e = engine(&captions, &videos);
        let req = SearchRequest::new(q0).with_drafts(drafts).with_k(k, 100);
        let (pool, _) = e.candidate_pool(&req).unwrap();
        prop_assert!(pool.len() <= req.effective_drafts().len() * k);
    }

    #[test]
    fn neighbor_windows_stay_in_video((captions, videos) in corpus(), pi in 0usize..6, pick in any::<prop::sample::Index>()) {
        let e = engine(&captions, &videos);
        let center = pick.index(captions.len());
        let w = neighbor_window(center, pi, e.manifest()).unwrap();
        let video = &e.manifest().records()[center].video_id;
        prop_assert!(w.frames.contains(&center));
        prop_assert!(w.frames.len() <= 2 * pi + 1);
        prop_assert!(w.frames.windows(2).all(|p| p[1] == p[0] + 1));
        prop_assert!(w.frames.iter().all(|&f| &e.manifest().records()[f].video_id == video));
        let before = center - w.frames[0];
        let after = w.frames.last().unwrap() - center;
        // Symmetric unless clamped by the video boundary.
        let range = e.manifest().video_range(video).unwrap();
        prop_assert!(before == pi || w.frames[0] == range.start);
        prop_assert!(after == pi || *w.frames.last().unwrap() == range.end - 1);
    }
}
