//! End-to-end search: drafts are retrieved in parallel, pooled, and re-ranked
//! against the original query.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::drafting::normalize_whitespace;
use crate::embedding::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::index::{parallel_retrieve, select_top, EmbeddingIndex, RankedResult, ScoredKeyframe};
use crate::keyframes::Manifest;

/// Default number of final keyframes.
pub const DEFAULT_FINAL_K: usize = 600;
/// Default per-draft retrieval depth (the final K, so the single-draft pipeline is plain retrieval).
pub const DEFAULT_K_PER_DRAFT: usize = DEFAULT_FINAL_K;
/// Default neighbor radius.
pub const DEFAULT_NEIGHBOR_RADIUS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub original_query: String,
    pub drafts: Vec<String>,
    pub k_per_draft: usize,
    pub final_k: usize,
    pub ocr_filter: Option<String>,
    pub include_original_as_draft: bool,
}

impl SearchRequest {
    pub fn new(original_query: impl Into<String>) -> Self {
        Self {
            original_query: original_query.into(),
            drafts: Vec::new(),
            k_per_draft: DEFAULT_K_PER_DRAFT,
            final_k: DEFAULT_FINAL_K,
            ocr_filter: None,
            include_original_as_draft: true,
        }
    }

    pub fn with_drafts(mut self, drafts: Vec<String>) -> Self {
        self.drafts = drafts;
        self
    }

    pub fn with_k(mut self, k_per_draft: usize, final_k: usize) -> Self {
        self.k_per_draft = k_per_draft;
        self.final_k = final_k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.original_query.trim().is_empty() {
            return Err(Error::Validation("original_query is empty".into()));
        }
        if self.final_k == 0 || self.k_per_draft == 0 {
            return Err(Error::Validation("k_per_draft and final_k must be at least 1".into()));
        }
        if matches!(&self.ocr_filter, Some(n) if normalize_ocr(n).is_empty()) {
            return Err(Error::Validation("ocr_filter is empty".into()));
        }
        Ok(())
    }

    /// Drafts actually retrieved: the request's drafts, blanks and repeats
    /// dropped, plus the original query when asked for or when nothing is left.
    pub fn effective_drafts(&self) -> Vec<String> {
        let original = normalize_whitespace(&self.original_query);
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for d in &self.drafts {
            let d = normalize_whitespace(d);
            if !d.is_empty() && seen.insert(d.clone()) {
                out.push(d);
            }
        }
        if (self.include_original_as_draft || out.is_empty()) && !seen.contains(&original) {
            out.push(original);
        }
        out
    }
}

/// Deduplicated union of the per-draft candidates, ascending by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidatePool {
    ids: Vec<usize>,
}

impl CandidatePool {
    pub fn flatten(per_draft: &[RankedResult]) -> Self {
        let ids: BTreeSet<usize> = per_draft
            .iter()
            .flat_map(|r| r.entries.iter().map(|e| e.keyframe_id))
            .collect();
        Self { ids: ids.into_iter().collect() }
    }

    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Self {
        let ids: BTreeSet<usize> = ids.into_iter().collect();
        Self { ids: ids.into_iter().collect() }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// NFC, lowercase, whitespace runs collapsed to one space.
pub fn normalize_ocr(text: &str) -> String {
    let lowered: String = text.nfc().collect::<String>().to_lowercase();
    normalize_whitespace(&lowered)
}

/// Keeps pool members whose OCR text contains `needle` after normalization.
/// Frames without OCR text never match.
pub fn apply_ocr_filter(pool: &CandidatePool, needle: &str, manifest: &Manifest) -> CandidatePool {
    let needle = normalize_ocr(needle);
    CandidatePool {
        ids: pool
            .ids
            .iter()
            .copied()
            .filter(|&id| {
                manifest
                    .get(id)
                    .and_then(|r| r.ocr_text.as_deref())
                    .is_some_and(|t| normalize_ocr(t).contains(&needle))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborWindow {
    pub center: usize,
    pub radius: usize,
    pub frames: Vec<usize>,
}

/// Up to `radius` keyframes either side of `center`, within its own video.
pub fn neighbor_window(center: usize, radius: usize, manifest: &Manifest) -> Result<NeighborWindow> {
    let record = manifest
        .get(center)
        .ok_or_else(|| Error::NotFound(format!("keyframe {center}")))?;
    let video = manifest
        .video_range(&record.video_id)
        .expect("every manifest record belongs to an indexed video");
    let start = center.saturating_sub(radius).max(video.start);
    let end = center.saturating_add(radius).saturating_add(1).min(video.end);
    Ok(NeighborWindow { center, radius, frames: (start..end).collect() })
}

/// Everything a search needs: the index, its manifest and a text embedder.
#[derive(Clone)]
pub struct Engine {
    index: Arc<EmbeddingIndex>,
    manifest: Arc<Manifest>,
    embedder: Arc<dyn Embedder>,
}

impl Engine {
    pub fn new(index: EmbeddingIndex, manifest: Manifest, embedder: Arc<dyn Embedder>) -> Result<Self> {
        if index.len() != manifest.len() {
            return Err(Error::Config(format!(
                "index has {} rows but manifest lists {} keyframes",
                index.len(),
                manifest.len()
            )));
        }
        if index.dimension() != embedder.dimension() {
            return Err(Error::Config(format!(
                "index dimension {} differs from embedder dimension {}",
                index.dimension(),
                embedder.dimension()
            )));
        }
        Ok(Self { index: Arc::new(index), manifest: Arc::new(manifest), embedder })
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Candidate pool for a request, after the OCR filter, plus the original query embedding.
    pub fn candidate_pool(&self, request: &SearchRequest) -> Result<(CandidatePool, EmbeddingVector)> {
        request.validate()?;
        let drafts = request.effective_drafts();
        let original = normalize_whitespace(&request.original_query);

        let mut texts = drafts.clone();
        let original_slot = match drafts.iter().position(|d| *d == original) {
            Some(i) => i,
            None => {
                texts.push(original);
                texts.len() - 1
            }
        };
        let mut vectors = self.embedder.embed_texts(&texts)?;
        let original_vec = vectors[original_slot].clone();
        vectors.truncate(drafts.len());

        let per_draft = parallel_retrieve(&vectors, &self.index, request.k_per_draft)?;
        let mut pool = CandidatePool::flatten(&per_draft);
        if let Some(needle) = &request.ocr_filter {
            pool = apply_ocr_filter(&pool, needle, &self.manifest);
        }
        Ok((pool, original_vec))
    }

    /// Runs the full pipeline and returns at most `final_k` keyframes.
    pub fn search(&self, request: &SearchRequest) -> Result<RankedResult> {
        let (pool, original) = self.candidate_pool(request)?;
        let scored = pool
            .ids()
            .iter()
            .map(|&keyframe_id| ScoredKeyframe { keyframe_id, score: self.index.score(&original, keyframe_id) })
            .collect();
        select_top(scored, request.final_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{mock_embed, MockEmbedder};
    use crate::index::top_k;
    use crate::keyframes::KeyframeRecord;

    fn record(id: usize, video: &str, frame: u64, ocr: Option<&str>) -> KeyframeRecord {
        KeyframeRecord {
            keyframe_id: id,
            video_id: video.into(),
            scene_index: 1,
            frame_index: frame,
            image_path: String::new(),
            ocr_text: ocr.map(String::from),
        }
    }

    fn engine(captions: &[&str]) -> Engine {
        let d = 64;
        let manifest = Manifest::from_records(
            captions.iter().enumerate().map(|(i, _)| record(i, "v", i as u64 + 1, None)).collect(),
        )
        .unwrap();
        let vectors: Vec<_> = captions.iter().map(|c| mock_embed(c, d)).collect();
        let index = EmbeddingIndex::from_vectors(d, &vectors).unwrap();
        Engine::new(index, manifest, Arc::new(MockEmbedder::new(d).unwrap())).unwrap()
    }

    #[test]
    fn ocr_filter_normalizes() {
        let manifest = Manifest::from_records(vec![
            record(0, "v", 1, Some("HTV9  NEWS")),
            record(1, "v", 2, Some("VTV1")),
            record(2, "v", 3, None),
        ])
        .unwrap();
        let pool = CandidatePool::from_ids([0, 1, 2]);
        assert_eq!(apply_ocr_filter(&pool, "htv9", &manifest).ids(), &[0]);
        assert_eq!(apply_ocr_filter(&pool, "HTV9 news", &manifest).ids(), &[0]);
        assert!(apply_ocr_filter(&pool, "xyz", &manifest).is_empty());
        // Decomposed "é" matches its composed form.
        let accented = Manifest::from_records(vec![record(0, "v", 1, Some("Caf\u{e9} Sài Gòn"))]).unwrap();
        assert_eq!(apply_ocr_filter(&CandidatePool::from_ids([0]), "CAFE\u{301}", &accented).ids(), &[0]);
    }

    #[test]
    fn neighbor_windows() {
        let mut recs: Vec<_> = (0..7).map(|i| record(i, "a", i as u64 + 1, None)).collect();
        recs.extend((7..10).map(|i| record(i, "b", i as u64, None)));
        let m = Manifest::from_records(recs).unwrap();
        assert_eq!(neighbor_window(3, 2, &m).unwrap().frames, vec![1, 2, 3, 4, 5]);
        assert_eq!(neighbor_window(0, 3, &m).unwrap().frames, vec![0, 1, 2, 3]);
        assert_eq!(neighbor_window(5, 0, &m).unwrap().frames, vec![5]);
        assert_eq!(neighbor_window(7, 5, &m).unwrap().frames, vec![7, 8, 9]);
        assert_eq!(neighbor_window(6, 5, &m).unwrap().frames, vec![1, 2, 3, 4, 5, 6]);
        assert!(matches!(neighbor_window(10, 1, &m), Err(Error::NotFound(_))));
    }

    #[test]
    fn effective_drafts_rules() {
        let r = SearchRequest::new("q").with_drafts(vec!["a".into(), "a ".into(), " ".into()]);
        assert_eq!(r.effective_drafts(), vec!["a", "q"]);
        let mut r2 = r.clone();
        r2.include_original_as_draft = false;
        assert_eq!(r2.effective_drafts(), vec!["a"]);
        let r3 = SearchRequest { include_original_as_draft: false, ..SearchRequest::new("q") };
        assert_eq!(r3.effective_drafts(), vec!["q"]);
    }

    #[test]
    fn request_validation() {
        assert!(SearchRequest::new(" ").validate().is_err());
        assert!(SearchRequest::new("q").with_k(0, 5).validate().is_err());
        let r = SearchRequest { ocr_filter: Some("  ".into()), ..SearchRequest::new("q") };
        assert!(r.validate().is_err());
    }

    #[test]
    fn single_draft_pipeline_is_direct_retrieval() {
        let e = engine(&["red car", "blue car", "red bus", "green tree", "car park", "red"]);
        let req = SearchRequest::new("red car").with_drafts(vec!["red car".into()]).with_k(3, 3);
        let got = e.search(&req).unwrap();
        let q = mock_embed("red car", 64);
        let scores: Vec<f32> = (0..6).map(|i| e.index().score(&q, i)).collect();
        assert_eq!(got, top_k(&scores, 3).unwrap());
    }

    #[test]
    fn pool_is_bounded_and_ocr_can_empty_it() {
        let e = engine(&["a b", "b c", "c d", "d e", "e f", "f a"]);
        let req = SearchRequest::new("a").with_drafts(vec!["b".into(), "c".into()]).with_k(2, 10);
        let (pool, _) = e.candidate_pool(&req).unwrap();
        assert!(pool.len() <= 3 * 2);
        let filtered = SearchRequest { ocr_filter: Some("x".into()), ..req };
        assert!(e.search(&filtered).unwrap().is_empty());
    }

    #[test]
    fn engine_rejects_mismatched_parts() {
        let manifest = Manifest::from_records(vec![record(0, "v", 1, None)]).unwrap();
        let index = EmbeddingIndex::from_vectors(8, &[]).unwrap();
        assert!(Engine::new(index, manifest, Arc::new(MockEmbedder::new(8).unwrap())).is_err());
    }
}
