//! Exact cosine search over the keyframe embedding matrix.
//!
//! Rows are unit-norm, so cosine similarity is a plain dot product. Scores
//! are computed in row blocks so each block of the index is streamed from
//! memory once for all queries. Ranking is exact: results equal a full sort
//! by `(score desc, keyframe_id asc)`, with scores ordered by IEEE total order.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

/// Rows per scoring block: 512 rows of 512 floats is 1 MiB, comfortably in L2.
const ROW_BLOCK: usize = 512;

/// Immutable embedding matrix; row `r` belongs to keyframe id `r`.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dimension: usize,
    rows: Vec<f32>,
}

impl EmbeddingIndex {
    pub fn from_store(store: EmbeddingStore) -> Self {
        let dimension = store.dimension();
        Self {
            dimension,
            rows: store.into_flat(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_store(EmbeddingStore::read(path)?))
    }

    pub fn from_vectors(dimension: usize, vectors: &[EmbeddingVector]) -> Result<Self> {
        let mut rows = Vec::with_capacity(vectors.len() * dimension);
        for v in vectors {
            if v.dimension() != dimension {
                return Err(Error::Config(format!(
                    "vector dimension {} does not match index dimension {dimension}",
                    v.dimension()
                )));
            }
            rows.extend_from_slice(v.as_slice());
        }
        Ok(Self::from_store(EmbeddingStore::new(dimension, rows)?))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, keyframe_id: usize) -> &[f32] {
        &self.rows[keyframe_id * self.dimension..(keyframe_id + 1) * self.dimension]
    }

    /// Cosine between `query` and one stored row.
    pub fn score(&self, query: &EmbeddingVector, keyframe_id: usize) -> f32 {
        dot(query.as_slice(), self.row(keyframe_id))
    }

    fn check_queries(&self, queries: &[EmbeddingVector]) -> Result<()> {
        match queries.iter().find(|q| q.dimension() != self.dimension) {
            Some(q) => Err(Error::Config(format!(
                "query dimension {} does not match index dimension {}",
                q.dimension(),
                self.dimension
            ))),
            None => Ok(()),
        }
    }
}

/// Dot product with eight independent f32 lanes.
///
/// The summation order depends only on the slice length, so a given pair of
/// vectors always produces the same bits regardless of threading.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Dense `queries x keyframes` score matrix, query-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    queries: usize,
    keyframes: usize,
    data: Vec<f32>,
}

impl ScoreMatrix {
    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn keyframes(&self) -> usize {
        self.keyframes
    }

    pub fn row(&self, query: usize) -> &[f32] {
        &self.data[query * self.keyframes..(query + 1) * self.keyframes]
    }

    pub fn get(&self, query: usize, keyframe_id: usize) -> f32 {
        self.data[query * self.keyframes + keyframe_id]
    }
}

/// Cosine similarity of every query against every indexed keyframe.
pub fn similarity_matrix(queries: &[EmbeddingVector], index: &EmbeddingIndex) -> Result<ScoreMatrix> {
    index.check_queries(queries)?;
    let n = queries.len();
    let m = index.len();
    let d = index.dimension;
    if n == 0 || m == 0 {
        return Ok(ScoreMatrix { queries: n, keyframes: m, data: vec![0.0; n * m] });
    }

    // Each block yields its scores query-major; blocks are stitched back in order.
    let blocks: Vec<Vec<f32>> = index
        .rows
        .par_chunks(ROW_BLOCK * d)
        .map(|block| {
            let rows_in_block = block.len() / d;
            let mut out = vec![0.0f32; n * rows_in_block];
            for (r, row) in block.chunks_exact(d).enumerate() {
                for (qi, q) in queries.iter().enumerate() {
                    out[qi * rows_in_block + r] = dot(q.as_slice(), row);
                }
            }
            out
        })
        .collect();

    let mut data = vec![0.0f32; n * m];
    for (b, block) in blocks.iter().enumerate() {
        let start = b * ROW_BLOCK;
        let rows_in_block = block.len() / n;
        for qi in 0..n {
            data[qi * m + start..qi * m + start + rows_in_block]
                .copy_from_slice(&block[qi * rows_in_block..(qi + 1) * rows_in_block]);
        }
    }
    Ok(ScoreMatrix { queries: n, keyframes: m, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredKeyframe {
    pub keyframe_id: usize,
    pub score: f32,
}

/// Ranking order: higher score first, then lower keyframe id.
pub fn rank_order(a: &ScoredKeyframe, b: &ScoredKeyframe) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.keyframe_id.cmp(&b.keyframe_id))
}

/// Keyframes in rank order. Scores never increase; ties resolve by ascending id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub entries: Vec<ScoredKeyframe>,
}

impl RankedResult {
    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.keyframe_id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Keeps the best `k` of `candidates` (ids must be distinct) in rank order.
pub fn select_top(mut candidates: Vec<ScoredKeyframe>, k: usize) -> Result<RankedResult> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    Ok(RankedResult { entries: candidates })
}

/// The `min(k, scores.len())` best keyframes of one score row.
pub fn top_k(scores: &[f32], k: usize) -> Result<RankedResult> {
    let candidates = scores
        .iter()
        .enumerate()
        .map(|(keyframe_id, &score)| ScoredKeyframe { keyframe_id, score })
        .collect();
    select_top(candidates, k)
}

/// Top-k retrieval for every draft embedding, one result per draft.
///
/// Runs on the ambient rayon pool. The output does not depend on the number
/// of worker threads.
pub fn parallel_retrieve(
    drafts: &[EmbeddingVector],
    index: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<RankedResult>> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let scores = similarity_matrix(drafts, index)?;
    (0..drafts.len())
        .into_par_iter()
        .map(|qi| top_k(scores.row(qi), k))
        .collect()
}

/// [`parallel_retrieve`] on a dedicated pool of `workers` threads.
pub fn parallel_retrieve_with_workers(
    drafts: &[EmbeddingVector],
    index: &EmbeddingIndex,
    k: usize,
    workers: usize,
) -> Result<Vec<RankedResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| parallel_retrieve(drafts, index, k))
}
