//! Multi-draft text-to-keyframe retrieval for video event search.
//!
//! A short query is expanded into several context-enriched drafts, every
//! draft retrieves its top-k keyframes from a shared embedding index in
//! parallel, and the pooled candidates are re-ranked against the original
//! query.
//!
//! - [`keyframes`]: scene boundaries to keyframe manifest
//! - [`embedding`], [`store`]: text/frame embeddings and the binary store
//! - [`drafting`]: few-shot prompt, chat client and mock drafter
//! - [`index`]: exact cosine top-k search
//! - [`pipeline`]: pooling, OCR filter, re-ranking, neighbor windows
//! - [`eval`]: MRR / P@k / R@k harness
//! - [`synth`]: synthetic corpus for offline experiments

pub mod drafting;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod index;
pub mod jsonl;
pub mod keyframes;
pub mod pipeline;
pub mod store;
pub mod synth;

pub use drafting::{Drafter, DraftSet, FewShotExample, MockDrafter};
pub use embedding::{Embedder, EmbeddingVector, MockEmbedder};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalRecord, MetricReport, QueryMode};
pub use index::{EmbeddingIndex, RankedResult, ScoredKeyframe};
pub use keyframes::{KeyframeRecord, Manifest, SceneBoundary};
pub use pipeline::{CandidatePool, Engine, NeighborWindow, SearchRequest};
pub use store::EmbeddingStore;
