//! Text and keyframe embeddings.
//!
//! Two backends sit behind [`Embedder`]: an HTTP client for an external
//! CLIP-style service, and a deterministic feature-hashing mock used for
//! offline runs and tests. Every vector leaving this module is unit-norm.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::keyframes::Manifest;
use crate::store::EmbeddingStore;

/// A finite, L2-normalized vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Fails on non-finite or all-zero input.
    pub fn normalized(raw: Vec<f32>) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        let norm = raw.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Validation("cannot normalize an all-zero embedding".into()));
        }
        Ok(Self(raw.into_iter().map(|v| (f64::from(v) / norm) as f32).collect()))
    }

    /// Wraps a vector the caller guarantees is already unit-norm (e.g. a store row).
    pub fn from_unit(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn basis(d: usize, axis: usize) -> Self {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Maps text (and, for real backends, images) into the shared vector space.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn embed_image(&self, image_path: &str) -> Result<EmbeddingVector>;
}

fn check_texts(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::Validation("embed_texts called with no texts".into()));
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(Error::Validation(format!("text {i} is blank")));
    }
    Ok(())
}

/// Seed mixed into every token hash of the mock embedder ("RAPIDMCK" as little-endian bytes).
pub const MOCK_HASH_SEED: u64 = u64::from_le_bytes(*b"RAPIDMCK");

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the seed's little-endian bytes followed by the token's UTF-8 bytes.
pub fn token_hash(token: &str) -> u64 {
    MOCK_HASH_SEED
        .to_le_bytes()
        .iter()
        .chain(token.as_bytes())
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing of the token bag.
///
/// Each token hash `h` adds `±1` at index `h mod d`; the sign is `+` when bit 32
/// of `h` is clear. The sum is L2-normalized. Text without tokens maps to `e₀`.
pub fn mock_embed(text: &str, d: usize) -> EmbeddingVector {
    assert!(d >= 8, "mock embedding dimension must be at least 8");
    let mut acc = vec![0.0f32; d];
    for token in tokenize(text) {
        let h = token_hash(&token);
        let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        acc[(h % d as u64) as usize] += sign;
    }
    EmbeddingVector::normalized(acc).unwrap_or_else(|_| EmbeddingVector::basis(d, 0))
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dimension: usize,
}

impl MockEmbedder {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < 8 {
            return Err(Error::Config(format!(
                "mock embedder needs dimension >= 8, got {dimension}"
            )));
        }
        Ok(Self { dimension })
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_texts(texts)?;
        Ok(texts.iter().map(|t| mock_embed(t, self.dimension)).collect())
    }

    fn embed_image(&self, image_path: &str) -> Result<EmbeddingVector> {
        Err(Error::Config(format!(
            "mock backend cannot embed image {image_path}; supply a caption sidecar"
        )))
    }
}

/// Client for an embedding service speaking
/// `POST /embed/text {"texts": [...]} -> {"vectors": [[...]]}` and
/// `POST /embed/image {"image_path": "..."} -> {"vector": [...]}`.
pub struct HttpEmbedder {
    base_url: String,
    dimension: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct TextRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct TextResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Serialize)]
struct ImageRequest<'a> {
    image_path: &'a str,
}

#[derive(Deserialize)]
struct ImageResponse {
    vector: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, dimension: usize, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            dimension,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(&self, route: &str, body: &Req) -> Result<Resp> {
        let url = format!("{}{route}", self.base_url);
        let resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        resp.into_json()
            .map_err(|e| Error::Transport(format!("{url}: malformed response: {e}")))
    }

    fn finish(&self, raw: Vec<f32>) -> Result<EmbeddingVector> {
        if raw.len() != self.dimension {
            return Err(Error::Config(format!(
                "embedding service returned dimension {}, configured {}",
                raw.len(),
                self.dimension
            )));
        }
        EmbeddingVector::normalized(raw)
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_texts(texts)?;
        let resp: TextResponse = self.post("/embed/text", &TextRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Transport(format!(
                "embedding service returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        resp.vectors.into_iter().map(|v| self.finish(v)).collect()
    }

    fn embed_image(&self, image_path: &str) -> Result<EmbeddingVector> {
        let resp: ImageResponse = self.post("/embed/image", &ImageRequest { image_path })?;
        self.finish(resp.vector)
    }
}

/// Mock-backend stand-in for an image: the caption tokens of one keyframe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionEntry {
    pub keyframe_id: usize,
    pub caption_tokens: String,
}

pub fn load_captions(path: &Path) -> Result<HashMap<usize, String>> {
    let entries: Vec<CaptionEntry> = jsonl::read(path)?;
    Ok(entries
        .into_iter()
        .map(|e| (e.keyframe_id, e.caption_tokens))
        .collect())
}

/// Where keyframe pixels come from.
pub enum KeyframeSource<'a> {
    /// Embed each record's `image_path` through [`Embedder::embed_image`].
    Images,
    /// Embed a caption per keyframe id through [`Embedder::embed_texts`].
    Captions(&'a HashMap<usize, String>),
}

const TEXT_BATCH: usize = 256;

/// Embeds every keyframe of `manifest`, producing store rows in keyframe-id order.
pub fn embed_keyframes(
    manifest: &Manifest,
    source: KeyframeSource<'_>,
    embedder: &dyn Embedder,
) -> Result<EmbeddingStore> {
    let d = embedder.dimension();
    let mut rows = Vec::with_capacity(manifest.len() * d);
    match source {
        KeyframeSource::Captions(captions) => {
            let missing: Vec<usize> = manifest
                .records()
                .iter()
                .map(|r| r.keyframe_id)
                .filter(|id| captions.get(id).map_or(true, |c| c.trim().is_empty()))
                .collect();
            if !missing.is_empty() {
                return Err(Error::Ingestion(format!(
                    "no caption sidecar entry for keyframe ids {missing:?}"
                )));
            }
            let texts: Vec<String> = manifest
                .records()
                .iter()
                .map(|r| captions[&r.keyframe_id].clone())
                .collect();
            for batch in texts.chunks(TEXT_BATCH) {
                for v in embedder.embed_texts(batch)? {
                    rows.extend_from_slice(v.as_slice());
                }
            }
        }
        KeyframeSource::Images => {
            let missing: Vec<usize> = manifest
                .records()
                .iter()
                .filter(|r| !Path::new(&r.image_path).is_file())
                .map(|r| r.keyframe_id)
                .collect();
            if !missing.is_empty() {
                return Err(Error::Ingestion(format!(
                    "missing image files for keyframe ids {missing:?}"
                )));
            }
            for rec in manifest.records() {
                rows.extend_from_slice(embedder.embed_image(&rec.image_path)?.as_slice());
            }
        }
    }
    EmbeddingStore::new(d, rows)
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f32 {
    crate::index::dot(a.as_slice(), b.as_slice())
}
