//! Service configuration file (TOML).
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! store_path = "store.bin"
//! manifest_path = "manifest.jsonl"
//! video_meta_path = "videos.jsonl"      # optional: {video_id, url, fps}
//!
//! [embedding]
//! backend = "mock"                      # or "http"
//! dimension = 512
//! url = "http://127.0.0.1:9000"         # http only
//!
//! [llm]                                 # drafting.backend = "http" only
//! url = "https://api.openai.com/v1/chat/completions"
//! model = "gpt-4o"
//!
//! [drafting]
//! backend = "mock"                      # or "http"
//! mock_gazetteer_path = "gazetteer.txt" # mock only
//! examples_path = "fewshot.jsonl"       # optional, bundled examples otherwise
//!
//! [defaults]
//! n_drafts = 6
//! n_selected = 4
//! final_k = 600
//! k_per_draft = 600
//! pi = 5
//! fps = 25.0
//!
//! [submit]
//! url = "http://127.0.0.1:9100/submit" # optional; submissions are logged when unset
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! The LLM API key is read from `RAPID_LLM_API_KEY`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use rapid_core::drafting::{default_examples, load_examples, load_gazetteer, ChatDrafter, Drafter, MockDrafter};
use rapid_core::embedding::{Embedder, HttpEmbedder, MockEmbedder};

pub const API_KEY_ENV: &str = "RAPID_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub backend: Backend,
    pub dimension: usize,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_llm_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraftingConfig {
    #[serde(default = "default_drafting_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub examples_path: Option<PathBuf>,
    #[serde(default)]
    pub mock_gazetteer_path: Option<PathBuf>,
}

impl Default for DraftingConfig {
    fn default() -> Self {
        Self { backend: Backend::Mock, examples_path: None, mock_gazetteer_path: None }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default = "d_n_drafts")]
    pub n_drafts: usize,
    #[serde(default = "d_n_selected")]
    pub n_selected: usize,
    #[serde(default = "d_final_k")]
    pub final_k: usize,
    #[serde(default = "d_k_per_draft")]
    pub k_per_draft: usize,
    #[serde(default = "d_pi")]
    pub pi: usize,
    #[serde(default = "d_fps")]
    pub fps: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            n_drafts: d_n_drafts(),
            n_selected: d_n_selected(),
            final_k: d_final_k(),
            k_per_draft: d_k_per_draft(),
            pi: d_pi(),
            fps: d_fps(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitConfig {
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub store_path: PathBuf,
    pub manifest_path: PathBuf,
    #[serde(default)]
    pub video_meta_path: Option<PathBuf>,
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub drafting: DraftingConfig,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default)]
    pub submit: SubmitConfig,
}

fn default_timeout_ms() -> u64 {
    10_000
}
fn default_llm_timeout_ms() -> u64 {
    60_000
}
fn default_drafting_backend() -> Backend {
    Backend::Mock
}
fn default_listen() -> String {
    "127.0.0.1:8080".into()
}
fn d_n_drafts() -> usize {
    rapid_core::drafting::DEFAULT_GENERATED
}
fn d_n_selected() -> usize {
    rapid_core::drafting::DEFAULT_SELECTED
}
fn d_final_k() -> usize {
    rapid_core::pipeline::DEFAULT_FINAL_K
}
fn d_k_per_draft() -> usize {
    rapid_core::pipeline::DEFAULT_K_PER_DRAFT
}
fn d_pi() -> usize {
    rapid_core::pipeline::DEFAULT_NEIGHBOR_RADIUS
}
fn d_fps() -> f64 {
    25.0
}

fn lookup<'a>(root: &'a toml::Value, key: &str) -> Option<&'a toml::Value> {
    key.split('.').try_fold(root, |v, part| v.get(part))
}

/// Every required key absent from `root`, given the backends it selects.
pub fn missing_keys(root: &toml::Value) -> Vec<String> {
    let mut required = vec!["store_path", "manifest_path", "embedding.backend", "embedding.dimension"];
    if lookup(root, "embedding.backend").and_then(|v| v.as_str()) == Some("http") {
        required.push("embedding.url");
    }
    match lookup(root, "drafting.backend").and_then(|v| v.as_str()) {
        Some("http") => required.extend(["llm.url", "llm.model"]),
        _ => required.push("drafting.mock_gazetteer_path"),
    }
    required
        .into_iter()
        .filter(|k| lookup(root, k).is_none())
        .map(String::from)
        .collect()
}

impl ServiceConfig {
    pub fn parse(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let root: toml::Value = toml::from_str(text).context("config is not valid TOML")?;
        let missing = missing_keys(&root);
        if !missing.is_empty() {
            bail!("missing config keys: {}", missing.join(", "));
        }
        let mut cfg: ServiceConfig = root.try_into().context("invalid config")?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store_path);
        fix(&mut self.manifest_path);
        for p in [
            self.video_meta_path.as_mut(),
            self.drafting.examples_path.as_mut(),
            self.drafting.mock_gazetteer_path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    fn validate(&self) -> anyhow::Result<()> {
        let d = &self.defaults;
        if d.n_drafts == 0 || d.n_selected == 0 || d.final_k == 0 || d.k_per_draft == 0 || !(d.fps > 0.0) {
            bail!("defaults must be positive");
        }
        if d.n_selected > d.n_drafts {
            bail!("defaults.n_selected ({}) exceeds defaults.n_drafts ({})", d.n_selected, d.n_drafts);
        }
        if self.embedding.dimension == 0 {
            bail!("embedding.dimension must be positive");
        }
        Ok(())
    }

    /// Paths that must exist before the service can start.
    pub fn required_paths(&self) -> Vec<&Path> {
        let mut paths = vec![self.store_path.as_path(), self.manifest_path.as_path()];
        paths.extend(self.video_meta_path.as_deref());
        paths.extend(self.drafting.examples_path.as_deref());
        if self.drafting.backend == Backend::Mock {
            paths.extend(self.drafting.mock_gazetteer_path.as_deref());
        }
        paths
    }

    pub fn check_paths(&self) -> anyhow::Result<()> {
        let missing: Vec<String> = self
            .required_paths()
            .into_iter()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            bail!("missing files: {}", missing.join(", "));
        }
        Ok(())
    }

    pub fn embedder(&self) -> anyhow::Result<Arc<dyn Embedder>> {
        build_embedder(
            self.embedding.backend,
            self.embedding.dimension,
            self.embedding.url.as_deref(),
            Duration::from_millis(self.embedding.timeout_ms),
        )
    }

    pub fn drafter(&self) -> anyhow::Result<Arc<dyn Drafter>> {
        match self.drafting.backend {
            Backend::Mock => {
                let path = self
                    .drafting
                    .mock_gazetteer_path
                    .as_deref()
                    .context("drafting.mock_gazetteer_path is required for the mock drafter")?;
                Ok(Arc::new(MockDrafter::new(load_gazetteer(path)?)?))
            }
            Backend::Http => {
                let examples = match &self.drafting.examples_path {
                    Some(p) => load_examples(p)?,
                    None => default_examples(),
                };
                let url = self.llm.url.clone().context("llm.url is required")?;
                let model = self.llm.model.clone().context("llm.model is required")?;
                let key = std::env::var(API_KEY_ENV).ok();
                Ok(Arc::new(ChatDrafter::new(
                    url,
                    model,
                    key,
                    examples,
                    Duration::from_millis(self.llm.timeout_ms),
                )?))
            }
        }
    }
}

pub fn build_embedder(
    backend: Backend,
    dimension: usize,
    url: Option<&str>,
    timeout: Duration,
) -> anyhow::Result<Arc<dyn Embedder>> {
    Ok(match backend {
        Backend::Mock => Arc::new(MockEmbedder::new(dimension)?),
        Backend::Http => {
            let url = url.context("an embedding service url is required for the http backend")?;
            Arc::new(HttpEmbedder::new(url, dimension, timeout))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_mock_config() {
        let cfg = ServiceConfig::parse(
            r#"
            store_path = "s.bin"
            manifest_path = "/abs/m.jsonl"
            [embedding]
            backend = "mock"
            dimension = 64
            [drafting]
            mock_gazetteer_path = "g.txt"
            "#,
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.store_path, Path::new("/data/s.bin"));
        assert_eq!(cfg.manifest_path, Path::new("/abs/m.jsonl"));
        assert_eq!(cfg.defaults.n_drafts, 6);
        assert_eq!(cfg.defaults.n_selected, 4);
        assert_eq!(cfg.defaults.final_k, 600);
        assert_eq!(cfg.defaults.k_per_draft, 600);
        assert_eq!(cfg.defaults.pi, 5);
        assert_eq!(cfg.listen, "127.0.0.1:8080");
    }

    #[test]
    fn missing_keys_are_all_listed() {
        let err = ServiceConfig::parse("[embedding]\nbackend = \"http\"\n", Path::new(".")).unwrap_err();
        let msg = err.to_string();
        for key in ["store_path", "manifest_path", "embedding.dimension", "embedding.url", "drafting.mock_gazetteer_path"] {
            assert!(msg.contains(key), "{msg}");
        }
        let root: toml::Value = toml::from_str("[drafting]\nbackend = \"http\"").unwrap();
        let missing = missing_keys(&root);
        assert!(missing.contains(&"llm.url".to_string()));
        assert!(missing.contains(&"llm.model".to_string()));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ServiceConfig::parse(
            "store_path = \"a\"\nmanifest_path = \"b\"\nbogus = 1\n[embedding]\nbackend = \"mock\"\ndimension = 8\n[drafting]\nmock_gazetteer_path = \"g\"\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
    }

    #[test]
    fn missing_files_named() {
        let cfg = ServiceConfig::parse(
            "store_path = \"nope.bin\"\nmanifest_path = \"nope.jsonl\"\n[embedding]\nbackend = \"mock\"\ndimension = 8\n[drafting]\nmock_gazetteer_path = \"g\"\n",
            Path::new("/nonexistent"),
        )
        .unwrap();
        let msg = cfg.check_paths().unwrap_err().to_string();
        assert!(msg.contains("/nonexistent/nope.bin"), "{msg}");
    }
}
