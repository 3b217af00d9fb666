//! Subcommand implementations behind the `rapid` binary.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use rapid_core::embedding::{embed_keyframes, load_captions, KeyframeSource};
use rapid_core::eval::{compare, run_eval, Dataset, EvalConfig, MetricReport, QueryMode};
use rapid_core::keyframes::{build_manifest, ImagePathTemplate};
use rapid_core::synth::{generate, SyntheticParams};
use rapid_core::{EmbeddingIndex, Engine, Manifest};

use crate::config::{build_embedder, Backend, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "rapid", version, about = "Multi-draft video keyframe retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the keyframe manifest and embedding store.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate retrieval quality.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a synthetic corpus, dataset and config for offline runs.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Select keyframes from a scenes JSONL file.
    #[command(name = "build-manifest", alias = "build")]
    BuildManifest(BuildManifestArgs),
    /// Embed every keyframe of a manifest into a binary store.
    Embed(EmbedArgs),
}

#[derive(Debug, Args)]
pub struct BuildManifestArgs {
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub image_root: String,
    #[arg(long, default_value = ImagePathTemplate::DEFAULT_PATTERN)]
    pub image_pattern: String,
    /// OCR sidecar JSONL: {video_id, frame_index, text}.
    #[arg(long)]
    pub ocr: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: Backend,
    /// Caption sidecar JSONL {keyframe_id, caption_tokens}; required by the mock backend.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub dimension: usize,
    #[arg(long)]
    pub url: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Evaluate a dataset in naive or augmented mode and write a JSON report.
    Run(EvalRunArgs),
    /// Print metric deltas between two reports (b - a).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub mode: QueryMode,
    #[arg(long)]
    pub report: PathBuf,
    /// Per-draft retrieval depth (default: config defaults.k_per_draft).
    #[arg(long)]
    pub k: Option<usize>,
    /// Final result count (default: config defaults.final_k).
    #[arg(long = "final-k")]
    pub final_k: Option<usize>,
    /// Drafts generated per query in augmented mode (default: config defaults.n_drafts).
    #[arg(long)]
    pub n_drafts: Option<usize>,
    /// Do not add the original query as an extra draft in augmented mode.
    #[arg(long)]
    pub no_original: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 120)]
    pub events: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub dimension: usize,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Index(IndexCommand::BuildManifest(a)) => build_manifest_cmd(&a),
        Command::Index(IndexCommand::Embed(a)) => embed_cmd(&a),
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::service::serve(config))
        }
        Command::Eval(EvalCommand::Run(a)) => eval_run_cmd(&a),
        Command::Eval(EvalCommand::Compare { a, b }) => {
            let a = read_report(&a)?;
            let b = read_report(&b)?;
            print!("{}", format_comparison(&a, &b));
            Ok(())
        }
        Command::Synth(a) => synth_cmd(&a),
    }
}

fn build_manifest_cmd(a: &BuildManifestArgs) -> anyhow::Result<()> {
    let images = ImagePathTemplate::new(a.image_root.clone(), a.image_pattern.clone());
    let (manifest, summary) = build_manifest(&a.scenes, &images, a.ocr.as_deref())?;
    manifest.save(&a.out)?;
    println!(
        "videos={} scenes={} keyframes={} -> {}",
        summary.videos,
        summary.scenes,
        summary.keyframes,
        a.out.display()
    );
    Ok(())
}

fn embed_cmd(a: &EmbedArgs) -> anyhow::Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let embedder = build_embedder(a.backend, a.dimension, a.url.as_deref(), Duration::from_millis(a.timeout_ms))?;
    let captions = match &a.captions {
        Some(p) => Some(load_captions(p)?),
        None => None,
    };
    let source = match (&captions, a.backend) {
        (Some(c), _) => KeyframeSource::Captions(c),
        (None, Backend::Http) => KeyframeSource::Images,
        (None, Backend::Mock) => anyhow::bail!("the mock backend needs --captions"),
    };
    let store = embed_keyframes(&manifest, source, embedder.as_ref())?;
    store.write(&a.out)?;
    println!("count={} dimension={} -> {}", store.count(), store.dimension(), a.out.display());
    Ok(())
}

fn eval_run_cmd(a: &EvalRunArgs) -> anyhow::Result<()> {
    let config = ServiceConfig::load(&a.config)?;
    config.check_paths()?;
    let manifest = Manifest::load(&config.manifest_path)?;
    let dataset = Dataset::load(&a.dataset, &manifest)?;
    let index = EmbeddingIndex::load(&config.store_path)?;
    let engine = Engine::new(index, manifest, config.embedder()?)?;
    let drafter = match a.mode {
        QueryMode::Augmented => Some(config.drafter()?),
        QueryMode::Naive => None,
    };
    let eval_config = EvalConfig {
        k_per_draft: a.k.unwrap_or(config.defaults.k_per_draft),
        final_k: a.final_k.unwrap_or(config.defaults.final_k),
        n_drafts: a.n_drafts.unwrap_or(config.defaults.n_drafts),
        include_original_as_draft: !a.no_original,
    };
    let report = run_eval(&dataset, &engine, drafter.as_deref(), a.mode, eval_config)?;
    write_report(&a.report, &report)?;
    println!(
        "mode={:?} queries={} MRR={:.4} P@1={:.4} P@5={:.4} P@10={:.4} P@20={:.4} R@10={:.4} R@20={:.4}",
        report.mode,
        report.query_count,
        report.mrr,
        report.p_at[&1],
        report.p_at[&5],
        report.p_at[&10],
        report.p_at[&20],
        report.r_at[&10],
        report.r_at[&20]
    );
    Ok(())
}

pub fn write_report(path: &Path, report: &MetricReport) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_report(path: &Path) -> anyhow::Result<MetricReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}

pub fn format_comparison(a: &MetricReport, b: &MetricReport) -> String {
    let mut out = format!("{:<14} {:>8} {:>8} {:>9} {:>9}\n", "metric", "a", "b", "delta", "relative");
    for d in compare(a, b) {
        let rel = d.relative.map_or("n/a".to_string(), |r| format!("{:+.1}%", r * 100.0));
        out.push_str(&format!("{:<14} {:>8.4} {:>8.4} {:>+9.4} {:>9}\n", d.metric, d.a, d.b, d.delta, rel));
    }
    out
}

fn synth_cmd(a: &SynthArgs) -> anyhow::Result<()> {
    let corpus = generate(&SyntheticParams { seed: a.seed, events: a.events, ..Default::default() })?;
    let files = corpus.write(&a.out)?;
    let images = ImagePathTemplate::with_root(a.out.join("frames").to_string_lossy());
    let manifest = corpus.manifest(&images)?;
    let captions_path = a.out.join("captions.jsonl");
    rapid_core::jsonl::write(&captions_path, &corpus.captions(&manifest))?;

    let mut videos: Vec<_> = corpus.video_captions.keys().cloned().collect();
    videos.sort();
    let meta: Vec<crate::service::VideoMeta> = videos
        .into_iter()
        .map(|v| crate::service::VideoMeta {
            url: format!("https://example.org/watch?v={v}"),
            video_id: v,
            fps: Some(25.0),
        })
        .collect();
    rapid_core::jsonl::write(&a.out.join("videos.jsonl"), &meta)?;

    let config = format!(
        "listen = \"127.0.0.1:8080\"\n\
         store_path = \"store.bin\"\n\
         manifest_path = \"manifest.jsonl\"\n\
         video_meta_path = \"videos.jsonl\"\n\n\
         [embedding]\nbackend = \"mock\"\ndimension = {}\n\n\
         [drafting]\nbackend = \"mock\"\nmock_gazetteer_path = \"gazetteer.txt\"\n\n\
         [defaults]\nn_drafts = {}\nn_selected = 4\nfinal_k = 20\nk_per_draft = 20\npi = 5\n",
        a.dimension,
        corpus.gazetteer.len(),
    );
    std::fs::write(a.out.join("rapid.toml"), config)?;
    println!(
        "wrote {} scenes, {} records, captions for {} keyframes to {}",
        corpus.scenes.len(),
        corpus.records.len(),
        manifest.len(),
        a.out.display()
    );
    println!("scenes: {}", files.scenes.display());
    Ok(())
}
