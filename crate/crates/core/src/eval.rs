//! Retrieval evaluation: MRR, P@k and R@k over a ground-truth dataset.
//!
//! A keyframe is relevant to a record when it comes from the record's video
//! and its frame index falls inside the record's inclusive frame range.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drafting::Drafter;
use crate::error::{Error, Result};
use crate::index::RankedResult;
use crate::jsonl;
use crate::keyframes::{KeyframeRecord, Manifest};
use crate::pipeline::{Engine, SearchRequest};

pub const PRECISION_CUTOFFS: [usize; 4] = [1, 5, 10, 20];
pub const RECALL_CUTOFFS: [usize; 2] = [10, 20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub query_id: String,
    pub query: String,
    pub video_id: String,
    pub frame_start: u64,
    pub frame_end: u64,
    pub frame_type: u8,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        if self.frame_end < self.frame_start {
            return Err(Error::Dataset(format!(
                "record {}: frame_end {} < frame_start {}",
                self.query_id, self.frame_end, self.frame_start
            )));
        }
        if !matches!(self.frame_type, 1 | 2) {
            return Err(Error::Dataset(format!(
                "record {}: frame_type must be 1 or 2, got {}",
                self.query_id, self.frame_type
            )));
        }
        if self.query.trim().is_empty() {
            return Err(Error::Dataset(format!("record {}: empty query", self.query_id)));
        }
        Ok(())
    }
}

pub fn is_relevant(keyframe: &KeyframeRecord, record: &EvalRecord) -> bool {
    keyframe.video_id == record.video_id
        && (record.frame_start..=record.frame_end).contains(&keyframe.frame_index)
}

/// Number of manifest keyframes relevant to `record`.
pub fn relevant_count(manifest: &Manifest, record: &EvalRecord) -> usize {
    manifest
        .video_range(&record.video_id)
        .map(|range| {
            manifest.records()[range]
                .iter()
                .filter(|k| is_relevant(k, record))
                .count()
        })
        .unwrap_or(0)
}

fn relevance_flags(ranked: &RankedResult, manifest: &Manifest, record: &EvalRecord) -> Vec<bool> {
    ranked
        .entries
        .iter()
        .map(|e| manifest.get(e.keyframe_id).is_some_and(|k| is_relevant(k, record)))
        .collect()
}

/// `1 / rank` of the first relevant result, 0 when none is returned.
pub fn reciprocal_rank(ranked: &RankedResult, manifest: &Manifest, record: &EvalRecord) -> f64 {
    rr_from_flags(&relevance_flags(ranked, manifest, record))
}

/// `(P@k, R@k)`. Precision divides by `k` even when fewer results came back;
/// recall divides by the number of relevant keyframes in the manifest.
pub fn precision_recall_at(
    ranked: &RankedResult,
    manifest: &Manifest,
    record: &EvalRecord,
    k: usize,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let total = relevant_count(manifest, record);
    if total == 0 {
        return Err(Error::Dataset(format!(
            "record {} has no relevant keyframes in the manifest",
            record.query_id
        )));
    }
    let flags = relevance_flags(ranked, manifest, record);
    Ok((precision_from_flags(&flags, k), recall_from_flags(&flags, k, total)))
}

fn rr_from_flags(flags: &[bool]) -> f64 {
    flags
        .iter()
        .position(|&f| f)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

fn hits_at(flags: &[bool], k: usize) -> usize {
    flags.iter().take(k).filter(|&&f| f).count()
}

fn precision_from_flags(flags: &[bool], k: usize) -> f64 {
    hits_at(flags, k) as f64 / k as f64
}

fn recall_from_flags(flags: &[bool], k: usize, total: usize) -> f64 {
    hits_at(flags, k) as f64 / total as f64
}

/// Records paired with their in-manifest relevant counts.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<(EvalRecord, usize)>,
}

impl Dataset {
    pub fn new(records: Vec<EvalRecord>, manifest: &Manifest) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(records.len());
        for r in records {
            r.validate()?;
            if !seen.insert(r.query_id.clone()) {
                return Err(Error::Dataset(format!("duplicate query_id {}", r.query_id)));
            }
            let total = relevant_count(manifest, &r);
            if total == 0 {
                return Err(Error::Dataset(format!(
                    "record {} ({} frames {}..={}) has no keyframes in the manifest",
                    r.query_id, r.video_id, r.frame_start, r.frame_end
                )));
            }
            out.push((r, total));
        }
        Ok(Self { records: out })
    }

    pub fn load(path: &Path, manifest: &Manifest) -> Result<Self> {
        Self::new(jsonl::read(path)?, manifest)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().map(|(r, _)| r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Naive,
    Augmented,
}

impl std::str::FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "augmented" => Ok(Self::Augmented),
            other => Err(Error::Validation(format!("unknown query mode {other:?}"))),
        }
    }
}

/// Search parameters applied to every record of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_per_draft: usize,
    pub final_k: usize,
    pub n_drafts: usize,
    pub include_original_as_draft: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_per_draft: crate::pipeline::DEFAULT_K_PER_DRAFT,
            final_k: crate::pipeline::DEFAULT_FINAL_K,
            n_drafts: crate::drafting::DEFAULT_GENERATED,
            include_original_as_draft: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDiagnostics {
    pub query_id: String,
    pub frame_type: u8,
    pub drafts: Vec<String>,
    pub first_relevant_rank: Option<usize>,
    pub reciprocal_rank: f64,
    pub relevant_total: usize,
    pub returned: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregate metrics for a group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub query_count: usize,
    pub mrr: f64,
    pub p_at: BTreeMap<usize, f64>,
    pub r_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: QueryMode,
    pub config: EvalConfig,
    pub query_count: usize,
    pub mrr: f64,
    pub p_at: BTreeMap<usize, f64>,
    pub r_at: BTreeMap<usize, f64>,
    pub per_type: BTreeMap<u8, MetricSummary>,
    pub records: Vec<RecordDiagnostics>,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    count: usize,
    rr: f64,
    p: [f64; PRECISION_CUTOFFS.len()],
    r: [f64; RECALL_CUTOFFS.len()],
}

impl Accumulator {
    fn add(&mut self, flags: &[bool], total: usize) {
        self.count += 1;
        self.rr += rr_from_flags(flags);
        for (acc, &k) in self.p.iter_mut().zip(&PRECISION_CUTOFFS) {
            *acc += precision_from_flags(flags, k);
        }
        for (acc, &k) in self.r.iter_mut().zip(&RECALL_CUTOFFS) {
            *acc += recall_from_flags(flags, k, total);
        }
    }

    fn summary(&self) -> MetricSummary {
        let n = self.count.max(1) as f64;
        MetricSummary {
            query_count: self.count,
            mrr: self.rr / n,
            p_at: PRECISION_CUTOFFS.iter().zip(&self.p).map(|(&k, &v)| (k, v / n)).collect(),
            r_at: RECALL_CUTOFFS.iter().zip(&self.r).map(|(&k, &v)| (k, v / n)).collect(),
        }
    }
}

/// Builds a report from ranked results already computed for each record.
pub fn summarize(
    mode: QueryMode,
    config: EvalConfig,
    dataset: &Dataset,
    manifest: &Manifest,
    outcomes: Vec<(Vec<String>, Result<RankedResult>)>,
) -> MetricReport {
    let mut overall = Accumulator::default();
    let mut by_type: BTreeMap<u8, Accumulator> = BTreeMap::new();
    let mut diagnostics = Vec::with_capacity(dataset.len());

    for ((record, total), (drafts, outcome)) in dataset.records.iter().zip(outcomes) {
        let (flags, returned, error) = match outcome {
            Ok(ranked) => (relevance_flags(&ranked, manifest, record), ranked.len(), None),
            Err(e) => (Vec::new(), 0, Some(e.to_string())),
        };
        overall.add(&flags, *total);
        by_type.entry(record.frame_type).or_default().add(&flags, *total);
        let first = flags.iter().position(|&f| f);
        diagnostics.push(RecordDiagnostics {
            query_id: record.query_id.clone(),
            frame_type: record.frame_type,
            drafts,
            first_relevant_rank: first.map(|i| i + 1),
            reciprocal_rank: rr_from_flags(&flags),
            relevant_total: *total,
            returned,
            error,
        });
    }

    let summary = overall.summary();
    MetricReport {
        mode,
        config,
        query_count: summary.query_count,
        mrr: summary.mrr,
        p_at: summary.p_at,
        r_at: summary.r_at,
        per_type: by_type.into_iter().map(|(t, acc)| (t, acc.summary())).collect(),
        records: diagnostics,
    }
}

/// Searches every record and aggregates the metrics.
///
/// Naive mode searches with the record's query alone. Augmented mode drafts
/// first and searches with the drafts. A failing record scores zero and
/// carries the error in its diagnostics.
pub fn run_eval(
    dataset: &Dataset,
    engine: &Engine,
    drafter: Option<&dyn Drafter>,
    mode: QueryMode,
    config: EvalConfig,
) -> Result<MetricReport> {
    if mode == QueryMode::Augmented && drafter.is_none() {
        return Err(Error::Config("augmented evaluation needs a drafter".into()));
    }
    let outcomes: Vec<(Vec<String>, Result<RankedResult>)> = dataset
        .records
        .par_iter()
        .map(|(record, _)| {
            let drafts = match mode {
                QueryMode::Naive => Ok(vec![record.query.clone()]),
                QueryMode::Augmented => drafter
                    .expect("checked above")
                    .generate_drafts(&record.query, config.n_drafts),
            };
            let drafts = match drafts {
                Ok(d) => d,
                Err(e) => return (Vec::new(), Err(e)),
            };
            let request = SearchRequest {
                original_query: record.query.clone(),
                drafts: drafts.clone(),
                k_per_draft: config.k_per_draft,
                final_k: config.final_k,
                ocr_filter: None,
                include_original_as_draft: match mode {
                    QueryMode::Naive => true,
                    QueryMode::Augmented => config.include_original_as_draft,
                },
            };
            (drafts, engine.search(&request))
        })
        .collect();
    Ok(summarize(mode, config, dataset, engine.manifest(), outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `(b - a) / a`, absent when `a` is zero.
    pub relative: Option<f64>,
}

fn delta(metric: String, a: f64, b: f64) -> MetricDelta {
    MetricDelta { metric, a, b, delta: b - a, relative: (a != 0.0).then(|| (b - a) / a) }
}

/// Metric-by-metric differences `b - a`, overall then per frame type.
pub fn compare(a: &MetricReport, b: &MetricReport) -> Vec<MetricDelta> {
    let mut out = Vec::new();
    let mut push_summary = |prefix: &str, x: &MetricSummary, y: &MetricSummary| {
        out.push(delta(format!("{prefix}MRR"), x.mrr, y.mrr));
        for (k, v) in &x.p_at {
            out.push(delta(format!("{prefix}P@{k}"), *v, y.p_at.get(k).copied().unwrap_or(0.0)));
        }
        for (k, v) in &x.r_at {
            out.push(delta(format!("{prefix}R@{k}"), *v, y.r_at.get(k).copied().unwrap_or(0.0)));
        }
    };
    let whole = |r: &MetricReport| MetricSummary {
        query_count: r.query_count,
        mrr: r.mrr,
        p_at: r.p_at.clone(),
        r_at: r.r_at.clone(),
    };
    push_summary("", &whole(a), &whole(b));
    for (t, x) in &a.per_type {
        if let Some(y) = b.per_type.get(t) {
            push_summary(&format!("type{t} "), x, y);
        }
    }
    out
}
