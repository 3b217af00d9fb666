//! Synthetic news-event corpus for offline evaluation with the mock backends.
//!
//! Every event is one video whose keyframes share a caption made of subject
//! tokens plus location tokens. Evaluation queries carry only the subject,
//! so several events (and some location-free "confounder" clips that match
//! the subject more tightly) compete for the same query. Type 1 events show
//! their full location phrase; type 2 events show a single location token.
//! The gazetteer lists every location phrase, so the mock drafter can put
//! the missing context back into the query.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::CaptionEntry;
use crate::error::{Error, Result};
use crate::eval::EvalRecord;
use crate::jsonl;
use crate::keyframes::{manifest_from_scenes, ImagePathTemplate, Manifest, OcrEntry, SceneBoundary};

const ACTORS: &[&str] = &[
    "monk", "farmer", "policeman", "nurse", "child", "soldier", "fisherman", "chef", "athlete", "reporter",
];
const ACTIONS: &[&str] = &[
    "writing", "running", "singing", "carrying", "painting", "repairing", "dancing", "praying",
];
const LOCATIONS: &[&str] = &[
    "old stone pagoda",
    "busy night market",
    "flooded rice field",
    "crowded hospital ward",
    "sandy beach resort",
    "factory assembly line",
    "snowy mountain pass",
    "football stadium stands",
];
const FILLERS: &[&str] = &[
    "closeup", "outdoors", "daytime", "smiling", "slowly", "together", "alone", "camera",
];
const CHANNELS: &[&str] = &["HTV9 NEWS", "VTV1", "VTV24", "THVL1"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub seed: u64,
    pub events: usize,
    /// Share of events whose location is only partly visible (frame type 2).
    pub type2_fraction: f64,
    pub scenes_per_event: usize,
    /// Upper bound on confounder clips generated per subject.
    pub max_confounders_per_subject: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 2024,
            events: 120,
            type2_fraction: 0.16,
            scenes_per_event: 2,
            max_confounders_per_subject: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub scenes: Vec<SceneBoundary>,
    pub video_captions: HashMap<String, String>,
    pub ocr: Vec<OcrEntry>,
    pub records: Vec<EvalRecord>,
    pub gazetteer: Vec<String>,
}

fn push_video(
    rng: &mut ChaCha8Rng,
    scenes: &mut Vec<SceneBoundary>,
    video_id: &str,
    scene_count: usize,
) -> (u64, u64) {
    let mut frame = 1u64;
    let first = frame;
    for s in 0..scene_count {
        let len = rng.gen_range(25..90u64);
        scenes.push(SceneBoundary::new(video_id, s as u32 + 1, frame, frame + len - 1));
        frame += len;
    }
    (first, frame - 1)
}

pub fn generate(params: &SyntheticParams) -> Result<SyntheticCorpus> {
    if params.events == 0 || params.scenes_per_event == 0 {
        return Err(Error::Validation("synthetic corpus needs at least one event and scene".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut subjects: Vec<String> = ACTORS
        .iter()
        .flat_map(|a| ACTIONS.iter().map(move |b| format!("{a} {b}")))
        .collect();
    subjects.shuffle(&mut rng);
    // About four events per subject so each query has real competition.
    subjects.truncate((params.events / 4).clamp(1, subjects.len()));

    let mut scenes = Vec::new();
    let mut video_captions = HashMap::new();
    let mut ocr = Vec::new();
    let mut records = Vec::new();

    for e in 0..params.events {
        let subject = &subjects[e % subjects.len()];
        let location = LOCATIONS[rng.gen_range(0..LOCATIONS.len())];
        let type2 = rng.gen_bool(params.type2_fraction);
        let visible_location = if type2 {
            let words: Vec<&str> = location.split(' ').collect();
            words[rng.gen_range(0..words.len())].to_string()
        } else {
            location.to_string()
        };
        let video_id = format!("event{e:04}");
        let (start, end) = push_video(&mut rng, &mut scenes, &video_id, params.scenes_per_event);
        video_captions.insert(video_id.clone(), format!("{subject} {visible_location}"));
        let channel = CHANNELS[rng.gen_range(0..CHANNELS.len())];
        ocr.push(OcrEntry { video_id: video_id.clone(), frame_index: start, text: channel.to_string() });
        records.push(EvalRecord {
            query_id: format!("q{e:04}"),
            query: subject.clone(),
            video_id,
            frame_start: start,
            frame_end: end,
            frame_type: if type2 { 2 } else { 1 },
        });
    }

    for (s, subject) in subjects.iter().enumerate() {
        let count = rng.gen_range(0..=params.max_confounders_per_subject);
        for c in 0..count {
            let video_id = format!("clip{s:03}{c:02}");
            push_video(&mut rng, &mut scenes, &video_id, 1);
            let filler = FILLERS[rng.gen_range(0..FILLERS.len())];
            video_captions.insert(video_id, format!("{subject} {filler}"));
        }
    }

    Ok(SyntheticCorpus {
        scenes,
        video_captions,
        ocr,
        records,
        gazetteer: LOCATIONS.iter().map(|s| s.to_string()).collect(),
    })
}

impl SyntheticCorpus {
    pub fn manifest(&self, images: &ImagePathTemplate) -> Result<Manifest> {
        Ok(manifest_from_scenes(&self.scenes, images, &self.ocr)?.0)
    }

    /// Caption sidecar for the mock embedder, keyed by the manifest's ids.
    pub fn captions(&self, manifest: &Manifest) -> Vec<CaptionEntry> {
        manifest
            .records()
            .iter()
            .map(|r| CaptionEntry {
                keyframe_id: r.keyframe_id,
                caption_tokens: self.video_captions[&r.video_id].clone(),
            })
            .collect()
    }

    /// Writes the raw inputs a deployment would have: scenes, OCR sidecar,
    /// per-video captions, evaluation dataset and gazetteer.
    pub fn write(&self, dir: &Path) -> Result<SyntheticFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SyntheticFiles::in_dir(dir);
        jsonl::write(&files.scenes, &self.scenes)?;
        jsonl::write(&files.ocr, &self.ocr)?;
        jsonl::write(&files.dataset, &self.records)?;
        let mut videos: Vec<VideoCaption> = self
            .video_captions
            .iter()
            .map(|(v, c)| VideoCaption { video_id: v.clone(), caption: c.clone() })
            .collect();
        videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        jsonl::write(&files.video_captions, &videos)?;
        let gaz = self.gazetteer.join("\n") + "\n";
        std::fs::write(&files.gazetteer, gaz).map_err(|e| Error::io(&files.gazetteer, e))?;
        Ok(files)
    }
}

/// Caption shared by every keyframe of one synthetic video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoCaption {
    pub video_id: String,
    pub caption: String,
}

/// Expands per-video captions into a per-keyframe caption sidecar.
pub fn captions_for_manifest(manifest: &Manifest, videos: &[VideoCaption]) -> Result<Vec<CaptionEntry>> {
    let by_video: HashMap<&str, &str> =
        videos.iter().map(|v| (v.video_id.as_str(), v.caption.as_str())).collect();
    manifest
        .records()
        .iter()
        .map(|r| {
            by_video
                .get(r.video_id.as_str())
                .map(|c| CaptionEntry { keyframe_id: r.keyframe_id, caption_tokens: c.to_string() })
                .ok_or_else(|| Error::Ingestion(format!("no caption for video {}", r.video_id)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub scenes: PathBuf,
    pub ocr: PathBuf,
    pub dataset: PathBuf,
    pub video_captions: PathBuf,
    pub gazetteer: PathBuf,
}

impl SyntheticFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            scenes: dir.join("scenes.jsonl"),
            ocr: dir.join("ocr.jsonl"),
            dataset: dir.join("dataset.jsonl"),
            video_captions: dir.join("video_captions.jsonl"),
            gazetteer: dir.join("gazetteer.txt"),
        }
    }
}
