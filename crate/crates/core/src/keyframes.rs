//! Scene boundaries in, keyframe manifest out.
//!
//! Shot detection runs upstream; this module consumes its scene list, picks
//! the first, middle and last frame of every scene, and assigns dense
//! keyframe ids in `(video_id, frame_index)` order. Those ids are also the
//! row numbers of the embedding store, so the ordering here must stay stable.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// A contiguous, inclusive frame span reported by the shot detector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBoundary {
    pub video_id: String,
    pub scene_index: u32,
    pub start_frame: u64,
    pub end_frame: u64,
}

impl SceneBoundary {
    pub fn new(video_id: impl Into<String>, scene_index: u32, start_frame: u64, end_frame: u64) -> Self {
        Self {
            video_id: video_id.into(),
            scene_index,
            start_frame,
            end_frame,
        }
    }

    /// Number of frames in the scene.
    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::Validation("scene has an empty video_id".into()));
        }
        if self.scene_index < 1 {
            return Err(Error::Validation(format!(
                "video {}: scene_index must be >= 1",
                self.video_id
            )));
        }
        if self.start_frame < 1 {
            return Err(Error::Validation(format!(
                "video {} scene {}: start_frame must be >= 1",
                self.video_id, self.scene_index
            )));
        }
        if self.end_frame < self.start_frame {
            return Err(Error::Validation(format!(
                "video {} scene {}: end_frame {} < start_frame {}",
                self.video_id, self.scene_index, self.end_frame, self.start_frame
            )));
        }
        Ok(())
    }
}

/// One indexed frame. `keyframe_id` doubles as the embedding store row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeRecord {
    pub keyframe_id: usize,
    pub video_id: String,
    pub scene_index: u32,
    pub frame_index: u64,
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
}

/// Picks the first, middle and last frame of a scene.
///
/// Positions are 1-based within the scene: `1`, `max(1, (e - 1) / 2)` and `e`,
/// where `e` is the scene length. Coinciding positions collapse, so short
/// scenes yield one or two frames. The result is ascending and expressed as
/// absolute frame indices.
pub fn select_keyframes(scene: &SceneBoundary) -> Result<Vec<u64>> {
    scene.validate()?;
    let e = scene.len();
    let middle = ((e - 1) / 2).max(1);
    let mut positions = vec![1, middle, e];
    positions.dedup();
    Ok(positions
        .into_iter()
        .map(|p| scene.start_frame + p - 1)
        .collect())
}

/// Turns `(video_id, frame_index)` into an image path.
///
/// `{video_id}` and `{frame_index}` placeholders are substituted; the result
/// is joined onto `root` unless the pattern is already absolute.
#[derive(Debug, Clone)]
pub struct ImagePathTemplate {
    root: String,
    pattern: String,
}

impl ImagePathTemplate {
    pub const DEFAULT_PATTERN: &'static str = "{video_id}/{frame_index}.jpg";

    pub fn new(root: impl Into<String>, pattern: impl Into<String>) -> Self {
        Self {
            root: root.into(),
            pattern: pattern.into(),
        }
    }

    pub fn with_root(root: impl Into<String>) -> Self {
        Self::new(root, Self::DEFAULT_PATTERN)
    }

    pub fn render(&self, video_id: &str, frame_index: u64) -> String {
        let rel = self
            .pattern
            .replace("{video_id}", video_id)
            .replace("{frame_index}", &frame_index.to_string());
        if self.root.is_empty() || rel.starts_with('/') {
            rel
        } else {
            Path::new(&self.root).join(rel).to_string_lossy().into_owned()
        }
    }
}

/// OCR text for one frame, keyed by source position since keyframe ids do
/// not exist until the manifest is built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrEntry {
    pub video_id: String,
    pub frame_index: u64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub videos: usize,
    pub scenes: usize,
    pub keyframes: usize,
}

/// The ordered keyframe list plus a per-video lookup.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    records: Vec<KeyframeRecord>,
    videos: HashMap<String, Range<usize>>,
}

impl Manifest {
    /// Wraps records that already satisfy the manifest ordering rules.
    pub fn from_records(records: Vec<KeyframeRecord>) -> Result<Self> {
        let mut videos: HashMap<String, Range<usize>> = HashMap::new();
        for (row, rec) in records.iter().enumerate() {
            if rec.keyframe_id != row {
                return Err(Error::Ingestion(format!(
                    "manifest row {row} has keyframe_id {}; ids must be dense and in row order",
                    rec.keyframe_id
                )));
            }
            if row > 0 {
                let prev = &records[row - 1];
                let ordered = (prev.video_id.as_str(), prev.frame_index)
                    < (rec.video_id.as_str(), rec.frame_index);
                if !ordered {
                    return Err(Error::Ingestion(format!(
                        "manifest keyframe {} ({}, {}) is not strictly after ({}, {})",
                        rec.keyframe_id, rec.video_id, rec.frame_index, prev.video_id, prev.frame_index
                    )));
                }
            }
            videos
                .entry(rec.video_id.clone())
                .and_modify(|r| r.end = row + 1)
                .or_insert(row..row + 1);
        }
        Ok(Self { records, videos })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(jsonl::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.records)
    }

    pub fn records(&self) -> &[KeyframeRecord] {
        &self.records
    }

    pub fn get(&self, keyframe_id: usize) -> Option<&KeyframeRecord> {
        self.records.get(keyframe_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keyframe id range covering `video_id`, in frame order.
    pub fn video_range(&self, video_id: &str) -> Option<Range<usize>> {
        self.videos.get(video_id).cloned()
    }

    pub fn video_count(&self) -> usize {
        self.videos.len()
    }
}

/// Builds a manifest from already-parsed scenes.
pub fn manifest_from_scenes(
    scenes: &[SceneBoundary],
    images: &ImagePathTemplate,
    ocr: &[OcrEntry],
) -> Result<(Manifest, ManifestSummary)> {
    let mut by_video: BTreeMap<&str, Vec<&SceneBoundary>> = BTreeMap::new();
    for (i, scene) in scenes.iter().enumerate() {
        scene
            .validate()
            .map_err(|e| Error::Ingestion(format!("scene record {}: {e}", i + 1)))?;
        by_video.entry(scene.video_id.as_str()).or_default().push(scene);
    }

    let mut ocr_map: HashMap<(&str, u64), &str> = HashMap::new();
    for entry in ocr {
        ocr_map.insert((entry.video_id.as_str(), entry.frame_index), entry.text.as_str());
    }

    let mut records = Vec::new();
    for (video_id, video_scenes) in by_video.iter_mut() {
        video_scenes.sort_by_key(|s| s.scene_index);
        for pair in video_scenes.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.scene_index == b.scene_index {
                return Err(Error::Ingestion(format!(
                    "video {video_id}: duplicate scene_index {}",
                    a.scene_index
                )));
            }
            if b.start_frame <= a.end_frame {
                return Err(Error::Ingestion(format!(
                    "video {video_id}: scene {} ({}..{}) overlaps or precedes scene {} ({}..{})",
                    b.scene_index, b.start_frame, b.end_frame, a.scene_index, a.start_frame, a.end_frame
                )));
            }
        }
        for scene in video_scenes.iter() {
            for frame_index in select_keyframes(scene)? {
                records.push(KeyframeRecord {
                    keyframe_id: records.len(),
                    video_id: (*video_id).to_string(),
                    scene_index: scene.scene_index,
                    frame_index,
                    image_path: images.render(video_id, frame_index),
                    ocr_text: ocr_map.get(&(*video_id, frame_index)).map(|t| t.to_string()),
                });
            }
        }
    }

    let summary = ManifestSummary {
        videos: by_video.len(),
        scenes: scenes.len(),
        keyframes: records.len(),
    };
    Ok((Manifest::from_records(records)?, summary))
}

/// Reads a scenes JSONL file (and optionally an OCR sidecar) and builds the manifest.
pub fn build_manifest(
    scenes_path: &Path,
    images: &ImagePathTemplate,
    ocr_path: Option<&Path>,
) -> Result<(Manifest, ManifestSummary)> {
    let scenes: Vec<SceneBoundary> = jsonl::read(scenes_path)?;
    let ocr: Vec<OcrEntry> = match ocr_path {
        Some(p) => jsonl::read(p)?,
        None => Vec::new(),
    };
    manifest_from_scenes(&scenes, images, &ocr)
}
