//! Corpus generation, manifests and video-level splits.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{compose_samples, landmark_pixel, FrameRaster, Provenance, TemporalImage};
use crate::geometry::TemporalImageSpec;
use crate::landmarks::{enumerate_windows, parse_stream, Gating, LandmarkStream};

pub const IMAGES_DIR: &str = "images";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const SKIPPED_FILE: &str = "skipped.jsonl";
pub const MANIFEST_FORMAT: &str = "temporal-forge-manifest/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("video `{0}` is not covered by the split plan")]
    UnknownVideo(String),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("duplicate video id `{0}` in catalog")]
    DuplicateVideo(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("failed to write image {path}: {message}")]
    ImageWrite { path: PathBuf, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Real,
    Fake,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub label: Label,
    /// Directory holding `frame_%06d.png`.
    pub frames_path: PathBuf,
    /// Landmark sidecar file.
    pub landmarks_path: PathBuf,
    pub fps: f64,
    pub frame_count: usize,
}

impl VideoEntry {
    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.frames_path.join(frame_file_name(index))
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

/// Reads a catalog (JSON array of entries). Relative paths are resolved
/// against the catalog's directory.
pub fn load_catalog(path: &Path) -> Result<Vec<VideoEntry>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut entries: Vec<VideoEntry> =
        serde_json::from_str(&text).map_err(|e| PipelineError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for entry in &mut entries {
        if entry.frames_path.is_relative() {
            entry.frames_path = base.join(&entry.frames_path);
        }
        if entry.landmarks_path.is_relative() {
            entry.landmarks_path = base.join(&entry.landmarks_path);
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative to the manifest's directory.
    pub image_path: String,
    pub label: Label,
    pub video_id: String,
    pub offset: usize,
    pub start: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub spec: TemporalImageSpec,
    pub gating: Gating,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
}

impl CorpusManifest {
    pub fn new(spec: TemporalImageSpec, gating: Gating) -> Self {
        Self {
            header: ManifestHeader {
                format: MANIFEST_FORMAT.to_string(),
                spec,
                gating,
                seed: None,
                ratios: None,
            },
            records: Vec::new(),
        }
    }

    /// Sorts records by `(video_id, offset, start)`.
    pub fn canonicalize(&mut self) {
        self.records.sort_by(|a, b| {
            (&a.video_id, a.offset, a.start).cmp(&(&b.video_id, b.offset, b.start))
        });
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or("missing manifest header")?;
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|e| format!("line 1: {e}"))?;
        let records = lines
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
            .collect::<Result<Vec<ManifestRecord>, String>>()?;
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_jsonl(&text).map_err(|message| PipelineError::Format {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(path, self.to_jsonl()).map_err(io_err(path))
    }

    /// Distinct videos with their labels, in id order.
    pub fn videos(&self) -> Vec<VideoRef> {
        let mut seen = BTreeMap::new();
        for r in &self.records {
            seen.entry(r.video_id.clone()).or_insert(r.label);
        }
        seen.into_iter()
            .map(|(video_id, label)| VideoRef { video_id, label })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    TooShort,
    FaceConstraint,
    SidecarMismatch,
    IoError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedVideo {
    pub video_id: String,
    pub label: Label,
    pub reason: SkipReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub videos: usize,
    pub usable_videos: usize,
    pub skipped_videos: usize,
    pub total_images: usize,
    pub real_images: usize,
    pub fake_images: usize,
    pub skipped_by_reason: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationReport {
    pub manifest: CorpusManifest,
    pub skipped: Vec<SkippedVideo>,
    pub summary: GenerationSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub gating: Gating,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            gating: Gating::Video,
            workers: 0,
        }
    }
}

enum VideoOutcome {
    Images(Vec<ManifestRecord>),
    Skipped(SkippedVideo),
}

struct VideoFailure {
    reason: SkipReason,
    detail: String,
}

/// Generates temporal images for every usable video and writes
/// `manifest.jsonl`, `skipped.jsonl` and `images/` under `output_root`.
///
/// Per-video problems skip that video; failures writing into `output_root`
/// abort the run.
pub fn generate_corpus(
    videos: &[VideoEntry],
    spec: &TemporalImageSpec,
    options: GenerateOptions,
    output_root: &Path,
) -> Result<GenerationReport, PipelineError> {
    if videos.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut ids = BTreeSet::new();
    for v in videos {
        if !ids.insert(v.video_id.as_str()) {
            return Err(PipelineError::DuplicateVideo(v.video_id.clone()));
        }
    }
    let images_dir = output_root.join(IMAGES_DIR);
    fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let outcomes: Vec<VideoOutcome> = pool.install(|| {
        videos
            .par_iter()
            .map(|video| process_video(video, spec, options.gating, &images_dir))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut manifest = CorpusManifest::new(*spec, options.gating);
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            VideoOutcome::Images(records) => manifest.records.extend(records),
            VideoOutcome::Skipped(s) => skipped.push(s),
        }
    }
    manifest.canonicalize();
    skipped.sort_by(|a: &SkippedVideo, b| a.video_id.cmp(&b.video_id));

    manifest.save(&output_root.join(MANIFEST_FILE))?;
    let skipped_path = output_root.join(SKIPPED_FILE);
    let file = fs::File::create(&skipped_path).map_err(io_err(&skipped_path))?;
    let mut out = BufWriter::new(file);
    for s in &skipped {
        let line = serde_json::to_string(s).expect("skip record serializes");
        writeln!(out, "{line}").map_err(io_err(&skipped_path))?;
    }
    out.flush().map_err(io_err(&skipped_path))?;

    let summary = summarize(videos.len(), &manifest, &skipped);
    info!(
        "generated {} images from {} usable videos ({} skipped)",
        summary.total_images, summary.usable_videos, summary.skipped_videos
    );
    Ok(GenerationReport {
        manifest,
        skipped,
        summary,
    })
}

fn summarize(
    videos: usize,
    manifest: &CorpusManifest,
    skipped: &[SkippedVideo],
) -> GenerationSummary {
    let mut summary = GenerationSummary {
        videos,
        usable_videos: manifest.videos().len(),
        skipped_videos: skipped.len(),
        total_images: manifest.records.len(),
        ..Default::default()
    };
    for r in &manifest.records {
        match r.label {
            Label::Real => summary.real_images += 1,
            Label::Fake => summary.fake_images += 1,
        }
    }
    for s in skipped {
        let key = serde_json::to_value(s.reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        *summary.skipped_by_reason.entry(key).or_default() += 1;
    }
    summary
}

fn process_video(
    video: &VideoEntry,
    spec: &TemporalImageSpec,
    gating: Gating,
    images_dir: &Path,
) -> Result<VideoOutcome, PipelineError> {
    let plans = match plan_video(video, spec, gating) {
        Ok(plans) => plans,
        Err(failure) => {
            warn!("skipping {}: {}", video.video_id, failure.detail);
            return Ok(VideoOutcome::Skipped(SkippedVideo {
                video_id: video.video_id.clone(),
                label: video.label,
                reason: failure.reason,
                detail: failure.detail,
            }));
        }
    };
    let (stream, plans) = plans;

    // Sample each needed frame once; windows then only copy sample rows.
    let needed: BTreeSet<usize> = plans
        .iter()
        .flat_map(|p| p.frame_indices.iter().copied())
        .collect();
    let mut samples: HashMap<usize, Vec<[u8; 3]>> = HashMap::with_capacity(needed.len());
    for &index in &needed {
        let path = video.frame_path(index);
        let frame = match FrameRaster::load_png(&path) {
            Ok(frame) => frame,
            Err(e) => {
                return Ok(VideoOutcome::Skipped(SkippedVideo {
                    video_id: video.video_id.clone(),
                    label: video.label,
                    reason: SkipReason::IoError,
                    detail: format!("{}: {e}", path.display()),
                }))
            }
        };
        let points = stream.frames[index]
            .points
            .as_ref()
            .expect("planned frames carry landmarks");
        let row = points
            .iter()
            .map(|&p| {
                let (col, row) = landmark_pixel(&frame, p);
                frame.pixel(col, row)
            })
            .collect();
        samples.insert(index, row);
    }

    let mut records = Vec::with_capacity(plans.len());
    for plan in &plans {
        let rows: Vec<&[[u8; 3]]> = plan
            .frame_indices
            .iter()
            .map(|i| samples[i].as_slice())
            .collect();
        let provenance = Provenance {
            video_id: video.video_id.clone(),
            offset: plan.offset,
            start: plan.start,
        };
        let image =
            compose_samples(&rows, spec, provenance).map_err(|e| PipelineError::Format {
                path: video.landmarks_path.clone(),
                message: e.to_string(),
            })?;
        records.push(write_image(&image, video.label, images_dir)?);
    }
    Ok(VideoOutcome::Images(records))
}

type Planned = (LandmarkStream, Vec<crate::landmarks::WindowPlan>);

fn plan_video(
    video: &VideoEntry,
    spec: &TemporalImageSpec,
    gating: Gating,
) -> Result<Planned, VideoFailure> {
    let mismatch = |detail: String| VideoFailure {
        reason: SkipReason::SidecarMismatch,
        detail,
    };
    let bytes = fs::read(&video.landmarks_path).map_err(|e| VideoFailure {
        reason: SkipReason::IoError,
        detail: format!("{}: {e}", video.landmarks_path.display()),
    })?;
    let stream = parse_stream(&bytes).map_err(|e| mismatch(e.to_string()))?;
    if stream.frame_count != video.frame_count {
        return Err(mismatch(format!(
            "sidecar declares {} frames, catalog {}",
            stream.frame_count, video.frame_count
        )));
    }
    if stream.video_id != video.video_id {
        return Err(mismatch(format!(
            "sidecar belongs to `{}`",
            stream.video_id
        )));
    }
    if stream.landmarks != spec.landmarks() {
        return Err(mismatch(format!(
            "sidecar carries {} landmarks, geometry expects {}",
            stream.landmarks,
            spec.landmarks()
        )));
    }
    if video.frame_count < spec.span() {
        return Err(VideoFailure {
            reason: SkipReason::TooShort,
            detail: format!(
                "{} frames, a window spans {}",
                video.frame_count,
                spec.span()
            ),
        });
    }
    let plans = enumerate_windows(&stream, spec, gating);
    if plans.is_empty() {
        return Err(VideoFailure {
            reason: SkipReason::FaceConstraint,
            detail: "no window with exactly one face on every sampled frame".into(),
        });
    }
    Ok((stream, plans))
}

fn write_image(
    image: &TemporalImage,
    label: Label,
    images_dir: &Path,
) -> Result<ManifestRecord, PipelineError> {
    let name = image.provenance.file_name();
    let path = images_dir.join(&name);
    image
        .raster()
        .save_png(&path)
        .map_err(|e| PipelineError::ImageWrite {
            path: path.clone(),
            message: e.to_string(),
        })?;
    Ok(ManifestRecord {
        image_path: format!("{IMAGES_DIR}/{name}"),
        label,
        video_id: image.provenance.video_id.clone(),
        offset: image.provenance.offset,
        start: image.provenance.start,
        split: Split::Unassigned,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRef {
    pub video_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub stratify: bool,
    pub assignment: BTreeMap<String, Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SplitPlan {
    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|&&s| s == split).count()
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

fn validate_ratios(ratios: [f64; 3]) -> Result<(), PipelineError> {
    let ok = ratios.iter().all(|r| r.is_finite() && *r > 0.0)
        && (ratios.iter().sum::<f64>() - 1.0).abs() < 1e-6;
    if ok {
        Ok(())
    } else {
        Err(PipelineError::InvalidRatios(ratios))
    }
}

/// Videos per split for a group of `n`: valid and test get `floor(n * ratio)`,
/// train takes the rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    // Tolerance keeps products like 0.29 * 100 = 28.999999999999996 at 29.
    let floor = |r: f64| ((n as f64 * r) + 1e-9).floor() as usize;
    let valid = floor(ratios[1]);
    let test = floor(ratios[2]);
    [n - valid - test, valid, test]
}

/// Assigns whole videos to train/valid/test, deterministically in `seed`.
pub fn split_videos(
    videos: &[VideoRef],
    ratios: [f64; 3],
    seed: u64,
    stratify: bool,
) -> Result<SplitPlan, PipelineError> {
    validate_ratios(ratios)?;
    if videos.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut groups: BTreeMap<Option<Label>, Vec<&str>> = BTreeMap::new();
    for v in videos {
        let key = stratify.then_some(v.label);
        groups.entry(key).or_default().push(&v.video_id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for ids in groups.values_mut() {
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        let [train, valid, _] = split_sizes(ids.len(), ratios);
        for (i, id) in ids.iter().enumerate() {
            let split = if i < train {
                Split::Train
            } else if i < train + valid {
                Split::Valid
            } else {
                Split::Test
            };
            assignment.insert((*id).to_string(), split);
        }
    }
    let mut plan = SplitPlan {
        seed,
        ratios,
        stratify,
        assignment,
        warnings: Vec::new(),
    };
    for split in [Split::Valid, Split::Test] {
        if plan.count(split) == 0 {
            let msg = format!("{split} split is empty ({} videos)", plan.assignment.len());
            warn!("{msg}");
            plan.warnings.push(msg);
        }
    }
    Ok(plan)
}

/// Stamps each record with its video's split.
pub fn apply_split(
    manifest: &CorpusManifest,
    plan: &SplitPlan,
) -> Result<CorpusManifest, PipelineError> {
    let mut out = manifest.clone();
    for record in &mut out.records {
        record.split = *plan
            .assignment
            .get(&record.video_id)
            .ok_or_else(|| PipelineError::UnknownVideo(record.video_id.clone()))?;
    }
    out.header.seed = Some(plan.seed);
    out.header.ratios = Some(plan.ratios);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub videos: usize,
    pub images: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub videos: usize,
    pub images: usize,
    pub real_images: usize,
    pub fake_images: usize,
    pub fake_videos: usize,
    pub splits: BTreeMap<Split, SplitCounts>,
}

pub fn corpus_stats(manifest: &CorpusManifest) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut videos: BTreeMap<&str, (Label, Split)> = BTreeMap::new();
    for r in &manifest.records {
        stats.images += 1;
        match r.label {
            Label::Real => stats.real_images += 1,
            Label::Fake => stats.fake_images += 1,
        }
        stats.splits.entry(r.split).or_default().images += 1;
        videos.entry(&r.video_id).or_insert((r.label, r.split));
    }
    stats.videos = videos.len();
    for (label, split) in videos.values() {
        if *label == Label::Fake {
            stats.fake_videos += 1;
        }
        stats.splits.entry(*split).or_default().videos += 1;
    }
    stats
}
