//! Deterministic synthetic corpora: rendered frame sequences with matching
//! landmark sidecars.
//!
//! Each video shows a flat-shaded "face" drifting smoothly across the frame.
//! Landmarks sit on fixed face-relative positions split into eye, mouth and
//! skin regions. Real videos blink at the configured rate; fake videos apply
//! the configured artifact (no blinks, per-frame chroma flicker on the mouth,
//! or both).
//!
//! Randomness for a video is drawn from a ChaCha stream keyed by a SHA-256
//! digest of `(seed, label, index)`, so a video never depends on which other
//! videos were generated or in what order.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::composer::{FrameRaster, TemporalImage};
use crate::geometry::DEFAULT_LANDMARKS;
use crate::landmarks::{write_stream, LandmarkFrame, LandmarkStream, Point};
use crate::pipeline::{frame_file_name, Label, VideoEntry};

pub const CATALOG_FILE: &str = "catalog.json";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactMode {
    None,
    Flicker,
    NoBlink,
    #[default]
    FlickerNoBlink,
}

impl ArtifactMode {
    fn suppresses_blinks(self) -> bool {
        matches!(self, Self::NoBlink | Self::FlickerNoBlink)
    }

    fn flickers(self) -> bool {
        matches!(self, Self::Flicker | Self::FlickerNoBlink)
    }
}

impl std::str::FromStr for ArtifactMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "flicker" => Ok(Self::Flicker),
            "no_blink" => Ok(Self::NoBlink),
            "flicker_no_blink" => Ok(Self::FlickerNoBlink),
            other => Err(format!("unknown artifact mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub videos_per_label: usize,
    pub frame_count: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub landmarks: usize,
    /// Blinks per minute in real videos.
    pub blink_rate: f64,
    /// Seconds per blink.
    pub blink_duration: f64,
    pub artifact_mode: ArtifactMode,
    /// Peak face drift as a fraction of frame size.
    pub landmark_motion_amplitude: f64,
    /// Peak per-channel mouth chroma offset in fake videos.
    pub flicker_amplitude: u8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            videos_per_label: 5,
            frame_count: 150,
            fps: 30.0,
            width: 96,
            height: 96,
            landmarks: DEFAULT_LANDMARKS,
            blink_rate: 17.0,
            blink_duration: 0.2,
            artifact_mode: ArtifactMode::default(),
            landmark_motion_amplitude: 0.04,
            flicker_amplitude: 48,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.frame_count == 0 {
            return fail("frame_count must be at least 1");
        }
        if self.width < 8 || self.height < 8 {
            return fail("frames must be at least 8x8");
        }
        if self.landmarks == 0 {
            return fail("landmark count must be positive");
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail("fps must be positive");
        }
        if !(self.blink_rate.is_finite() && self.blink_rate > 0.0) {
            return fail("blink rate must be positive");
        }
        if !(self.blink_duration.is_finite() && self.blink_duration > 0.0) {
            return fail("blink duration must be positive");
        }
        if !(self.landmark_motion_amplitude.is_finite()
            && (0.0..0.2).contains(&self.landmark_motion_amplitude))
        {
            return fail("motion amplitude must lie in [0, 0.2)");
        }
        Ok(())
    }

    /// Frames between blink onsets.
    pub fn blink_period(&self) -> f64 {
        self.fps * 60.0 / self.blink_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Eye,
    Mouth,
    Skin,
}

/// Face-relative landmark positions (`u`, `v` in `[-0.5, 0.5]`) and regions.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceLayout {
    pub positions: Vec<(f64, f64)>,
    pub regions: Vec<Region>,
}

// (u0, u1, v0, v1) boxes in face units.
const LEFT_EYE: [f64; 4] = [-0.36, -0.12, -0.26, -0.12];
const RIGHT_EYE: [f64; 4] = [0.12, 0.36, -0.26, -0.12];
const MOUTH: [f64; 4] = [-0.22, 0.22, 0.14, 0.32];
const SKIN_CLEARANCE: f64 = 0.06;
const FACE_FRACTION: f64 = 0.6;

fn in_box(b: &[f64; 4], u: f64, v: f64, grow: f64) -> bool {
    u >= b[0] - grow && u <= b[1] + grow && v >= b[2] - grow && v <= b[3] + grow
}

fn grid_in_box(b: &[f64; 4], n: usize) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let aspect = (b[1] - b[0]) / (b[3] - b[2]);
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).max(1);
    let rows = n.div_ceil(cols);
    let lerp = |lo: f64, hi: f64, i: usize, count: usize| {
        if count == 1 {
            (lo + hi) / 2.0
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    };
    (0..n)
        .map(|i| {
            (
                lerp(b[0], b[1], i % cols, cols),
                lerp(b[2], b[3], i / cols, rows),
            )
        })
        .collect()
}

impl FaceLayout {
    /// Eye landmarks come first, then mouth, then skin, so in a temporal
    /// image each region occupies a fixed band of every frame block.
    pub fn new(landmarks: usize) -> Self {
        let per_eye = landmarks * 3 / 40;
        let mouth = landmarks * 3 / 20;
        let skin = landmarks - 2 * per_eye - mouth;

        let mut positions = grid_in_box(&LEFT_EYE, per_eye);
        positions.extend(grid_in_box(&RIGHT_EYE, per_eye));
        positions.extend(grid_in_box(&MOUTH, mouth));
        let mut regions = vec![Region::Eye; 2 * per_eye];
        regions.extend(std::iter::repeat_n(Region::Mouth, mouth));

        let mut side = (skin as f64).sqrt().ceil() as usize + 1;
        let skin_points = loop {
            let candidates: Vec<(f64, f64)> = (0..side * side)
                .map(|i| {
                    let step = 0.92 / (side - 1).max(1) as f64;
                    (
                        -0.46 + step * (i % side) as f64,
                        -0.46 + step * (i / side) as f64,
                    )
                })
                .filter(|&(u, v)| {
                    [LEFT_EYE, RIGHT_EYE, MOUTH]
                        .iter()
                        .all(|b| !in_box(b, u, v, SKIN_CLEARANCE))
                })
                .collect();
            if candidates.len() >= skin {
                break candidates.into_iter().take(skin).collect::<Vec<_>>();
            }
            side += 1;
        };
        positions.extend(skin_points);
        regions.extend(std::iter::repeat_n(Region::Skin, skin));
        Self { positions, regions }
    }

    pub fn indices(&self, region: Region) -> Vec<usize> {
        (0..self.regions.len())
            .filter(|&j| self.regions[j] == region)
            .collect()
    }
}

/// One synthesized video held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub video_id: String,
    pub label: Label,
    pub frames: Vec<FrameRaster>,
    pub stream: LandmarkStream,
}

pub fn video_id(label: Label, index: usize) -> String {
    format!("{label}_{index:04}")
}

fn video_rng(seed: u64, index: usize, label: Label) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"temporal-forge/synth");
    hasher.update(seed.to_le_bytes());
    hasher.update([label as u8]);
    hasher.update((index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

struct Palette {
    background: [f64; 3],
    skin: [f64; 3],
    sclera: [f64; 3],
    lips: [f64; 3],
}

fn pick(rng: &mut ChaCha8Rng, ranges: [(f64, f64); 3]) -> [f64; 3] {
    ranges.map(|(lo, hi)| rng.gen_range(lo..hi))
}

/// Closure of the eyelid in `[0, 1]` at frame `t` for blinks centred at
/// `phase + n * period`, each lasting `duration` frames.
pub fn blink_closure(t: f64, phase: f64, period: f64, duration: f64) -> f64 {
    let n = ((t - phase) / period).round();
    let dist = (t - (phase + n * period)).abs();
    (1.0 - dist / (duration / 2.0)).max(0.0)
}

/// Renders one video. Deterministic in `(config.seed, index, label)`.
pub fn synth_video(config: &SynthConfig, index: usize, label: Label) -> SynthVideo {
    let mut rng = video_rng(config.seed, index, label);
    let layout = FaceLayout::new(config.landmarks);
    let palette = Palette {
        background: pick(&mut rng, [(30.0, 90.0), (30.0, 90.0), (30.0, 90.0)]),
        skin: pick(&mut rng, [(160.0, 220.0), (110.0, 160.0), (90.0, 130.0)]),
        sclera: pick(&mut rng, [(215.0, 240.0), (215.0, 240.0), (215.0, 240.0)]),
        lips: pick(&mut rng, [(140.0, 180.0), (50.0, 80.0), (60.0, 90.0)]),
    };
    let motion_phase: [f64; 2] = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
    let motion_period: [f64; 2] = [rng.gen_range(70.0..130.0), rng.gen_range(90.0..160.0)];
    let light_phase = rng.gen_range(0.0..TAU);
    let period = config.blink_period();
    let blink_phase = rng.gen_range(0.0..period);
    let blink_frames = config.blink_duration * config.fps;
    let blinks = label == Label::Real || !config.artifact_mode.suppresses_blinks();
    let flicker = label == Label::Fake && config.artifact_mode.flickers();
    let amp = config.flicker_amplitude as f64;

    let (w, h) = (config.width as f64, config.height as f64);
    let face = FACE_FRACTION * w.min(h);
    // Rendered regions are grown by this much so the rounded landmark pixel
    // always falls inside its own region.
    let grow = 1.5 / face;

    let mut frames = Vec::with_capacity(config.frame_count);
    let mut records = Vec::with_capacity(config.frame_count);
    for t in 0..config.frame_count {
        let tf = t as f64;
        let cx = (w - 1.0) / 2.0
            + config.landmark_motion_amplitude
                * w
                * (TAU * tf / motion_period[0] + motion_phase[0]).sin();
        let cy = (h - 1.0) / 2.0
            + config.landmark_motion_amplitude
                * h
                * (TAU * tf / motion_period[1] + motion_phase[1]).sin();
        let light = 1.0 + 0.03 * (TAU * tf / 90.0 + light_phase).sin();
        let closure = if blinks {
            blink_closure(tf, blink_phase, period, blink_frames)
        } else {
            0.0
        };
        let lid = palette.skin.map(|c| c * 0.55);
        let eye: [f64; 3] =
            std::array::from_fn(|c| palette.sclera[c] * (1.0 - closure) + lid[c] * closure);
        let lips: [f64; 3] = if flicker {
            std::array::from_fn(|c| palette.lips[c] + rng.gen_range(-amp..=amp))
        } else {
            palette.lips
        };

        let frame = FrameRaster::from_fn(config.width, config.height, |col, row| {
            let u = (col as f64 - cx) / face;
            let v = (row as f64 - cy) / face;
            let base = if in_box(&LEFT_EYE, u, v, grow) || in_box(&RIGHT_EYE, u, v, grow) {
                eye
            } else if in_box(&MOUTH, u, v, grow) {
                lips
            } else if u.abs() <= 0.5 && v.abs() <= 0.5 {
                [
                    palette.skin[0] + 20.0 * u,
                    palette.skin[1] + 12.0 * v,
                    palette.skin[2],
                ]
            } else {
                palette.background
            };
            base.map(|c| (c * light).round().clamp(0.0, 255.0) as u8)
        })
        .expect("config dimensions are validated");
        frames.push(frame);

        let points: Vec<Point> = layout
            .positions
            .iter()
            .map(|&(u, v)| {
                (
                    ((cx + u * face) / (w - 1.0)) as f32,
                    ((cy + v * face) / (h - 1.0)) as f32,
                )
            })
            .collect();
        records.push(LandmarkFrame {
            frame_index: t,
            face_count: 1,
            points: Some(points),
        });
    }

    let id = video_id(label, index);
    SynthVideo {
        video_id: id.clone(),
        label,
        frames,
        stream: LandmarkStream {
            video_id: id,
            fps: config.fps,
            frame_count: config.frame_count,
            landmarks: config.landmarks,
            frames: records,
        },
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |e| SynthError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes frames to `root/videos/<id>/` and the sidecar to
/// `root/landmarks/<id>.jsonl`, returning a catalog entry with paths relative
/// to `root`.
pub fn write_video(
    root: &Path,
    video_id: &str,
    label: Label,
    frames: &[FrameRaster],
    stream: &LandmarkStream,
) -> Result<VideoEntry, SynthError> {
    let frames_rel = PathBuf::from("videos").join(video_id);
    let landmarks_rel = PathBuf::from("landmarks").join(format!("{video_id}.jsonl"));
    let frames_dir = root.join(&frames_rel);
    fs::create_dir_all(&frames_dir).map_err(io(&frames_dir))?;
    for (t, frame) in frames.iter().enumerate() {
        let path = frames_dir.join(frame_file_name(t));
        frame.save_png(&path).map_err(|e| SynthError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
    }
    let sidecar = root.join(&landmarks_rel);
    if let Some(parent) = sidecar.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(&sidecar, write_stream(stream)).map_err(io(&sidecar))?;
    Ok(VideoEntry {
        video_id: video_id.to_string(),
        label,
        frames_path: frames_rel,
        landmarks_path: landmarks_rel,
        fps: stream.fps,
        frame_count: stream.frame_count,
    })
}

/// Writes `catalog.json` under `root`.
pub fn write_catalog(root: &Path, entries: &[VideoEntry]) -> Result<PathBuf, SynthError> {
    fs::create_dir_all(root).map_err(io(root))?;
    let path = root.join(CATALOG_FILE);
    let json = serde_json::to_string_pretty(entries).expect("catalog serializes");
    fs::write(&path, json + "\n").map_err(io(&path))?;
    Ok(path)
}

/// Materializes `videos_per_label` real and fake videos plus `catalog.json`.
/// Returned entries have paths joined onto `output_root`.
pub fn synth_corpus(
    config: &SynthConfig,
    output_root: &Path,
) -> Result<Vec<VideoEntry>, SynthError> {
    config.validate()?;
    let jobs: Vec<(Label, usize)> = [Label::Real, Label::Fake]
        .into_iter()
        .flat_map(|label| (0..config.videos_per_label).map(move |i| (label, i)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(label, index)| {
            let video = synth_video(config, index, label);
            write_video(
                output_root,
                &video.video_id,
                label,
                &video.frames,
                &video.stream,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_catalog(output_root, &entries)?;
    Ok(entries
        .into_iter()
        .map(|mut e| {
            e.frames_path = output_root.join(&e.frames_path);
            e.landmarks_path = output_root.join(&e.landmarks_path);
            e
        })
        .collect())
}

/// A video whose frame `t` is uniformly `(t mod 256)` in every channel, with a
/// single face on every frame. Used to check pixel placement end to end.
pub fn index_coded_video(
    video_id: &str,
    frame_count: usize,
    width: usize,
    height: usize,
    landmarks: usize,
) -> (Vec<FrameRaster>, LandmarkStream) {
    let layout = FaceLayout::new(landmarks);
    let points: Vec<Point> = layout
        .positions
        .iter()
        .map(|&(u, v)| {
            (
                (0.5 + u * FACE_FRACTION) as f32,
                (0.5 + v * FACE_FRACTION) as f32,
            )
        })
        .collect();
    let frames = (0..frame_count)
        .map(|t| FrameRaster::filled(width, height, [(t % 256) as u8; 3]).expect("positive dims"))
        .collect();
    let stream = LandmarkStream {
        video_id: video_id.to_string(),
        fps: 30.0,
        frame_count,
        landmarks,
        frames: (0..frame_count)
            .map(|t| LandmarkFrame {
                frame_index: t,
                face_count: 1,
                points: Some(points.clone()),
            })
            .collect(),
    };
    (frames, stream)
}

/// Mean absolute change of mouth-landmark pixels between consecutive frame
/// blocks of a temporal image, averaged over channels.
pub fn mouth_temporal_energy(image: &TemporalImage, layout: &FaceLayout) -> f64 {
    let spec = image.spec;
    let mouth = layout.indices(Region::Mouth);
    let pixels = image.pixels();
    let block = spec.landmarks() * 3;
    let mut total = 0.0;
    let mut count = 0usize;
    for b in 0..spec.window() - 1 {
        for &j in &mouth {
            for c in 0..3 {
                let a = pixels[b * block + j * 3 + c] as f64;
                let next = pixels[(b + 1) * block + j * 3 + c] as f64;
                total += (a - next).abs();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
