//! Landmark sidecar streams and sliding-window enumeration.
//!
//! A sidecar is line-delimited JSON. The first line is a header
//! `{"video_id", "fps", "frame_count", "d"}`; every following line is one frame
//! `{"frame", "faces", "points"}` where `points` is a flat `[x0, y0, x1, y1, ..]`
//! array of `2 * d` normalized coordinates, present only when `faces == 1`.
//!
//! The detector that writes the sidecar is responsible for face identity: a
//! run of `faces == 1` frames is taken to be the same face throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TemporalImageSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("frame index gap: expected frame {expected}, found {found}")]
    Gap { expected: usize, found: usize },
    #[error("frame {frame}: expected {expected} landmark points, found {found}")]
    Dimension {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("header declares {declared} frames but the stream holds {actual}")]
    FrameCountMismatch { declared: usize, actual: usize },
}

/// Normalized landmark coordinate; `(0, 0)` is the top-left pixel centre and
/// `(1, 1)` the bottom-right one.
pub type Point = (f32, f32);

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub frame_index: usize,
    pub face_count: u32,
    /// Exactly `d` points when `face_count == 1`, otherwise `None`.
    pub points: Option<Vec<Point>>,
}

impl LandmarkFrame {
    pub fn has_single_face(&self) -> bool {
        self.face_count == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkStream {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: usize,
    pub landmarks: usize,
    pub frames: Vec<LandmarkFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarHeader {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarFrame {
    pub frame: usize,
    pub faces: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f32>>,
}

fn syntax(line: usize, message: impl Into<String>) -> StreamError {
    StreamError::Syntax {
        line,
        message: message.into(),
    }
}

/// Parses and validates a sidecar.
pub fn parse_stream(bytes: &[u8]) -> Result<LandmarkStream, StreamError> {
    let text = std::str::from_utf8(bytes).map_err(|e| syntax(0, e.to_string()))?;
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(n, l)| (n + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line_no, header_line) = lines.next().ok_or_else(|| syntax(1, "missing header"))?;
    let header: SidecarHeader =
        serde_json::from_str(header_line).map_err(|e| syntax(line_no, e.to_string()))?;
    if !(header.fps.is_finite() && header.fps > 0.0) {
        return Err(syntax(line_no, "fps must be positive"));
    }
    if header.d == 0 {
        return Err(syntax(line_no, "d must be positive"));
    }

    let mut frames = Vec::with_capacity(header.frame_count);
    for (line_no, line) in lines {
        let record: SidecarFrame =
            serde_json::from_str(line).map_err(|e| syntax(line_no, e.to_string()))?;
        let expected = frames.len();
        if record.frame != expected {
            return Err(StreamError::Gap {
                expected,
                found: record.frame,
            });
        }
        let points = match (record.faces, record.points) {
            (1, Some(flat)) => {
                if flat.len() != 2 * header.d {
                    return Err(StreamError::Dimension {
                        frame: record.frame,
                        expected: header.d,
                        found: flat.len() / 2,
                    });
                }
                if flat.iter().any(|v| !v.is_finite()) {
                    return Err(syntax(line_no, "non-finite landmark coordinate"));
                }
                Some(flat.chunks_exact(2).map(|c| (c[0], c[1])).collect())
            }
            (1, None) => {
                return Err(StreamError::Dimension {
                    frame: record.frame,
                    expected: header.d,
                    found: 0,
                })
            }
            (_, Some(_)) => {
                return Err(syntax(
                    line_no,
                    "points present on a frame without exactly one face",
                ))
            }
            (_, None) => None,
        };
        frames.push(LandmarkFrame {
            frame_index: record.frame,
            face_count: record.faces,
            points,
        });
    }
    if frames.len() != header.frame_count {
        return Err(StreamError::FrameCountMismatch {
            declared: header.frame_count,
            actual: frames.len(),
        });
    }
    Ok(LandmarkStream {
        video_id: header.video_id,
        fps: header.fps,
        frame_count: header.frame_count,
        landmarks: header.d,
        frames,
    })
}

/// Serializes a stream back into sidecar form (LF line endings).
pub fn write_stream(stream: &LandmarkStream) -> String {
    let header = SidecarHeader {
        video_id: stream.video_id.clone(),
        fps: stream.fps,
        frame_count: stream.frame_count,
        d: stream.landmarks,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for frame in &stream.frames {
        let record = SidecarFrame {
            frame: frame.frame_index,
            faces: frame.face_count,
            points: frame
                .points
                .as_ref()
                .map(|pts| pts.iter().flat_map(|&(x, y)| [x, y]).collect()),
        };
        out.push_str(&serde_json::to_string(&record).expect("frame serializes"));
        out.push('\n');
    }
    out
}

/// How face-count violations affect window enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// Any frame without exactly one face discards the whole video.
    #[default]
    Video,
    /// Only windows that sample such a frame are discarded.
    Window,
}

impl std::str::FromStr for Gating {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "video" => Ok(Gating::Video),
            "window" => Ok(Gating::Window),
            other => Err(format!(
                "unknown gating mode `{other}` (expected video|window)"
            )),
        }
    }
}

/// One window: `window` frames starting at `start`, `skip` frames apart.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindowPlan {
    pub offset: usize,
    pub start: usize,
    pub frame_indices: Vec<usize>,
}

fn window_starts(
    frame_count: usize,
    spec: &TemporalImageSpec,
) -> impl Iterator<Item = (usize, usize)> + '_ {
    let skip = spec.skip();
    let reach = (spec.window() - 1) * skip;
    (0..skip).flat_map(move |offset| {
        (offset..frame_count)
            .step_by(skip)
            .take_while(move |&start| start + reach < frame_count)
            .map(move |start| (offset, start))
    })
}

/// Enumerates windows offset-major, then by ascending start.
pub fn enumerate_windows(
    stream: &LandmarkStream,
    spec: &TemporalImageSpec,
    gating: Gating,
) -> Vec<WindowPlan> {
    if gating == Gating::Video && !stream.frames.iter().all(LandmarkFrame::has_single_face) {
        return Vec::new();
    }
    let skip = spec.skip();
    window_starts(stream.frame_count, spec)
        .map(|(offset, start)| WindowPlan {
            offset,
            start,
            frame_indices: (0..spec.window()).map(|b| start + b * skip).collect(),
        })
        .filter(|plan| {
            plan.frame_indices.iter().all(|&f| {
                stream
                    .frames
                    .get(f)
                    .is_some_and(LandmarkFrame::has_single_face)
            })
        })
        .collect()
}

/// Number of windows a fully valid video of `frame_count` frames yields.
pub fn count_windows(frame_count: usize, spec: &TemporalImageSpec) -> usize {
    let (skip, window) = (spec.skip(), spec.window());
    (0..skip)
        .filter(|&offset| offset < frame_count)
        .map(|offset| {
            let sampled = (frame_count - 1 - offset) / skip + 1;
            (sampled + 1).saturating_sub(window)
        })
        .sum()
}
