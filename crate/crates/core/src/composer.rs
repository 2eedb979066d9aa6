//! Landmark sampling and temporal-image assembly.
//!
//! Frame `b` of a window fills rows `b*k .. (b+1)*k` of the image; landmark
//! `j` of that frame lands at row `b*k + j / W`, column `j % W`, in detector
//! index order. Pixel values are written as sampled, with no photometric
//! adjustment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TemporalImageSpec;
use crate::landmarks::Point;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("expected {expected} landmark points, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("expected {expected} frames, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("raster buffer holds {found} bytes, {expected} required")]
    Buffer { expected: usize, found: usize },
    #[error("raster dimensions must be positive")]
    EmptyRaster,
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl FrameRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ComposeError> {
        if width == 0 || height == 0 {
            return Err(ComposeError::EmptyRaster);
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ComposeError::Buffer {
                expected,
                found: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ComposeError> {
        let pixels = rgb.repeat(width * height);
        Self::new(width, height, pixels)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ComposeError> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for row in 0..height {
            for col in 0..width {
                pixels.extend_from_slice(&f(col, row));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let at = (row * self.width + col) * 3;
        [self.pixels[at], self.pixels[at + 1], self.pixels[at + 2]]
    }

    pub fn load_png(path: &Path) -> Result<Self, image::ImageError> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw()).map_err(|e| {
            image::ImageError::Parameter(image::error::ParameterError::from_kind(
                image::error::ParameterErrorKind::Generic(e.to_string()),
            ))
        })
    }

    /// Writes an 8-bit RGB, non-interlaced PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), image::ImageError> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
    }
}

/// Pixel index for one normalized coordinate along an axis of `len` pixels.
/// Rounds half away from zero and clamps, so any finite input is in bounds.
fn to_pixel(coord: f32, len: usize) -> usize {
    let scaled = (coord as f64 * (len - 1) as f64).round();
    if scaled.is_nan() || scaled <= 0.0 {
        0
    } else {
        (scaled as usize).min(len - 1)
    }
}

/// Pixel location a normalized landmark maps to, as `(col, row)`.
pub fn landmark_pixel(frame: &FrameRaster, point: Point) -> (usize, usize) {
    (
        to_pixel(point.0, frame.width),
        to_pixel(point.1, frame.height),
    )
}

/// Samples the frame at each landmark, preserving landmark order.
pub fn sample_landmarks(
    frame: &FrameRaster,
    points: &[Point],
    expected: usize,
) -> Result<Vec<[u8; 3]>, ComposeError> {
    if points.len() != expected {
        return Err(ComposeError::Dimension {
            expected,
            found: points.len(),
        });
    }
    Ok(points
        .iter()
        .map(|&p| {
            let (col, row) = landmark_pixel(frame, p);
            frame.pixel(col, row)
        })
        .collect())
}

/// Where an image came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub video_id: String,
    pub offset: usize,
    pub start: usize,
}

impl Provenance {
    /// `<video_id>_o<offset>_s<start>.png`
    pub fn file_name(&self) -> String {
        format!("{}_o{}_s{}.png", self.video_id, self.offset, self.start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalImage {
    pub spec: TemporalImageSpec,
    pub provenance: Provenance,
    raster: FrameRaster,
}

impl TemporalImage {
    /// Wraps an existing raster, e.g. one read back from disk.
    pub fn from_raster(
        spec: TemporalImageSpec,
        provenance: Provenance,
        raster: FrameRaster,
    ) -> Result<Self, ComposeError> {
        if (raster.width(), raster.height()) != (spec.width(), spec.height()) {
            return Err(ComposeError::Buffer {
                expected: spec.width() * spec.height() * 3,
                found: raster.pixels().len(),
            });
        }
        Ok(Self {
            spec,
            provenance,
            raster,
        })
    }

    pub fn raster(&self) -> &FrameRaster {
        &self.raster
    }

    pub fn pixels(&self) -> &[u8] {
        self.raster.pixels()
    }
}

/// Assembles an image from per-frame landmark samples, one slice of `d`
/// samples per frame in window order.
pub fn compose_samples(
    samples: &[&[[u8; 3]]],
    spec: &TemporalImageSpec,
    provenance: Provenance,
) -> Result<TemporalImage, ComposeError> {
    if samples.len() != spec.window() {
        return Err(ComposeError::Arity {
            expected: spec.window(),
            found: samples.len(),
        });
    }
    let block = spec.landmarks() * 3;
    let mut pixels = Vec::with_capacity(spec.height() * spec.width() * 3);
    for frame in samples {
        if frame.len() != spec.landmarks() {
            return Err(ComposeError::Dimension {
                expected: spec.landmarks(),
                found: frame.len(),
            });
        }
        // k rows of W pixels laid end to end are exactly the d samples in order.
        pixels.extend(frame.iter().flatten());
        debug_assert_eq!(pixels.len() % block, 0);
    }
    let raster = FrameRaster::new(spec.width(), spec.height(), pixels)?;
    Ok(TemporalImage {
        spec: *spec,
        provenance,
        raster,
    })
}

/// Builds one temporal image from the window's frames and their landmarks.
pub fn compose(
    frames: &[FrameRaster],
    landmarks: &[Vec<Point>],
    spec: &TemporalImageSpec,
    provenance: Provenance,
) -> Result<TemporalImage, ComposeError> {
    if frames.len() != spec.window() || landmarks.len() != spec.window() {
        return Err(ComposeError::Arity {
            expected: spec.window(),
            found: if frames.len() != spec.window() {
                frames.len()
            } else {
                landmarks.len()
            },
        });
    }
    let samples = frames
        .iter()
        .zip(landmarks)
        .map(|(frame, points)| sample_landmarks(frame, points, spec.landmarks()))
        .collect::<Result<Vec<_>, _>>()?;
    let views: Vec<&[[u8; 3]]> = samples.iter().map(Vec::as_slice).collect();
    compose_samples(&views, spec, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMethod {
    Nearest,
    #[default]
    Bilinear,
    /// Box filter weighting source pixels by covered area.
    Area,
}

impl std::str::FromStr for ResizeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "area" => Ok(Self::Area),
            other => Err(format!("unknown resize method `{other}`")),
        }
    }
}

/// Resamples a raster to `new_width x new_height`. Pixel centres are aligned
/// at half-pixel offsets, so an identity resize is exact for every method.
pub fn resize_raster(
    src: &FrameRaster,
    new_width: usize,
    new_height: usize,
    method: ResizeMethod,
) -> Result<FrameRaster, ComposeError> {
    if new_width == 0 || new_height == 0 {
        return Err(ComposeError::EmptyRaster);
    }
    if (new_width, new_height) == (src.width, src.height) {
        return Ok(src.clone());
    }
    match method {
        ResizeMethod::Nearest => {
            let cols: Vec<usize> = (0..new_width)
                .map(|x| nearest_index(x, src.width, new_width))
                .collect();
            let rows: Vec<usize> = (0..new_height)
                .map(|y| nearest_index(y, src.height, new_height))
                .collect();
            FrameRaster::from_fn(new_width, new_height, |x, y| src.pixel(cols[x], rows[y]))
        }
        ResizeMethod::Bilinear => {
            let cols = linear_taps(src.width, new_width);
            let rows = linear_taps(src.height, new_height);
            FrameRaster::from_fn(new_width, new_height, |x, y| {
                let (x0, x1, fx) = cols[x];
                let (y0, y1, fy) = rows[y];
                let mut out = [0u8; 3];
                for (c, slot) in out.iter_mut().enumerate() {
                    let at = |col: usize, row: usize| src.pixel(col, row)[c] as f64;
                    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                    *slot = quantize(top * (1.0 - fy) + bottom * fy);
                }
                out
            })
        }
        ResizeMethod::Area => {
            let cols = area_weights(src.width, new_width);
            let rows = area_weights(src.height, new_height);
            FrameRaster::from_fn(new_width, new_height, |x, y| {
                let mut acc = [0f64; 3];
                for &(row, wy) in &rows[y] {
                    for &(col, wx) in &cols[x] {
                        let px = src.pixel(col, row);
                        for c in 0..3 {
                            acc[c] += px[c] as f64 * wx * wy;
                        }
                    }
                }
                acc.map(quantize)
            })
        }
    }
}

/// Resamples a temporal image; the image itself is left untouched.
pub fn resize(
    image: &TemporalImage,
    new_height: usize,
    new_width: usize,
    method: ResizeMethod,
) -> Result<FrameRaster, ComposeError> {
    resize_raster(&image.raster, new_width, new_height, method)
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let centre = (dst as f64 + 0.5) * src_len as f64 / dst_len as f64;
    (centre.floor() as usize).min(src_len - 1)
}

fn linear_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Per destination pixel, the source pixels it covers and their normalized
/// coverage weights.
fn area_weights(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let lo = d as f64 * scale;
            let hi = lo + scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src_len);
            let mut taps: Vec<(usize, f64)> = (first..last)
                .map(|s| {
                    let cover = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (s, cover)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}
