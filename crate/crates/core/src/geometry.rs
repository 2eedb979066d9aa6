//! Temporal-image geometry and the constraint calculus used to pick it.
//!
//! A temporal image of `height x width` pixels stores `landmarks` samples per
//! frame. Each frame occupies `rows_per_frame = landmarks / width` rows, so an
//! image holds `window = height / rows_per_frame` frames. Frames inside a
//! window are `skip` frames apart, and one window covers
//! `span = 1 + (window - 1) * skip` frames of footage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Landmark count of a dense face mesh.
pub const DEFAULT_LANDMARKS: usize = 468;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("width {width} does not divide the landmark count {landmarks}")]
    NonDivisorWidth { width: usize, landmarks: usize },
    #[error("height {height} is not a multiple of {rows_per_frame} rows per frame")]
    InconsistentHeight {
        height: usize,
        rows_per_frame: usize,
    },
    #[error("window of {window} frame(s) is degenerate; at least 2 are required")]
    DegenerateWindow { window: usize },
    #[error("window of {window} frames does not fit in a span of {span} frames")]
    WindowLargerThanSpan { span: usize, window: usize },
    #[error("{name} must be positive")]
    NonPositive { name: &'static str },
    #[error("inconsistent serialized geometry: {0}")]
    Inconsistent(String),
}

/// Validated geometry of a temporal image.
///
/// Serialized as `{d, h, w, k, s, i, x}`; deserialization re-derives every
/// dependent field and rejects tuples that disagree with the calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct TemporalImageSpec {
    landmarks: usize,
    height: usize,
    width: usize,
    rows_per_frame: usize,
    window: usize,
    skip: usize,
    span: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    d: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    i: usize,
    x: usize,
}

impl TryFrom<RawSpec> for TemporalImageSpec {
    type Error = GeometryError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let spec = derive_spec(raw.h, raw.w, raw.i, raw.d)?;
        if (spec.rows_per_frame, spec.window, spec.span) != (raw.k, raw.s, raw.x) {
            return Err(GeometryError::Inconsistent(format!(
                "expected k={}, s={}, x={}, found k={}, s={}, x={}",
                spec.rows_per_frame, spec.window, spec.span, raw.k, raw.s, raw.x
            )));
        }
        Ok(spec)
    }
}

impl From<TemporalImageSpec> for RawSpec {
    fn from(spec: TemporalImageSpec) -> Self {
        RawSpec {
            d: spec.landmarks,
            h: spec.height,
            w: spec.width,
            k: spec.rows_per_frame,
            s: spec.window,
            i: spec.skip,
            x: spec.span,
        }
    }
}

impl TemporalImageSpec {
    pub fn landmarks(&self) -> usize {
        self.landmarks
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Rows of the image occupied by one frame (`k`).
    pub fn rows_per_frame(&self) -> usize {
        self.rows_per_frame
    }

    /// Frames encoded per image (`S`).
    pub fn window(&self) -> usize {
        self.window
    }

    /// Stride between sampled frames (`I`).
    pub fn skip(&self) -> usize {
        self.skip
    }

    /// Frames of footage covered by one window (`X`).
    pub fn span(&self) -> usize {
        self.span
    }

    /// Seconds of footage covered by one window.
    pub fn span_seconds(&self, fps: f64) -> f64 {
        self.span as f64 / fps
    }

    /// Whether `|H - W|` stays within one frame block.
    pub fn is_near_square(&self) -> bool {
        self.height.abs_diff(self.width) <= self.rows_per_frame
    }
}

impl Default for TemporalImageSpec {
    fn default() -> Self {
        derive_spec(78, 78, 7, DEFAULT_LANDMARKS).expect("default geometry is valid")
    }
}

/// Derives the full geometry from image dimensions, skip interval and
/// landmark count.
pub fn derive_spec(
    height: usize,
    width: usize,
    skip: usize,
    landmarks: usize,
) -> Result<TemporalImageSpec, GeometryError> {
    for (name, value) in [
        ("height", height),
        ("width", width),
        ("skip", skip),
        ("landmark count", landmarks),
    ] {
        if value == 0 {
            return Err(GeometryError::NonPositive { name });
        }
    }
    if !landmarks.is_multiple_of(width) {
        return Err(GeometryError::NonDivisorWidth { width, landmarks });
    }
    let rows_per_frame = landmarks / width;
    if !height.is_multiple_of(rows_per_frame) {
        return Err(GeometryError::InconsistentHeight {
            height,
            rows_per_frame,
        });
    }
    let window = height / rows_per_frame;
    if window < 2 {
        return Err(GeometryError::DegenerateWindow { window });
    }
    Ok(TemporalImageSpec {
        landmarks,
        height,
        width,
        rows_per_frame,
        window,
        skip,
        span: 1 + (window - 1) * skip,
    })
}

/// Smallest skip interval whose window of `window` frames reaches `span`
/// frames: `ceil((span - 1) / (window - 1))`.
pub fn required_skip(span: usize, window: usize) -> Result<usize, GeometryError> {
    if window < 2 {
        return Err(GeometryError::DegenerateWindow { window });
    }
    if span < window {
        return Err(GeometryError::WindowLargerThanSpan { span, window });
    }
    Ok((span - 1).div_ceil(window - 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlinkModelError {
    #[error("blink rate must be positive and finite")]
    Rate,
    #[error("blink rate range must satisfy 0 < low <= high")]
    RateRange,
    #[error("blink duration range must satisfy 0 < low <= high")]
    Duration,
    #[error("fps must be positive and finite")]
    Fps,
}

/// Blink physiology used to bound the skip interval.
///
/// `blink_rate` is the typical rate (blinks/min); `blink_rate_range` spans the
/// slowest and fastest rates that windows should still capture a blink for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkModel {
    pub blink_rate: f64,
    pub blink_rate_range: (f64, f64),
    pub blink_duration_range: (f64, f64),
    pub fps: f64,
}

impl Default for BlinkModel {
    fn default() -> Self {
        Self {
            blink_rate: 17.0,
            blink_rate_range: (4.5, 26.0),
            blink_duration_range: (0.1, 0.4),
            fps: 30.0,
        }
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl BlinkModel {
    pub fn validate(&self) -> Result<(), BlinkModelError> {
        if !positive(self.blink_rate) {
            return Err(BlinkModelError::Rate);
        }
        let (lo, hi) = self.blink_rate_range;
        if !(positive(lo) && positive(hi) && lo <= hi) {
            return Err(BlinkModelError::RateRange);
        }
        let (lo, hi) = self.blink_duration_range;
        if !(positive(lo) && positive(hi) && lo <= hi) {
            return Err(BlinkModelError::Duration);
        }
        if !positive(self.fps) {
            return Err(BlinkModelError::Fps);
        }
        Ok(())
    }

    pub fn with_rate(self, blink_rate: f64) -> Self {
        Self { blink_rate, ..self }
    }

    /// Frames expected to contain one blink at `rate` blinks/min, rounded up.
    pub fn frames_per_blink_at(&self, rate: f64) -> usize {
        // 1e-9 absorbs representation error when fps * 60 / rate is integral.
        ((self.fps * 60.0 / rate) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn frames_per_blink(&self) -> usize {
        self.frames_per_blink_at(self.blink_rate)
    }
}

/// Skip interval a window of `window` frames needs to span one expected blink.
pub fn blink_skip_bound(model: &BlinkModel, window: usize) -> Result<usize, GeometryError> {
    if window < 2 {
        return Err(GeometryError::DegenerateWindow { window });
    }
    // Spans shorter than the window are already covered at unit skip.
    let span = model.frames_per_blink().max(window);
    required_skip(span, window)
}

/// Largest skip that cannot jump over a whole blink of maximal duration.
pub fn blink_duration_skip_cap(model: &BlinkModel) -> usize {
    (model.fps * model.blink_duration_range.1 + 1e-9).floor() as usize
}

/// Outcome of checking a skip interval against blink physiology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlinkVerdict {
    pub skip: usize,
    /// Smallest skip that still spans a blink at the fastest rate.
    pub lower: usize,
    /// Smaller of the slowest-rate bound and the blink-duration cap.
    pub upper: usize,
    pub ok: bool,
}

pub fn check_blink_constraint(
    skip: usize,
    model: &BlinkModel,
    window: usize,
) -> Result<BlinkVerdict, GeometryError> {
    let (slow, fast) = model.blink_rate_range;
    let lower = blink_skip_bound(&model.with_rate(fast), window)?;
    let rate_upper = blink_skip_bound(&model.with_rate(slow), window)?;
    let upper = rate_upper.min(blink_duration_skip_cap(model));
    Ok(BlinkVerdict {
        skip,
        lower,
        upper,
        ok: lower <= skip && skip <= upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_published_configurations() {
        let small = derive_spec(78, 78, 7, 468).unwrap();
        assert_eq!(
            (small.rows_per_frame(), small.window(), small.span()),
            (6, 13, 85)
        );
        let large = derive_spec(116, 117, 7, 468).unwrap();
        assert_eq!(
            (large.rows_per_frame(), large.window(), large.span()),
            (4, 29, 197)
        );
        assert!(small.is_near_square());
        assert!(large.is_near_square());
    }

    #[test]
    fn minimal_window_at_full_width() {
        let spec = derive_spec(2, 468, 1, 468).unwrap();
        assert_eq!(
            (spec.rows_per_frame(), spec.window(), spec.span()),
            (1, 2, 2)
        );
        // One landmark row per frame: a 936-row image holds 936 frames.
        let tall = derive_spec(936, 468, 1, 468).unwrap();
        assert_eq!(
            (tall.rows_per_frame(), tall.window(), tall.span()),
            (1, 936, 936)
        );
        assert!(!tall.is_near_square());
    }

    #[test]
    fn rejects_bad_geometry() {
        assert_eq!(
            derive_spec(78, 77, 7, 468),
            Err(GeometryError::NonDivisorWidth {
                width: 77,
                landmarks: 468
            })
        );
        assert_eq!(
            derive_spec(79, 78, 7, 468),
            Err(GeometryError::InconsistentHeight {
                height: 79,
                rows_per_frame: 6
            })
        );
        assert_eq!(
            derive_spec(6, 78, 7, 468),
            Err(GeometryError::DegenerateWindow { window: 1 })
        );
        assert!(matches!(
            derive_spec(78, 78, 0, 468),
            Err(GeometryError::NonPositive { .. })
        ));
    }

    #[test]
    fn skip_formula() {
        assert_eq!(required_skip(197, 29), Ok(7));
        assert_eq!(required_skip(421, 29), Ok(15));
        assert_eq!(required_skip(29, 29), Ok(1));
        assert_eq!(
            required_skip(10, 1),
            Err(GeometryError::DegenerateWindow { window: 1 })
        );
        assert_eq!(
            required_skip(28, 29),
            Err(GeometryError::WindowLargerThanSpan {
                span: 28,
                window: 29
            })
        );
    }

    #[test]
    fn blink_rate_table() {
        let model = BlinkModel::default();
        let got: Vec<usize> = [4.5, 17.0, 26.0]
            .iter()
            .map(|&r| blink_skip_bound(&model.with_rate(r), 29).unwrap())
            .collect();
        assert_eq!(got, vec![15, 4, 3]);
        assert_eq!(model.frames_per_blink_at(4.5), 400);
        assert_eq!(model.frames_per_blink_at(17.0), 106);
        assert_eq!(model.frames_per_blink_at(26.0), 70);
    }

    #[test]
    fn duration_cap() {
        let mut model = BlinkModel::default();
        assert_eq!(blink_duration_skip_cap(&model), 12);
        model.blink_duration_range = (0.1, 0.1);
        assert_eq!(blink_duration_skip_cap(&model), 3);
        model.blink_duration_range = (0.1, 0.4);
        model.fps = 60.0;
        assert_eq!(blink_duration_skip_cap(&model), 24);
    }

    #[test]
    fn blink_constraint_range_at_30_fps() {
        let model = BlinkModel::default();
        let verdict = check_blink_constraint(7, &model, 29).unwrap();
        assert!(verdict.ok);
        assert_eq!((verdict.lower, verdict.upper), (3, 12));
        assert!(!check_blink_constraint(13, &model, 29).unwrap().ok);
        assert!(!check_blink_constraint(2, &model, 29).unwrap().ok);
        let passing: Vec<usize> = (1..=20)
            .filter(|&i| check_blink_constraint(i, &model, 29).unwrap().ok)
            .collect();
        assert_eq!(passing, (3..=12).collect::<Vec<_>>());
    }

    #[test]
    fn blink_model_validation() {
        assert!(BlinkModel::default().validate().is_ok());
        let bad = BlinkModel {
            blink_duration_range: (0.4, 0.1),
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(BlinkModelError::Duration));
        let bad = BlinkModel {
            fps: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(BlinkModelError::Fps));
    }

    #[test]
    fn json_shape() {
        let spec = derive_spec(116, 117, 7, 468).unwrap();
        let json = serde_json::to_value(spec).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"d": 468, "h": 116, "w": 117, "k": 4, "s": 29, "i": 7, "x": 197})
        );
        let back: TemporalImageSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
        let tampered =
            serde_json::json!({"d": 468, "h": 116, "w": 117, "k": 4, "s": 29, "i": 7, "x": 196});
        assert!(serde_json::from_value::<TemporalImageSpec>(tampered).is_err());
    }

    fn brute_force_skip(span: usize, window: usize) -> usize {
        (1..=1000).find(|&i| 1 + (window - 1) * i >= span).unwrap()
    }

    #[test]
    fn skip_matches_brute_force() {
        for window in [2, 13, 29] {
            for span in window..=500 {
                assert_eq!(
                    required_skip(span, window).unwrap(),
                    brute_force_skip(span, window),
                    "span={span} window={window}"
                );
            }
        }
    }

    #[test]
    fn round_trip_over_divisors() {
        for landmarks in 1..=1000usize {
            for width in (1..=landmarks).filter(|w| landmarks % w == 0) {
                let rows = landmarks / width;
                for window in [2usize, 3, 7] {
                    let height = rows * window;
                    let spec = derive_spec(height, width, 3, landmarks).unwrap();
                    assert_eq!(spec.rows_per_frame() * spec.window(), height);
                    assert_eq!(spec.height() * spec.width() / landmarks, spec.window());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn skip_is_monotone(span in 2usize..600, window in 2usize..60, extra in 0usize..50) {
            prop_assume!(span >= window);
            let base = required_skip(span, window).unwrap();
            prop_assert!(required_skip(span + extra, window).unwrap() >= base);
            if window + extra <= span {
                prop_assert!(required_skip(span, window + extra).unwrap() <= base);
            }
        }

        #[test]
        fn span_reaches_target(span in 2usize..2000, window in 2usize..100) {
            prop_assume!(span >= window);
            let skip = required_skip(span, window).unwrap();
            prop_assert!(1 + (window - 1) * skip >= span);
            prop_assert!(skip == 1 || 1 + (window - 1) * (skip - 1) < span);
        }
    }
}
