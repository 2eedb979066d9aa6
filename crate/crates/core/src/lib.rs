//! Temporal-image compilation for landmark-annotated video corpora.
//!
//! Each temporal image stacks the pixel colours found at a face mesh's
//! landmarks across a strided window of frames, one block of rows per frame.
//! The crate covers the geometry calculus ([`geometry`]), landmark sidecar
//! parsing and window enumeration ([`landmarks`]), image assembly
//! ([`composer`]), corpus generation with manifests and video-level splits
//! ([`pipeline`]), a synthetic corpus generator ([`synth`]) and the
//! command-line front end ([`cli`]).

pub mod cli;
pub mod composer;
pub mod geometry;
pub mod landmarks;
pub mod pipeline;
pub mod synth;

pub use composer::{
    compose, resize, sample_landmarks, FrameRaster, Provenance, ResizeMethod, TemporalImage,
};
pub use geometry::{
    blink_duration_skip_cap, blink_skip_bound, check_blink_constraint, derive_spec, required_skip,
    BlinkModel, BlinkVerdict, GeometryError, TemporalImageSpec,
};
pub use landmarks::{
    count_windows, enumerate_windows, parse_stream, Gating, LandmarkFrame, LandmarkStream,
    WindowPlan,
};
pub use pipeline::{
    apply_split, corpus_stats, generate_corpus, split_videos, CorpusManifest, CorpusStats,
    GenerateOptions, Label, ManifestRecord, PipelineError, SkipReason, Split, SplitPlan,
    VideoEntry,
};
pub use synth::{synth_corpus, synth_video, SynthConfig};
