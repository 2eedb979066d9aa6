//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::geometry::{
    check_blink_constraint, derive_spec, BlinkModel, BlinkVerdict, TemporalImageSpec,
    DEFAULT_LANDMARKS,
};
use crate::landmarks::Gating;
use crate::pipeline::{
    apply_split, corpus_stats, generate_corpus, load_catalog, split_videos, CorpusManifest,
    CorpusStats, GenerateOptions, GenerationSummary, PipelineError, Split, SplitPlan,
};
use crate::synth::{synth_corpus, ArtifactMode, SynthConfig, CATALOG_FILE};

pub const WORKERS_ENV: &str = "TEMPORAL_FORGE_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "temporal-forge",
    version,
    about = "Compile landmark-annotated videos into temporal images"
)]
pub struct Cli {
    /// Write machine-readable JSON to stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive and check a temporal-image geometry.
    SpecCheck(SpecCheckArgs),
    /// Generate temporal images and a manifest from a video catalog.
    Generate(GenerateArgs),
    /// Assign videos of a manifest to train/valid/test.
    Split(SplitArgs),
    /// Summarize a manifest.
    Stats(StatsArgs),
    /// Write a synthetic corpus and its catalog.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 78)]
    pub height: usize,
    #[arg(long, default_value_t = 78)]
    pub width: usize,
    /// Frame-skip interval.
    #[arg(long, default_value_t = 7)]
    pub skip: usize,
    /// Landmarks per frame.
    #[arg(long = "landmarks-d", default_value_t = DEFAULT_LANDMARKS)]
    pub landmarks: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BlinkArgs {
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Typical blink rate, blinks per minute.
    #[arg(long, default_value_t = 17.0)]
    pub blink_rate: f64,
    /// Slowest and fastest blink rates, `low,high`.
    #[arg(long, value_parser = parse_pair, default_value = "4.5,26")]
    pub blink_rate_range: (f64, f64),
    /// Shortest and longest blink duration in seconds, `low,high`.
    #[arg(long, value_parser = parse_pair, default_value = "0.1,0.4")]
    pub blink_duration: (f64, f64),
    /// Treat a failed blink check as an error.
    #[arg(long)]
    pub strict_blink: bool,
}

impl BlinkArgs {
    fn model(&self) -> BlinkModel {
        BlinkModel {
            blink_rate: self.blink_rate,
            blink_rate_range: self.blink_rate_range,
            blink_duration_range: self.blink_duration,
            fps: self.fps,
        }
    }
}

#[derive(Debug, Args)]
pub struct SpecCheckArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub blink: BlinkArgs,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub blink: BlinkArgs,
    #[arg(long, default_value = "video")]
    pub gating: Gating,
    /// Worker threads (0 = all cores).
    #[arg(long, env = WORKERS_ENV, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.1,0.1")]
    pub ratios: [f64; 3],
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apply ratios to the whole corpus instead of per label.
    #[arg(long)]
    pub no_stratify: bool,
    /// Where to write the split plan (default: split_plan.json next to the manifest).
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    /// Where to write the split manifest (default: overwrite --manifest).
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub videos_per_label: usize,
    #[arg(long, default_value_t = 150)]
    pub frame_count: usize,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 96)]
    pub frame_width: usize,
    #[arg(long, default_value_t = 96)]
    pub frame_height: usize,
    #[arg(long = "landmarks-d", default_value_t = DEFAULT_LANDMARKS)]
    pub landmarks: usize,
    #[arg(long, default_value_t = 17.0)]
    pub blink_rate: f64,
    /// Seconds per blink.
    #[arg(long, default_value_t = 0.2)]
    pub blink_duration: f64,
    #[arg(long, default_value = "flicker_no_blink")]
    pub artifact_mode: ArtifactMode,
    #[arg(long, default_value_t = 0.04)]
    pub motion_amplitude: f64,
    #[arg(long, default_value_t = 48)]
    pub flicker_amplitude: u8,
}

impl SynthArgs {
    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            videos_per_label: self.videos_per_label,
            frame_count: self.frame_count,
            fps: self.fps,
            width: self.frame_width,
            height: self.frame_height,
            landmarks: self.landmarks,
            blink_rate: self.blink_rate,
            blink_duration: self.blink_duration,
            artifact_mode: self.artifact_mode,
            landmark_motion_amplitude: self.motion_amplitude,
            flicker_amplitude: self.flicker_amplitude,
        }
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    match parse_floats(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err("expected two comma-separated numbers".into()),
    }
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    match parse_floats(s)?.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected three comma-separated ratios".into()),
    }
}

/// Truncates to whole milliseconds, matching how footage durations are quoted
/// (197 frames at 30 fps is 6.566 s).
pub fn truncate_seconds(seconds: f64) -> f64 {
    (seconds * 1000.0 + 1e-9).floor() / 1000.0
}

#[derive(Debug, Serialize)]
pub struct SpecReport {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<TemporalImageSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    pub fps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near_square: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blink: Option<BlinkVerdict>,
    pub warnings: Vec<String>,
    pub errors: Vec<String>,
}

pub fn spec_report(spec: &SpecArgs, blink: &BlinkArgs) -> SpecReport {
    let mut report = SpecReport {
        ok: false,
        spec: None,
        seconds: None,
        fps: blink.fps,
        near_square: None,
        blink: None,
        warnings: Vec::new(),
        errors: Vec::new(),
    };
    let derived = match derive_spec(spec.height, spec.width, spec.skip, spec.landmarks) {
        Ok(d) => d,
        Err(e) => {
            report.errors.push(e.to_string());
            return report;
        }
    };
    report.spec = Some(derived);
    report.near_square = Some(derived.is_near_square());
    if !derived.is_near_square() {
        report.warnings.push(format!(
            "|H - W| = {} exceeds one frame block ({} rows)",
            derived.height().abs_diff(derived.width()),
            derived.rows_per_frame()
        ));
    }
    let model = blink.model();
    if let Err(e) = model.validate() {
        report.errors.push(e.to_string());
        return report;
    }
    report.seconds = Some(truncate_seconds(derived.span_seconds(blink.fps)));
    match check_blink_constraint(derived.skip(), &model, derived.window()) {
        Ok(verdict) => {
            if !verdict.ok {
                let msg = format!(
                    "skip {} outside blink range [{}, {}]",
                    verdict.skip, verdict.lower, verdict.upper
                );
                if blink.strict_blink {
                    report.errors.push(msg);
                } else {
                    report.warnings.push(msg);
                }
            }
            report.blink = Some(verdict);
        }
        Err(e) => report.errors.push(e.to_string()),
    }
    report.ok = report.errors.is_empty();
    report
}

fn print_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Runs one command, writing its report to `out`. Returns the exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<u8> {
    match &cli.command {
        Command::SpecCheck(args) => {
            let report = spec_report(&args.spec, &args.blink);
            if cli.json {
                print_json(out, &report)?;
            } else {
                write_spec_report(out, &report)?;
            }
            Ok(if report.ok { 0 } else { 1 })
        }
        Command::Generate(args) => generate(cli.json, args, out),
        Command::Split(args) => split(cli.json, args, out),
        Command::Stats(args) => {
            let manifest = CorpusManifest::load(&args.manifest)?;
            let stats = corpus_stats(&manifest);
            if cli.json {
                print_json(out, &stats)?;
            } else {
                write_stats(out, &stats)?;
            }
            Ok(0)
        }
        Command::Synth(args) => {
            let config = args.config();
            let entries = synth_corpus(&config, &args.out)?;
            let catalog = args.out.join(CATALOG_FILE);
            if cli.json {
                print_json(
                    out,
                    &serde_json::json!({
                        "catalog": catalog,
                        "videos": entries.len(),
                        "config": config,
                    }),
                )?;
            } else {
                writeln!(
                    out,
                    "wrote {} videos, catalog {}",
                    entries.len(),
                    catalog.display()
                )?;
            }
            Ok(0)
        }
    }
}

fn write_spec_report(out: &mut dyn Write, report: &SpecReport) -> Result<()> {
    if let Some(spec) = &report.spec {
        writeln!(
            out,
            "geometry  H={} W={} D={} I={}",
            spec.height(),
            spec.width(),
            spec.landmarks(),
            spec.skip()
        )?;
        writeln!(
            out,
            "derived   k={} S={} X={}",
            spec.rows_per_frame(),
            spec.window(),
            spec.span()
        )?;
    }
    if let Some(seconds) = report.seconds {
        writeln!(
            out,
            "footage   {seconds:.3} s per window at {} fps",
            report.fps
        )?;
    }
    if let Some(v) = &report.blink {
        let status = if v.ok { "OK" } else { "WARNING" };
        writeln!(
            out,
            "blink     {status} (I={} in [{}, {}])",
            v.skip, v.lower, v.upper
        )?;
    }
    for w in &report.warnings {
        writeln!(out, "warning: {w}")?;
    }
    for e in &report.errors {
        writeln!(out, "error: {e}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GenerateReport<'a> {
    manifest: PathBuf,
    summary: &'a GenerationSummary,
    stats: &'a CorpusStats,
}

fn generate(json: bool, args: &GenerateArgs, out: &mut dyn Write) -> Result<u8> {
    let report = spec_report(&args.spec, &args.blink);
    let Some(spec) = report.spec.filter(|_| report.ok) else {
        bail!("invalid geometry: {}", report.errors.join("; "));
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let videos = load_catalog(&args.catalog)
        .with_context(|| format!("reading catalog {}", args.catalog.display()))?;
    let options = GenerateOptions {
        gating: args.gating,
        workers: args.workers,
    };
    let generated = generate_corpus(&videos, &spec, options, &args.out)?;
    let stats = corpus_stats(&generated.manifest);
    if json {
        print_json(
            out,
            &GenerateReport {
                manifest: args.out.join(crate::pipeline::MANIFEST_FILE),
                summary: &generated.summary,
                stats: &stats,
            },
        )?;
    } else {
        let s = &generated.summary;
        writeln!(out, "videos           {}", s.videos)?;
        writeln!(out, "usable videos    {}", s.usable_videos)?;
        for (reason, n) in &s.skipped_by_reason {
            writeln!(out, "skipped {reason:<9}{n}")?;
        }
        write_stats(out, &stats)?;
    }
    Ok(0)
}

fn split(json: bool, args: &SplitArgs, out: &mut dyn Write) -> Result<u8> {
    let manifest = CorpusManifest::load(&args.manifest)?;
    let videos = manifest.videos();
    if videos.is_empty() {
        return Err(PipelineError::EmptyCorpus.into());
    }
    let plan = split_videos(&videos, args.ratios, args.seed, !args.no_stratify)?;
    let applied = apply_split(&manifest, &plan)?;
    let plan_out = args
        .plan_out
        .clone()
        .unwrap_or_else(|| sibling(&args.manifest, "split_plan.json"));
    std::fs::write(&plan_out, serde_json::to_string_pretty(&plan)? + "\n")
        .with_context(|| format!("writing {}", plan_out.display()))?;
    applied.save(args.manifest_out.as_ref().unwrap_or(&args.manifest))?;
    if json {
        print_json(out, &plan)?;
    } else {
        write_plan(out, &plan)?;
    }
    Ok(0)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn write_plan(out: &mut dyn Write, plan: &SplitPlan) -> Result<()> {
    writeln!(
        out,
        "seed {} ratios {:?} stratify {}",
        plan.seed, plan.ratios, plan.stratify
    )?;
    for split in [Split::Train, Split::Valid, Split::Test] {
        writeln!(out, "{split:<6} {} videos", plan.count(split))?;
    }
    for w in &plan.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

fn write_stats(out: &mut dyn Write, stats: &CorpusStats) -> Result<()> {
    writeln!(out, "manifest videos  {}", stats.videos)?;
    writeln!(out, "temporal images  {}", stats.images)?;
    writeln!(out, "from fake videos {}", stats.fake_images)?;
    writeln!(out, "from real videos {}", stats.real_images)?;
    if !stats.splits.is_empty() {
        writeln!(out, "{:<11}{:>8}{:>8}", "split", "videos", "images")?;
        for (split, counts) in &stats.splits {
            writeln!(
                out,
                "{:<11}{:>8}{:>8}",
                split.to_string(),
                counts.videos,
                counts.images
            )?;
        }
    }
    Ok(())
}
