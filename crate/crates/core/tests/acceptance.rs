//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1` to see them.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use common::{index_coded_entry, snapshot};
use temporal_forge::cli::{run, Cli};
use temporal_forge::composer::FrameRaster;
use temporal_forge::geometry::{blink_skip_bound, derive_spec, required_skip, BlinkModel};
use temporal_forge::landmarks::{
    count_windows, enumerate_windows, Gating, LandmarkFrame, LandmarkStream,
};
use temporal_forge::pipeline::{
    apply_split, generate_corpus, split_videos, CorpusManifest, GenerateOptions, Label, SkipReason,
    Split, DEFAULT_RATIOS, MANIFEST_FILE,
};
use temporal_forge::synth::{synth_corpus, SynthConfig, CATALOG_FILE};

fn verdict(id: &str, name: &str, ok: bool, detail: String) {
    println!("{} {id} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} {name}: {detail}");
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

#[test]
fn ac1_geometry_calculus() {
    let t = Instant::now();
    let small = derive_spec(78, 78, 7, 468).unwrap();
    let large = derive_spec(116, 117, 7, 468).unwrap();
    let got = [
        (small.rows_per_frame(), small.window(), small.span()),
        (large.rows_per_frame(), large.window(), large.span()),
    ];
    let elapsed = t.elapsed();
    verdict(
        "AC1",
        "geometry calculus",
        got == [(6, 13, 85), (4, 29, 197)] && within(elapsed, Duration::from_secs(1)),
        format!("(k,S,X) = {got:?} in {elapsed:?}"),
    );
}

#[test]
fn ac2_skip_formula() {
    let t = Instant::now();
    let reference = (
        required_skip(197, 29).unwrap(),
        required_skip(421, 29).unwrap(),
    );
    let mut mismatches = 0;
    let mut checked = 0;
    for window in [2usize, 13, 29] {
        for span in window..=500 {
            let brute = (1..=1000usize)
                .find(|&i| 1 + (window - 1) * i >= span)
                .unwrap();
            checked += 1;
            if required_skip(span, window).unwrap() != brute {
                mismatches += 1;
            }
        }
    }
    let elapsed = t.elapsed();
    verdict(
        "AC2",
        "skip formula",
        reference == (7, 15) && mismatches == 0 && within(elapsed, Duration::from_secs(1)),
        format!("(197,29)->{} (421,29)->{}; {mismatches}/{checked} brute-force mismatches in {elapsed:?}", reference.0, reference.1),
    );
}

#[test]
fn ac3_blink_table() {
    let model = BlinkModel::default();
    let got: Vec<usize> = [4.5, 17.0, 26.0]
        .iter()
        .map(|&rate| blink_skip_bound(&model.with_rate(rate), 29).unwrap())
        .collect();
    verdict(
        "AC3",
        "blink table",
        got == [15, 4, 3],
        format!("rates 4.5/17/26 -> {got:?}"),
    );
}

fn all_valid(frame_count: usize) -> LandmarkStream {
    LandmarkStream {
        video_id: "oracle".into(),
        fps: 30.0,
        frame_count,
        landmarks: 1,
        frames: (0..frame_count)
            .map(|i| LandmarkFrame {
                frame_index: i,
                face_count: 1,
                points: Some(vec![(0.5, 0.5)]),
            })
            .collect(),
    }
}

#[test]
fn ac4_window_count_oracle() {
    let t = Instant::now();
    let streams: Vec<LandmarkStream> = (0..=600).map(all_valid).collect();
    let mut mismatches = 0;
    let mut checked = 0;
    for window in [2usize, 13, 29] {
        for skip in 1..=15 {
            let spec = derive_spec(window, 1, skip, 1).unwrap();
            for stream in &streams {
                let enumerated = enumerate_windows(stream, &spec, Gating::Window).len();
                checked += 1;
                if count_windows(stream.frame_count, &spec) != enumerated {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = t.elapsed();
    verdict(
        "AC4",
        "window-count oracle",
        mismatches == 0 && within(elapsed, Duration::from_secs(10)),
        format!("{mismatches}/{checked} mismatches in {elapsed:?}"),
    );
}

#[test]
fn ac5_pixel_placement_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let videos = vec![
        index_coded_entry(dir.path(), "idx_a", Label::Real, 300),
        index_coded_entry(dir.path(), "idx_b", Label::Fake, 131),
    ];
    let spec = derive_spec(78, 78, 7, 468).unwrap();
    let out = dir.path().join("out");
    let report = generate_corpus(&videos, &spec, GenerateOptions::default(), &out).unwrap();
    let mut bad_pixels = 0usize;
    let mut pixels = 0usize;
    for record in &report.manifest.records {
        let image = FrameRaster::load_png(&out.join(&record.image_path)).unwrap();
        for row in 0..spec.height() {
            let block = row / spec.rows_per_frame();
            let expected = ((record.start + block * spec.skip()) % 256) as u8;
            for col in 0..spec.width() {
                pixels += 1;
                if image.pixel(col, row) != [expected; 3] {
                    bad_pixels += 1;
                }
            }
        }
    }
    let images = report.manifest.records.len();
    let expected_images = count_windows(300, &spec) + count_windows(131, &spec);
    verdict(
        "AC5",
        "pixel-placement oracle",
        bad_pixels == 0 && images == expected_images && images > 0,
        format!("{images} images, {bad_pixels}/{pixels} pixels off"),
    );
}

#[test]
fn ac6_leakage_freedom() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        videos_per_label: 25,
        frame_count: 92,
        width: 16,
        height: 16,
        ..Default::default()
    };
    let entries = synth_corpus(&cfg, &dir.path().join("corpus")).unwrap();
    let spec = derive_spec(78, 78, 7, 468).unwrap();
    let manifest = generate_corpus(
        &entries,
        &spec,
        GenerateOptions::default(),
        &dir.path().join("out"),
    )
    .unwrap()
    .manifest;
    let videos = manifest.videos();
    assert_eq!(videos.len(), 50);

    let mut failures = Vec::new();
    for seed in 0..100u64 {
        for stratify in [true, false] {
            let plan = split_videos(&videos, DEFAULT_RATIOS, seed, stratify).unwrap();
            let split = apply_split(&manifest, &plan).unwrap();
            let mut owners: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
            for r in &split.records {
                owners.entry(&r.video_id).or_default().insert(r.split);
            }
            if owners.values().any(|s| s.len() != 1) {
                failures.push(format!("seed {seed}: video in two splits"));
            }
            if split.records.len() != manifest.records.len()
                || split.records.iter().any(|r| r.split == Split::Unassigned)
            {
                failures.push(format!("seed {seed}: images not partitioned"));
            }
            // per label floor(25 * 0.1) = 2 each for valid/test, 21 to train
            let expected = if stratify { [42, 4, 4] } else { [40, 5, 5] };
            let got = [
                plan.count(Split::Train),
                plan.count(Split::Valid),
                plan.count(Split::Test),
            ];
            if got != expected {
                failures.push(format!(
                    "seed {seed} stratify {stratify}: sizes {got:?} != {expected:?}"
                ));
            }
        }
    }
    verdict(
        "AC6",
        "leakage-freedom",
        failures.is_empty(),
        format!(
            "200 plans over 50 videos, expected [42, 4, 4] stratified and [40, 5, 5] pooled; {} violations {:?}",
            failures.len(),
            failures.first()
        ),
    );
}

fn cli_generate(catalog: &Path, out: &Path, workers: &str) {
    let cli = Cli::try_parse_from([
        "temporal-forge",
        "generate",
        "--catalog",
        catalog.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
    ])
    .unwrap();
    let code = run(&cli, &mut Vec::new()).unwrap();
    assert_eq!(code, 0);
}

#[test]
fn ac7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        videos_per_label: 4,
        frame_count: 110,
        width: 64,
        height: 64,
        ..Default::default()
    };
    let corpus = dir.path().join("corpus");
    synth_corpus(&cfg, &corpus).unwrap();
    let (serial, parallel) = (dir.path().join("serial"), dir.path().join("parallel"));
    cli_generate(&corpus.join(CATALOG_FILE), &serial, "1");
    cli_generate(&corpus.join(CATALOG_FILE), &parallel, "4");
    let a = snapshot(&serial);
    let b = snapshot(&parallel);
    let manifest = CorpusManifest::load(&serial.join(MANIFEST_FILE)).unwrap();
    verdict(
        "AC7",
        "determinism/idempotence",
        a == b && !manifest.records.is_empty(),
        format!(
            "{} files ({} images) compared between 1 and 4 workers; identical = {}",
            a.len(),
            manifest.records.len(),
            a == b
        ),
    );
}

#[test]
fn ac8_boundary_gating() {
    let dir = tempfile::tempdir().unwrap();
    let videos = vec![
        index_coded_entry(dir.path(), "f84", Label::Real, 84),
        index_coded_entry(dir.path(), "f85", Label::Real, 85),
    ];
    let spec = derive_spec(78, 78, 7, 468).unwrap();
    let report = generate_corpus(
        &videos,
        &spec,
        GenerateOptions::default(),
        &dir.path().join("out"),
    )
    .unwrap();
    let images_of = |id: &str| {
        report
            .manifest
            .records
            .iter()
            .filter(|r| r.video_id == id)
            .count()
    };
    let short_reason = report
        .skipped
        .iter()
        .find(|s| s.video_id == "f84")
        .map(|s| s.reason);
    verdict(
        "AC8",
        "boundary gating",
        images_of("f84") == 0
            && short_reason == Some(SkipReason::TooShort)
            && images_of("f85") == 1,
        format!(
            "84 frames -> {} images ({short_reason:?}); 85 frames -> {} image(s)",
            images_of("f84"),
            images_of("f85")
        ),
    );
}
