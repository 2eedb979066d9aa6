#![allow(dead_code)]

use std::path::Path;

use temporal_forge::pipeline::{Label, VideoEntry};
use temporal_forge::synth::{index_coded_video, write_video};

/// Writes a video whose frame `t` is uniformly `t mod 256` and returns its
/// catalog entry with paths resolved against `root`.
pub fn index_coded_entry(
    root: &Path,
    video_id: &str,
    label: Label,
    frame_count: usize,
) -> VideoEntry {
    let (frames, stream) = index_coded_video(video_id, frame_count, 16, 12, 468);
    let entry = write_video(root, video_id, label, &frames, &stream).unwrap();
    resolve(root, entry)
}

pub fn resolve(root: &Path, mut entry: VideoEntry) -> VideoEntry {
    entry.frames_path = root.join(&entry.frames_path);
    entry.landmarks_path = root.join(&entry.landmarks_path);
    entry
}

/// Relative path -> file bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
