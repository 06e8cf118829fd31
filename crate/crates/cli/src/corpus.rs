//! On-disk corpus layout shared by `synth`, `train` and `infer`:
//! `annotations/<id>.json`, `features/<id>.frames.hcft`,
//! `features/<id>.persons.hcft`, plus `train.txt`, `val.txt` and `test.txt`
//! listing one video id per line.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use hcap_core::annotation::{self, read_features, FeatureArray, VideoAnnotation};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Val,
    Test,
    /// Every annotated video, whatever its subset.
    All,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
            Subset::All => "all",
        }
    }
}

pub struct CorpusVideo {
    pub annotation: VideoAnnotation,
    pub frames: FeatureArray,
    pub persons: FeatureArray,
}

/// Stems of the `*.json` files in `dir`, sorted.
pub fn json_stems(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(CliError::io(dir))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Reads a list of ids, one per line; blank lines are skipped.
pub fn read_id_list(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn annotations_dir(corpus: &Path) -> PathBuf {
    corpus.join("annotations")
}

pub fn subset_ids(corpus: &Path, subset: Subset) -> Result<Vec<String>, CliError> {
    let ids = match subset {
        Subset::All => json_stems(&annotations_dir(corpus))?,
        s => read_id_list(&corpus.join(format!("{}.txt", s.name())))?,
    };
    if ids.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: subset `{}` lists no videos",
            corpus.display(),
            subset.name()
        )));
    }
    Ok(ids)
}

pub fn load_annotation(path: &Path) -> Result<VideoAnnotation, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    annotation::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_video(corpus: &Path, id: &str) -> Result<CorpusVideo, CliError> {
    let annotation = load_annotation(&annotations_dir(corpus).join(format!("{id}.json")))?;
    let features = corpus.join("features");
    let read = |suffix: &str| {
        let path = features.join(format!("{id}.{suffix}.hcft"));
        read_features(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    };
    Ok(CorpusVideo {
        annotation,
        frames: read("frames")?,
        persons: read("persons")?,
    })
}

/// Frame and person feature widths, taken from the first video and required
/// of all others. The person width excludes the two extent columns.
pub fn feature_dims(videos: &[CorpusVideo]) -> Result<(usize, usize), CliError> {
    let width = |a: &FeatureArray| a.shape.get(1).copied().unwrap_or(0);
    let first = videos
        .first()
        .ok_or_else(|| CliError::Usage("no videos to read feature widths from".into()))?;
    let dims = (
        width(&first.frames),
        width(&first.persons).saturating_sub(2),
    );
    for v in videos {
        let d = (width(&v.frames), width(&v.persons).saturating_sub(2));
        if d != dims {
            return Err(CliError::Data(format!(
                "{}: feature widths {d:?} differ from {dims:?}",
                v.annotation.video_id
            )));
        }
    }
    Ok(dims)
}
