//! Per-video annotation documents, their validator and corpus statistics,
//! plus the binary feature-file interface and track cropping plans.
//!
//! An annotation is one JSON document per video. Serialization is canonical
//! (fixed field order, two-space indentation, shortest round-trip float
//! formatting, trailing newline), so `serialize(parse(text)) == text` for any
//! canonical file.

mod crop;
mod features;
mod palette;
mod stats;
mod validate;

pub use crop::{crop_tracks, FrameSource, TrackClip};
pub use features::{
    read_features, read_features_from, write_features, write_features_to, FeatureArray,
    FeatureData, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use palette::{PaletteColor, PALETTE};
pub use stats::{stats, CorpusStats, ReferenceScale, REFERENCE_SCALE, VERB_LEXICON};
pub use validate::{validate, Diagnostic, Severity, CAPTION_MAX_TOKENS, CAPTION_WARN_RANGE};

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, Segment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneLabel {
    Normal,
    Abuse,
    Arrest,
    Arson,
    Assault,
    RoadAccident,
    Burglary,
    Explosion,
    Fighting,
    Robbery,
    Shooting,
    Stealing,
    Shoplifting,
    Vandalism,
}

impl SceneLabel {
    pub const ANOMALIES: [SceneLabel; 13] = [
        Self::Abuse,
        Self::Arrest,
        Self::Arson,
        Self::Assault,
        Self::RoadAccident,
        Self::Burglary,
        Self::Explosion,
        Self::Fighting,
        Self::Robbery,
        Self::Shooting,
        Self::Stealing,
        Self::Shoplifting,
        Self::Vandalism,
    ];

    pub fn is_anomaly(self) -> bool {
        self != Self::Normal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Abuse => "abuse",
            Self::Arrest => "arrest",
            Self::Arson => "arson",
            Self::Assault => "assault",
            Self::RoadAccident => "road_accident",
            Self::Burglary => "burglary",
            Self::Explosion => "explosion",
            Self::Fighting => "fighting",
            Self::Robbery => "robbery",
            Self::Shooting => "shooting",
            Self::Stealing => "stealing",
            Self::Shoplifting => "shoplifting",
            Self::Vandalism => "vandalism",
        }
    }
}

impl fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optional per-frame box of a track.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackBox {
    pub frame: u64,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonRecord {
    pub person_index: usize,
    pub color_index: usize,
    pub first_frame: u64,
    /// Box in the first frame the person is visible.
    pub bbox: BBox,
    pub appear_s: f64,
    pub disappear_s: f64,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub track: Vec<TrackBox>,
}

impl PersonRecord {
    /// Temporal extent normalized by the video duration.
    pub fn segment(&self, duration_s: f64) -> Result<Segment, crate::geometry::GeometryError> {
        Segment::new(self.appear_s / duration_s, self.disappear_s / duration_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub fps: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub duration_s: f64,
    pub scene_label: SceneLabel,
    pub persons: Vec<PersonRecord>,
}

impl VideoAnnotation {
    /// Number of frames covered by the duration.
    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.fps).ceil() as u64
    }
}

/// One predicted person for the evaluation tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_index: Option<usize>,
    pub segment: Segment,
    pub confidence: f64,
    pub caption: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub video_id: String,
    pub duration_s: f64,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("feature file: {0}")]
    Format(String),
    #[error("{0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .filter(|d| d.severity == Severity::Error)
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, AnnotationError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        AnnotationError::Syntax {
            path: if path == "." { "document".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| AnnotationError::Syntax {
        path: "document".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn to_canonical<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("annotation types always serialize");
    text.push('\n');
    text
}

/// Parses and validates one annotation document. Warnings do not fail the
/// parse; use [`validate`] to see them.
pub fn parse(text: &str) -> Result<VideoAnnotation, AnnotationError> {
    let annotation: VideoAnnotation = from_json(text)?;
    let errors: Vec<Diagnostic> = validate(&annotation)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if errors.is_empty() {
        Ok(annotation)
    } else {
        Err(AnnotationError::Invalid(errors))
    }
}

pub fn serialize(annotation: &VideoAnnotation) -> String {
    to_canonical(annotation)
}

pub fn parse_predictions(text: &str) -> Result<PredictionFile, AnnotationError> {
    let file: PredictionFile = from_json(text)?;
    for (i, p) in file.predictions.iter().enumerate() {
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(AnnotationError::Invalid(vec![Diagnostic::error(
                format!("predictions[{i}].confidence"),
                format!("{} is outside [0, 1]", p.confidence),
            )]));
        }
    }
    Ok(file)
}

pub fn serialize_predictions(file: &PredictionFile) -> String {
    to_canonical(file)
}

fn read_text(path: &Path) -> Result<String, AnnotationError> {
    std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<VideoAnnotation, AnnotationError> {
    parse(&read_text(path)?)
}

pub fn load_predictions(path: &Path) -> Result<PredictionFile, AnnotationError> {
    parse_predictions(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
  "video_id": "v0001",
  "fps": 30.0,
  "frame_width": 1280,
  "frame_height": 720,
  "duration_s": 20.0,
  "scene_label": "normal",
  "persons": [
    {
      "person_index": 1,
      "color_index": 0,
      "first_frame": 60,
      "bbox": {
        "x": 100.0,
        "y": 200.0,
        "w": 80.0,
        "h": 160.0
      },
      "appear_s": 2.0,
      "disappear_s": 12.5,
      "caption": "the person in red clothes walks along the street then turns to the left"
    }
  ]
}
"#;

    #[test]
    fn minimal_document_round_trips_bytewise() {
        let a = parse(MINIMAL).unwrap();
        assert_eq!(a.persons.len(), 1);
        assert_eq!(serialize(&a), MINIMAL);
        assert_eq!(parse(&serialize(&a)).unwrap(), a);
    }

    #[test]
    fn syntax_errors_name_the_field() {
        let bad = MINIMAL.replace("\"normal\"", "\"picnic\"");
        match parse(&bad) {
            Err(AnnotationError::Syntax { path, .. }) => assert_eq!(path, "scene_label"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"w\": 80.0", "\"w\": \"wide\"");
        match parse(&bad) {
            Err(AnnotationError::Syntax { path, .. }) => assert_eq!(path, "persons[0].bbox.w"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"fps\": 30.0,", "\"fps\": 30.0, \"extra\": 1,");
        assert!(matches!(parse(&bad), Err(AnnotationError::Syntax { .. })));
    }

    #[test]
    fn invariant_violations_rejected() {
        let bad = MINIMAL.replace("\"appear_s\": 2.0", "\"appear_s\": 13.0");
        match parse(&bad) {
            Err(AnnotationError::Invalid(d)) => {
                assert!(d.iter().any(|d| d.path == "persons[0].appear_s"), "{d:?}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn prediction_file_round_trip() {
        let f = PredictionFile {
            video_id: "v".into(),
            duration_s: 10.0,
            predictions: vec![PredictionRecord {
                person_index: Some(1),
                segment: Segment::new(0.25, 0.5).unwrap(),
                confidence: 0.75,
                caption: "a b".into(),
            }],
        };
        let text = serialize_predictions(&f);
        assert_eq!(parse_predictions(&text).unwrap(), f);
    }
}
