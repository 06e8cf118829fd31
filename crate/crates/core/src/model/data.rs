use super::{ModelError, PersonQueryInput, TrainingVideo, VideoInput};
use crate::annotation::{FeatureArray, VideoAnnotation};
use crate::geometry::Segment;
use crate::scalar::Scalar;
use crate::text::Vocab;

/// Builds model input from a `[T, C]` frame array and an `[N, C' + 2]`
/// person array whose last two columns hold the tracked extent.
pub fn video_input<S: Scalar>(
    frames: &FeatureArray,
    persons: &FeatureArray,
) -> Result<VideoInput<S>, ModelError> {
    if frames.shape.len() != 2 || persons.shape.len() != 2 {
        return Err(ModelError::Data("feature arrays must be rank 2".into()));
    }
    let width = persons.shape[1];
    if width < 3 {
        return Err(ModelError::Data(format!(
            "person rows need a feature and an extent, got width {width}"
        )));
    }
    let frames = frames
        .to_tensor()
        .map_err(|e| ModelError::Data(e.to_string()))?;
    let persons = (0..persons.rows())
        .map(|i| {
            let mut row: Vec<f64> = persons.row(i);
            let end = row.pop().expect("width >= 3");
            let start = row.pop().expect("width >= 3");
            let extent = Segment::new(start.clamp(0.0, 1.0), end.clamp(0.0, 1.0))
                .map_err(|e| ModelError::Data(format!("person {}: extent {e}", i + 1)))?;
            Ok(PersonQueryInput {
                person_index: i + 1,
                feature: row.into_iter().map(S::from_f64_lossy).collect(),
                extent,
            })
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(VideoInput { frames, persons })
}

/// Pairs model input with the ground truth of `annotation`. Person rows and
/// annotated persons must line up one to one.
pub fn training_video<S: Scalar>(
    annotation: &VideoAnnotation,
    frames: &FeatureArray,
    persons: &FeatureArray,
    vocab: &Vocab,
) -> Result<TrainingVideo<S>, ModelError> {
    let input = video_input(frames, persons)?;
    if input.persons.len() != annotation.persons.len() {
        return Err(ModelError::Data(format!(
            "{}: {} person feature rows for {} annotated persons",
            annotation.video_id,
            input.persons.len(),
            annotation.persons.len()
        )));
    }
    let segments = annotation
        .persons
        .iter()
        .map(|p| {
            p.segment(annotation.duration_s)
                .map_err(|e| ModelError::Data(format!("{}: {e}", annotation.video_id)))
        })
        .collect::<Result<_, _>>()?;
    Ok(TrainingVideo {
        id: annotation.video_id.clone(),
        input,
        segments,
        captions: annotation
            .persons
            .iter()
            .map(|p| vocab.encode(&p.caption))
            .collect(),
    })
}
