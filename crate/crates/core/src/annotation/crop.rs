use super::{AnnotationError, VideoAnnotation};
use crate::geometry::BBox;

/// Anything that can report how many frames a video has.
pub trait FrameSource {
    fn frame_count(&self) -> u64;
}

impl FrameSource for u64 {
    fn frame_count(&self) -> u64 {
        *self
    }
}

/// Crop plan for one person: the frames to read and the rectangle to cut
/// from each.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackClip {
    pub person_index: usize,
    /// First frame of the track.
    pub start_frame: u64,
    /// One past the last frame of the track.
    pub end_frame: u64,
    /// Sampled absolute frame numbers, increasing.
    pub frames: Vec<u64>,
    /// Crop box for each sampled frame.
    pub crops: Vec<BBox>,
}

/// Plans per-person crops.
///
/// A track spans `[first_frame, round(disappear_s · fps))`. When it is longer
/// than `budget`, frame offsets `floor(i · len / budget)` are kept. Without
/// per-frame boxes the first-appearance box is held for the whole track;
/// otherwise each frame uses the latest box at or before it.
pub fn crop_tracks(
    annotation: &VideoAnnotation,
    source: &impl FrameSource,
    budget: usize,
) -> Result<Vec<TrackClip>, AnnotationError> {
    if budget == 0 {
        return Err(AnnotationError::Contract(
            "frame budget must be positive".into(),
        ));
    }
    let available = source.frame_count();
    annotation
        .persons
        .iter()
        .map(|p| {
            let start = p.first_frame;
            let end = (p.disappear_s * annotation.fps).round() as u64;
            if end <= start {
                return Err(AnnotationError::Contract(format!(
                    "person {}: empty track [{start}, {end})",
                    p.person_index
                )));
            }
            if end > available {
                return Err(AnnotationError::Contract(format!(
                    "person {}: track ends at frame {end} but the source has {available}",
                    p.person_index
                )));
            }
            let len = end - start;
            let frames: Vec<u64> = if len <= budget as u64 {
                (start..end).collect()
            } else {
                (0..budget as u64)
                    .map(|i| start + i * len / budget as u64)
                    .collect()
            };
            let crops = frames
                .iter()
                .map(|&f| {
                    p.track
                        .iter()
                        .rev()
                        .find(|tb| tb.frame <= f)
                        .map_or(p.bbox, |tb| tb.bbox)
                })
                .collect();
            Ok(TrackClip {
                person_index: p.person_index,
                start_frame: start,
                end_frame: end,
                frames,
                crops,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{parse, TrackBox};

    fn one_person(first_frame: u64, disappear_s: f64) -> VideoAnnotation {
        let mut a = parse(crate::annotation::tests::MINIMAL).unwrap();
        a.fps = 1.0;
        a.persons[0].first_frame = first_frame;
        a.persons[0].appear_s = first_frame as f64;
        a.persons[0].disappear_s = disappear_s;
        a
    }

    #[test]
    fn budget_covers_whole_track() {
        let a = one_person(0, 64.0);
        let clips = crop_tracks(&a, &100u64, 64).unwrap();
        assert_eq!(clips[0].frames, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_floor_stride() {
        let a = one_person(0, 8.0);
        let clips = crop_tracks(&a, &100u64, 4).unwrap();
        assert_eq!(clips[0].frames, vec![0, 2, 4, 6]);
        let a = one_person(3, 10.0);
        let clips = crop_tracks(&a, &100u64, 3).unwrap();
        assert_eq!(clips[0].frames, vec![3, 5, 7]);
    }

    #[test]
    fn boxes_held_or_tracked() {
        let mut a = one_person(0, 4.0);
        let first = a.persons[0].bbox;
        assert!(crop_tracks(&a, &10u64, 4).unwrap()[0]
            .crops
            .iter()
            .all(|b| *b == first));
        let moved = BBox { x: 5.0, ..first };
        a.persons[0].track = vec![TrackBox {
            frame: 2,
            bbox: moved,
        }];
        let clip = &crop_tracks(&a, &10u64, 4).unwrap()[0];
        assert_eq!(clip.crops, vec![first, first, moved, moved]);
    }

    #[test]
    fn range_errors() {
        let a = one_person(0, 8.0);
        assert!(crop_tracks(&a, &5u64, 4).is_err());
        assert!(crop_tracks(&a, &10u64, 0).is_err());
    }
}
