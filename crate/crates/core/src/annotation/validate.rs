use std::cmp::Ordering;
use std::fmt;

use super::palette::PALETTE;
use super::VideoAnnotation;
use crate::text::tokenize;

/// Captions longer than this are rejected.
pub const CAPTION_MAX_TOKENS: usize = 120;
/// Caption lengths outside this range draw a warning.
pub const CAPTION_WARN_RANGE: (usize, usize) = (15, 65);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// One finding, addressed by a JSON-style path such as
/// `persons[2].bbox`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
            severity: Severity::Error,
        }
    }

    pub fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
            severity: Severity::Warning,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.path, self.message)
    }
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Checks every invariant of an annotation and returns all findings, errors
/// and warnings alike, in document order.
pub fn validate(a: &VideoAnnotation) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if a.video_id.is_empty()
        || !a
            .video_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        || a.video_id.starts_with('.')
    {
        out.push(Diagnostic::error(
            "video_id",
            format!(
                "`{}` must be non-empty and use only [A-Za-z0-9_.-]",
                a.video_id
            ),
        ));
    }
    if !finite_positive(a.fps) {
        out.push(Diagnostic::error(
            "fps",
            format!("{} is not a positive frame rate", a.fps),
        ));
    }
    if a.frame_width == 0 {
        out.push(Diagnostic::error("frame_width", "must be positive"));
    }
    if a.frame_height == 0 {
        out.push(Diagnostic::error("frame_height", "must be positive"));
    }
    if !finite_positive(a.duration_s) {
        out.push(Diagnostic::error(
            "duration_s",
            format!("{} is not a positive duration", a.duration_s),
        ));
    }
    let (fw, fh) = (f64::from(a.frame_width), f64::from(a.frame_height));
    let frames = if finite_positive(a.fps) && finite_positive(a.duration_s) {
        Some(a.frame_count())
    } else {
        None
    };

    for (i, p) in a.persons.iter().enumerate() {
        let at = |field: &str| format!("persons[{i}].{field}");
        if p.person_index != i + 1 {
            out.push(Diagnostic::error(
                at("person_index"),
                format!("expected {} (indices run consecutively from 1)", i + 1),
            ));
        }
        let expected_color = p.person_index.saturating_sub(1) % PALETTE.len();
        if p.color_index != expected_color {
            out.push(Diagnostic::error(
                at("color_index"),
                format!(
                    "person {} must use palette slot {expected_color}, found {}",
                    p.person_index, p.color_index
                ),
            ));
        }
        let b = &p.bbox;
        if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) || !b.has_positive_extent() {
            out.push(Diagnostic::error(
                at("bbox"),
                "width and height must be positive",
            ));
        } else if !b.within(fw, fh) {
            out.push(Diagnostic::error(
                at("bbox"),
                format!(
                    "box ({}, {}, {}, {}) leaves the {}x{} frame",
                    b.x, b.y, b.w, b.h, a.frame_width, a.frame_height
                ),
            ));
        }
        if !(p.appear_s.is_finite() && p.appear_s >= 0.0) {
            out.push(Diagnostic::error(
                at("appear_s"),
                format!("{} is negative", p.appear_s),
            ));
        } else if p.appear_s.partial_cmp(&p.disappear_s) != Some(Ordering::Less) {
            out.push(Diagnostic::error(
                at("appear_s"),
                format!(
                    "appears at {} but disappears at {}",
                    p.appear_s, p.disappear_s
                ),
            ));
        }
        if !(p.disappear_s.is_finite() && p.disappear_s <= a.duration_s) {
            out.push(Diagnostic::error(
                at("disappear_s"),
                format!("{} exceeds the duration {}", p.disappear_s, a.duration_s),
            ));
        }
        if let Some(frames) = frames {
            if p.first_frame >= frames {
                out.push(Diagnostic::error(
                    at("first_frame"),
                    format!(
                        "frame {} is past the last frame {}",
                        p.first_frame,
                        frames - 1
                    ),
                ));
            } else if finite_positive(a.fps) {
                let t = p.first_frame as f64 / a.fps;
                if t + 1.0 / a.fps < p.appear_s || t > p.disappear_s {
                    out.push(Diagnostic::error(
                        at("first_frame"),
                        format!(
                            "frame {} lies outside [appear_s, disappear_s]",
                            p.first_frame
                        ),
                    ));
                }
            }
        }
        if i > 0 {
            let prev = &a.persons[i - 1];
            let ordered = prev.first_frame < p.first_frame
                || (prev.first_frame == p.first_frame && prev.bbox.x <= p.bbox.x);
            if !ordered {
                out.push(Diagnostic::error(
                    at("first_frame"),
                    "persons must be ordered by first appearance, leftmost box first on ties",
                ));
            }
        }
        let tokens = tokenize(&p.caption).len();
        if tokens == 0 {
            out.push(Diagnostic::error(at("caption"), "caption is empty"));
        } else if tokens > CAPTION_MAX_TOKENS {
            out.push(Diagnostic::error(
                at("caption"),
                format!("{tokens} tokens exceed the limit of {CAPTION_MAX_TOKENS}"),
            ));
        } else if tokens < CAPTION_WARN_RANGE.0 || tokens > CAPTION_WARN_RANGE.1 {
            out.push(Diagnostic::warning(
                at("caption"),
                format!(
                    "{tokens} tokens, typical captions have {} to {}",
                    CAPTION_WARN_RANGE.0, CAPTION_WARN_RANGE.1
                ),
            ));
        }
        for (k, tb) in p.track.iter().enumerate() {
            let at = |field: &str| format!("persons[{i}].track[{k}].{field}");
            if tb.frame < p.first_frame || frames.is_some_and(|f| tb.frame >= f) {
                out.push(Diagnostic::error(
                    at("frame"),
                    format!("frame {} outside the track", tb.frame),
                ));
            }
            if k > 0 && tb.frame <= p.track[k - 1].frame {
                out.push(Diagnostic::error(at("frame"), "track frames must increase"));
            }
            let b = &tb.bbox;
            if !b.has_positive_extent() || !b.within(fw, fh) {
                out.push(Diagnostic::error(
                    at("bbox"),
                    "box must be non-empty and inside the frame",
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn base() -> VideoAnnotation {
        parse(crate::annotation::tests::MINIMAL).unwrap()
    }

    fn errors(a: &VideoAnnotation) -> Vec<String> {
        validate(a)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| d.path)
            .collect()
    }

    #[test]
    fn palette_rule() {
        let mut a = base();
        let mut second = a.persons[0].clone();
        second.person_index = 2;
        second.color_index = 5;
        second.first_frame = 70;
        a.persons.push(second);
        assert_eq!(errors(&a), vec!["persons[1].color_index"]);
        a.persons[1].color_index = 1;
        assert!(errors(&a).is_empty());
    }

    #[test]
    fn reversed_times() {
        let mut a = base();
        a.persons[0].appear_s = 10.0;
        a.persons[0].disappear_s = 7.0;
        assert!(errors(&a).contains(&"persons[0].appear_s".to_string()));
    }

    #[test]
    fn short_caption_warns_only() {
        let mut a = base();
        a.persons[0].caption = "walks".into();
        let d = validate(&a);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
    }

    #[test]
    fn tie_break_on_bbox_x() {
        let mut a = base();
        let mut second = a.persons[0].clone();
        second.person_index = 2;
        second.color_index = 1;
        second.bbox.x = 50.0;
        a.persons.push(second);
        assert_eq!(errors(&a), vec!["persons[1].first_frame"]);
        a.persons[1].bbox.x = 150.0;
        assert!(errors(&a).is_empty());
    }
}
