//! Temporal interval arithmetic: segments, tIoU and 1-D generalized IoU.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid segment [{start}, {end}]: need 0 <= start <= end <= 1")]
    InvalidSegment { start: f64, end: f64 },
}

/// Normalized temporal interval `[start, end] ⊂ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<T = f64> {
    start: T,
    end: T,
}

impl<T: Float> Segment<T> {
    pub fn new(start: T, end: T) -> Result<Self, GeometryError> {
        let zero = T::zero();
        let one = T::one();
        if start >= zero && start <= end && end <= one {
            Ok(Self { start, end })
        } else {
            Err(GeometryError::InvalidSegment {
                start: start.to_f64().unwrap_or(f64::NAN),
                end: end.to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn end(&self) -> T {
        self.end
    }

    pub fn length(&self) -> T {
        self.end - self.start
    }

    pub fn center(&self) -> T {
        (self.start + self.end) / (T::one() + T::one())
    }

    pub fn width(&self) -> T {
        self.length()
    }

    fn intersection(&self, other: &Self) -> T {
        (self.end.min(other.end) - self.start.max(other.start)).max(T::zero())
    }

    fn hull(&self, other: &Self) -> T {
        self.end.max(other.end) - self.start.min(other.start)
    }
}

impl From<Segment<f64>> for [f64; 2] {
    fn from(s: Segment<f64>) -> Self {
        [s.start, s.end]
    }
}

impl TryFrom<[f64; 2]> for Segment<f64> {
    type Error = GeometryError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Segment::new(v[0], v[1])
    }
}

impl Serialize for Segment<f64> {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        [self.start, self.end].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Segment<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pair = <[f64; 2]>::deserialize(deserializer)?;
        Segment::try_from(pair).map_err(serde::de::Error::custom)
    }
}

/// Temporal IoU. Two zero-length segments score 1 when they coincide and 0
/// otherwise, so degenerate predictions never yield NaN.
pub fn tiou<T: Float>(a: &Segment<T>, b: &Segment<T>) -> T {
    let inter = a.intersection(b);
    let union = a.length() + b.length() - inter;
    if union > T::zero() {
        inter / union
    } else if a == b {
        T::one()
    } else {
        T::zero()
    }
}

/// Generalized IoU on the line: `IoU - (|hull| - |union|) / |hull|`.
///
/// Coincident zero-length segments give 1. Two distinct points give -1,
/// the only way to reach the lower bound.
pub fn giou1d<T: Float>(a: &Segment<T>, b: &Segment<T>) -> T {
    let hull = a.hull(b);
    if hull <= T::zero() {
        return T::one();
    }
    let inter = a.intersection(b);
    let union = a.length() + b.length() - inter;
    let iou = if union > T::zero() {
        inter / union
    } else {
        T::zero()
    };
    // The hull never falls short of the union, but for overlapping
    // segments the two are computed along different routes and can differ
    // by an ulp in the wrong direction.
    iou - ((hull - union) / hull).max(T::zero())
}

/// Segment `[center - width/2, center + width/2]` clipped to `[0, 1]`.
pub fn segment_from_center_width<T: Float>(center: T, width: T) -> Segment<T> {
    let half = width / (T::one() + T::one());
    let clip = |v: T| v.max(T::zero()).min(T::one());
    let start = clip(center - half);
    let end = clip(center + half).max(start);
    Segment { start, end }
}

/// Axis-aligned pixel box: offset `(x, y)` and positive extent `(w, h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn has_positive_extent(&self) -> bool {
        self.w > 0.0 && self.h > 0.0
    }

    pub fn within(&self, frame_width: f64, frame_height: f64) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= frame_width
            && self.y + self.h <= frame_height
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(a: f64, b: f64) -> Segment {
        Segment::new(a, b).unwrap()
    }

    #[test]
    fn tiou_hand_cases() {
        assert_eq!(tiou(&seg(0.2, 0.5), &seg(0.2, 0.5)), 1.0);
        assert!((tiou(&seg(0.2, 0.5), &seg(0.4, 0.8)) - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(tiou(&seg(0.0, 0.2), &seg(0.8, 1.0)), 0.0);
    }

    #[test]
    fn giou_hand_cases() {
        assert_eq!(giou1d(&seg(0.3, 0.6), &seg(0.3, 0.6)), 1.0);
        assert!((giou1d(&seg(0.2, 0.5), &seg(0.4, 0.8)) - 1.0 / 6.0).abs() < 1e-12);
        assert!((giou1d(&seg(0.0, 0.2), &seg(0.8, 1.0)) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_length_conventions() {
        let p = seg(0.4, 0.4);
        assert_eq!(tiou(&p, &p), 1.0);
        assert_eq!(giou1d(&p, &p), 1.0);
        assert_eq!(tiou(&p, &seg(0.6, 0.6)), 0.0);
        assert_eq!(giou1d(&p, &seg(0.6, 0.6)), -1.0);
        assert_eq!(tiou(&p, &seg(0.2, 0.8)), 0.0);
    }

    #[test]
    fn center_width_cases() {
        assert_eq!(segment_from_center_width(0.5, 1.0), seg(0.0, 1.0));
        let s = segment_from_center_width(0.3, 0.2);
        assert!((s.start() - 0.2).abs() < 1e-15 && (s.end() - 0.4).abs() < 1e-15);
        let s = segment_from_center_width(0.05, 0.2);
        assert_eq!(s.start(), 0.0);
        assert!((s.end() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn invalid_segments_rejected() {
        assert!(Segment::new(0.5, 0.4).is_err());
        assert!(Segment::new(-0.1, 0.4).is_err());
        assert!(Segment::new(0.1, 1.1).is_err());
        assert!(Segment::new(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn serde_as_pair() {
        let s = seg(0.25, 0.75);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[0.25,0.75]");
        assert!(serde_json::from_str::<Segment>("[0.8,0.2]").is_err());
    }

    fn any_segment() -> impl Strategy<Value = Segment> {
        (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b)| seg(a.min(b), a.max(b)))
    }

    proptest! {
        #[test]
        fn symmetric(a in any_segment(), b in any_segment()) {
            prop_assert_eq!(tiou(&a, &b), tiou(&b, &a));
            prop_assert_eq!(giou1d(&a, &b), giou1d(&b, &a));
        }

        #[test]
        fn giou_bounded_by_iou(a in any_segment(), b in any_segment()) {
            let (i, g) = (tiou(&a, &b), giou1d(&a, &b));
            prop_assert!(g <= i + 1e-15);
            prop_assert!((-1.0..=1.0).contains(&g));
            prop_assert!((0.0..=1.0).contains(&i));
        }

        #[test]
        fn center_width_round_trip_on_dyadic_grid(s in 0u32..=512, len in 0u32..=512) {
            // multiples of 2^-10 keep the arithmetic exact
            let start = f64::from(s) / 1024.0;
            let end = f64::from(s + len) / 1024.0;
            let a = seg(start, end);
            prop_assert_eq!(segment_from_center_width(a.center(), a.width()), a);
        }

        #[test]
        fn center_width_round_trip_close(a in any_segment()) {
            let b = segment_from_center_width(a.center(), a.width());
            prop_assert!((a.start() - b.start()).abs() < 1e-15);
            prop_assert!((a.end() - b.end()).abs() < 1e-15);
        }
    }
}
