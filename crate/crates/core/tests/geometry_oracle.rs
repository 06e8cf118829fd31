//! tIoU and 1-D gIoU against interval arithmetic written out longhand.

use hcap_core::geometry::{giou1d, tiou, Segment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seg(a: f64, b: f64) -> Segment {
    Segment::new(a, b).unwrap()
}

/// Reference values from the four endpoints, with no shared helpers.
fn reference(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    let hull = a.1.max(b.1) - a.0.min(b.0);
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    (iou, iou - (hull - union) / hull)
}

fn random_pair(rng: &mut ChaCha8Rng) -> ((f64, f64), (f64, f64)) {
    let mut draw = || {
        let (x, y): (f64, f64) = (rng.random(), rng.random());
        (x.min(y), x.max(y))
    };
    (draw(), draw())
}

#[test]
fn ten_thousand_random_pairs_match_interval_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (a, b) = random_pair(&mut rng);
        let (sa, sb) = (seg(a.0, a.1), seg(b.0, b.1));
        let (iou, giou) = reference(a, b);
        let (got_iou, got_giou) = (tiou(&sa, &sb), giou1d(&sa, &sb));
        worst = worst
            .max((got_iou - iou).abs())
            .max((got_giou - giou).abs());
        assert!(
            got_giou <= got_iou,
            "gIoU {got_giou} > IoU {got_iou} for {a:?} {b:?}"
        );
        assert_eq!(got_iou, tiou(&sb, &sa), "tIoU not symmetric");
        assert!((0.0..=1.0).contains(&got_iou));
        assert!((-1.0..=1.0).contains(&got_giou));
    }
    assert!(worst <= 1e-12, "worst deviation {worst:e}");
}

#[test]
fn documented_hand_cases() {
    let (a, b) = (seg(0.2, 0.5), seg(0.4, 0.8));
    assert!((tiou(&a, &b) - 1.0 / 6.0).abs() <= f64::EPSILON);
    assert!((giou1d(&a, &b) - 1.0 / 6.0).abs() <= f64::EPSILON);
    // Disjoint: union 0.4 inside a hull of 1.0.
    assert!((giou1d(&seg(0.0, 0.2), &seg(0.8, 1.0)) + 0.6).abs() <= f64::EPSILON);
    assert_eq!(tiou(&seg(0.0, 0.2), &seg(0.8, 1.0)), 0.0);
}

#[test]
fn identical_and_nested_segments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let (a, _) = random_pair(&mut rng);
        if a.1 - a.0 < 1e-9 {
            continue;
        }
        let s = seg(a.0, a.1);
        assert_eq!(tiou(&s, &s), 1.0);
        assert_eq!(giou1d(&s, &s), 1.0);
        // A nested segment has gIoU equal to IoU: the hull adds nothing.
        let inner = seg(a.0 + (a.1 - a.0) / 4.0, a.1 - (a.1 - a.0) / 4.0);
        assert!((giou1d(&s, &inner) - tiou(&s, &inner)).abs() < 1e-15);
    }
}
