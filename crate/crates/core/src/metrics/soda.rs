use super::caption::meteor_lite;
use super::Event;
use crate::geometry::tiou;

/// Best total pairwise score over order-preserving one-to-one matchings of
/// two sequences, by the usual alignment recurrence.
pub fn best_ordered_matching(scores: &[Vec<f64>]) -> f64 {
    let n = scores.len();
    let m = scores.first().map_or(0, Vec::len);
    let mut dp = vec![vec![0.0f64; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            dp[i][j] = (dp[i - 1][j - 1] + scores[i - 1][j - 1])
                .max(dp[i - 1][j])
                .max(dp[i][j - 1]);
        }
    }
    dp[n][m]
}

fn by_start(events: &[Event]) -> Vec<&Event> {
    let mut v: Vec<&Event> = events.iter().collect();
    v.sort_by(|a, b| {
        a.segment
            .start()
            .total_cmp(&b.segment.start())
            .then(a.segment.end().total_cmp(&b.segment.end()))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    v
}

/// Pairwise `tIoU × METEOR-lite` for predictions and ground truth, both in
/// start order.
pub fn soda_scores(predictions: &[Event], ground_truth: &[Event]) -> Vec<Vec<f64>> {
    let (p, g) = (by_start(predictions), by_start(ground_truth));
    p.iter()
        .map(|a| {
            g.iter()
                .map(|b| {
                    let iou = tiou(&a.segment, &b.segment);
                    if iou > 0.0 {
                        iou * meteor_lite(&a.tokens, &b.tokens)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// SODA_c of one video: F-measure of the best ordered matching's total score
/// normalized by each side's count.
pub fn soda_c(predictions: &[Event], ground_truth: &[Event]) -> f64 {
    match (predictions.is_empty(), ground_truth.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let total = best_ordered_matching(&soda_scores(predictions, ground_truth));
    if total <= 0.0 {
        return 0.0;
    }
    let p = total / predictions.len() as f64;
    let r = total / ground_truth.len() as f64;
    2.0 * p * r / (p + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Segment;
    use crate::text::tokenize;

    fn ev(a: f64, b: f64, s: &str) -> Event {
        Event {
            segment: Segment::new(a, b).unwrap(),
            tokens: tokenize(s),
        }
    }

    #[test]
    fn identity_gives_meteor_identity() {
        let g = vec![ev(0.0, 0.3, "a b c d e"), ev(0.4, 0.9, "f g h i j")];
        assert_eq!(soda_c(&g, &g), 1.0 - 0.5 / 125.0);
    }

    #[test]
    fn degenerate_sides() {
        assert_eq!(soda_c(&[], &[]), 1.0);
        assert_eq!(soda_c(&[ev(0.0, 0.1, "a")], &[]), 0.0);
        assert_eq!(soda_c(&[ev(0.0, 0.1, "a b")], &[ev(0.5, 0.6, "a b")]), 0.0);
    }

    #[test]
    fn order_constraint_binds() {
        // Crossed pairs cannot both be used.
        assert_eq!(
            best_ordered_matching(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            1.0
        );
        assert_eq!(
            best_ordered_matching(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            2.0
        );
    }
}
