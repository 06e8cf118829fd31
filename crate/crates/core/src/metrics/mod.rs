//! Caption metrics and the dense-captioning evaluation protocol.
//!
//! At each tIoU threshold, predictions are paired greedily with ground-truth
//! events by descending tIoU, and every prediction is scored: a kept pair
//! against its ground-truth caption, an unmatched prediction as 0. SODA_c
//! instead scores the best order-preserving matching of a whole video.
//!
//! All aggregates sum sorted values, so reports do not depend on the order
//! in which videos or predictions arrive.

mod caption;
mod soda;

pub use caption::{
    bleu4, cider_d, cider_d_items, meteor_lite, rouge_l, CIDER_SIGMA, METEOR_ALPHA, METEOR_BETA,
    METEOR_GAMMA,
};
pub use soda::{best_ordered_matching, soda_c, soda_scores};

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{tiou, Segment};

pub const THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("threshold {0} outside (0, 1]")]
    Threshold(f64),
    #[error("at least one threshold is required")]
    NoThresholds,
}

/// A timed caption, already tokenized.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub segment: Segment,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoEval {
    pub video_id: String,
    pub predictions: Vec<Event>,
    pub ground_truth: Vec<Event>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu4,
    MeteorLite,
    CiderD,
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Bleu4,
        Metric::MeteorLite,
        Metric::CiderD,
        Metric::RougeL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu4 => "bleu4",
            Metric::MeteorLite => "meteor_lite",
            Metric::CiderD => "cider_d",
            Metric::RougeL => "rouge_l",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricScores {
    pub metric: Metric,
    pub per_threshold: Vec<f64>,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoScores {
    pub video_id: String,
    /// Indexed like [`Metric::ALL`], then by threshold.
    pub scores: Vec<Vec<f64>>,
    pub matched: Vec<usize>,
    pub soda_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub metrics: Vec<MetricScores>,
    pub soda_c: f64,
    /// Kept pairs per threshold, over the whole corpus.
    pub matched: Vec<usize>,
    /// Mean tIoU of the kept pairs per threshold (0 when none are kept).
    pub matched_tiou: Vec<f64>,
    pub predictions: usize,
    pub ground_truth: usize,
    pub diagnostics: Vec<String>,
    /// Sorted by video id.
    pub videos: Vec<VideoScores>,
}

/// Mean of `values`, independent of their order; 0 for an empty slice.
///
/// Offsets from the smallest value are summed in ascending order and added
/// back, so a slice of equal values averages to exactly that value.
pub fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let base = v[0];
    base + v.iter().map(|x| x - base).sum::<f64>() / v.len() as f64
}

fn canonical(events: &[Event]) -> Vec<Event> {
    let mut v = events.to_vec();
    v.sort_by(|a, b| {
        a.segment
            .start()
            .total_cmp(&b.segment.start())
            .then(a.segment.end().total_cmp(&b.segment.end()))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    v
}

/// Greedy one-to-one pairing by descending tIoU, keeping pairs at or above
/// `threshold`. Ties go to the earlier ground-truth event, then the earlier
/// prediction. Returns `(prediction, ground truth, tIoU)`.
pub fn greedy_match(
    predictions: &[Event],
    ground_truth: &[Event],
    threshold: f64,
) -> Vec<(usize, usize, f64)> {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pe) in predictions.iter().enumerate() {
        for (g, ge) in ground_truth.iter().enumerate() {
            let iou = tiou(&pe.segment, &ge.segment);
            if iou >= threshold && iou > 0.0 {
                cands.push((iou, g, p));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; predictions.len()];
    let mut gt_used = vec![false; ground_truth.len()];
    let mut out = Vec::new();
    for (iou, g, p) in cands {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            out.push((p, g, iou));
        }
    }
    out
}

/// Scores a corpus at each threshold (normally [`THRESHOLDS`]) and with
/// SODA_c.
pub fn tiou_matched_eval(
    videos: &[VideoEval],
    thresholds: &[f64],
) -> Result<EvalReport, MetricsError> {
    if thresholds.is_empty() {
        return Err(MetricsError::NoThresholds);
    }
    if let Some(&t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(MetricsError::Threshold(t));
    }
    let mut videos: Vec<VideoEval> = videos
        .iter()
        .map(|v| VideoEval {
            video_id: v.video_id.clone(),
            predictions: canonical(&v.predictions),
            ground_truth: canonical(&v.ground_truth),
        })
        .collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let n_pred: usize = videos.iter().map(|v| v.predictions.len()).sum();
    let n_gt: usize = videos.iter().map(|v| v.ground_truth.len()).sum();
    let mut diagnostics = Vec::new();
    if n_gt == 0 {
        diagnostics.push("no ground-truth events: every score is 0".to_string());
    }
    if n_pred == 0 {
        diagnostics.push("no predictions: caption scores are 0".to_string());
    }
    let gt_docs: Vec<Vec<Vec<String>>> = videos
        .iter()
        .flat_map(|v| v.ground_truth.iter().map(|e| vec![e.tokens.clone()]))
        .collect();
    let idf: Vec<&[Vec<String>]> = gt_docs.iter().map(Vec::as_slice).collect();

    let nt = thresholds.len();
    // scores[video][metric][threshold][prediction]
    let mut scores: Vec<Vec<Vec<Vec<f64>>>> = videos
        .iter()
        .map(|v| vec![vec![vec![0.0; v.predictions.len()]; nt]; Metric::ALL.len()])
        .collect();
    let mut matched = vec![vec![0usize; nt]; videos.len()];
    let mut matched_ious: Vec<Vec<f64>> = vec![Vec::new(); nt];
    for (ti, &tau) in thresholds.iter().enumerate() {
        let pairs: Vec<Vec<(usize, usize, f64)>> = videos
            .par_iter()
            .map(|v| greedy_match(&v.predictions, &v.ground_truth, tau))
            .collect();
        let flat: Vec<(usize, usize, usize)> = pairs
            .iter()
            .enumerate()
            .flat_map(|(vi, ps)| ps.iter().map(move |&(p, g, _)| (vi, p, g)))
            .collect();
        for (vi, ps) in pairs.iter().enumerate() {
            matched[vi][ti] = ps.len();
            matched_ious[ti].extend(ps.iter().map(|p| p.2));
        }
        let lexical: Vec<[f64; 3]> = flat
            .par_iter()
            .map(|&(vi, p, g)| {
                let (c, r) = (
                    &videos[vi].predictions[p].tokens,
                    &videos[vi].ground_truth[g].tokens,
                );
                [bleu4(c, r), meteor_lite(c, r), rouge_l(c, r)]
            })
            .collect();
        let refs: Vec<Vec<Vec<String>>> = flat
            .iter()
            .map(|&(vi, _, g)| vec![videos[vi].ground_truth[g].tokens.clone()])
            .collect();
        let items: Vec<(&[String], &[Vec<String>])> = flat
            .iter()
            .zip(&refs)
            .map(|(&(vi, p, _), r)| (videos[vi].predictions[p].tokens.as_slice(), r.as_slice()))
            .collect();
        let cider = cider_d_items(&items, &idf);
        for (k, &(vi, p, _)) in flat.iter().enumerate() {
            let [b, m, r] = lexical[k];
            scores[vi][0][ti][p] = b;
            scores[vi][1][ti][p] = m;
            scores[vi][2][ti][p] = cider[k];
            scores[vi][3][ti][p] = r;
        }
    }

    let soda: Vec<f64> = videos
        .par_iter()
        .map(|v| soda_c(&v.predictions, &v.ground_truth))
        .collect();
    let metrics = Metric::ALL
        .iter()
        .enumerate()
        .map(|(mi, &metric)| {
            let per_threshold: Vec<f64> = (0..nt)
                .map(|ti| {
                    if n_gt == 0 {
                        return 0.0;
                    }
                    let all: Vec<f64> = scores
                        .iter()
                        .flat_map(|s| s[mi][ti].iter().copied())
                        .collect();
                    stable_mean(&all)
                })
                .collect();
            MetricScores {
                metric,
                average: stable_mean(&per_threshold),
                per_threshold,
            }
        })
        .collect();
    let per_video = videos
        .iter()
        .enumerate()
        .map(|(vi, v)| VideoScores {
            video_id: v.video_id.clone(),
            scores: (0..Metric::ALL.len())
                .map(|mi| (0..nt).map(|ti| stable_mean(&scores[vi][mi][ti])).collect())
                .collect(),
            matched: matched[vi].clone(),
            soda_c: soda[vi],
        })
        .collect();
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        metrics,
        soda_c: if n_gt == 0 { 0.0 } else { stable_mean(&soda) },
        matched: (0..nt)
            .map(|ti| matched.iter().map(|m| m[ti]).sum())
            .collect(),
        matched_tiou: matched_ious.iter().map(|v| stable_mean(v)).collect(),
        predictions: n_pred,
        ground_truth: n_gt,
        diagnostics,
        videos: per_video,
    })
}

impl EvalReport {
    pub fn metric(&self, metric: Metric) -> &MetricScores {
        self.metrics
            .iter()
            .find(|m| m.metric == metric)
            .expect("every metric is reported")
    }

    /// Tab-separated rows `video_id metric threshold score`, one per video,
    /// metric and threshold, plus one `soda_c` row per video.
    pub fn table(&self) -> String {
        let mut out = String::from("video_id\tmetric\tthreshold\tscore\n");
        for v in &self.videos {
            for (mi, m) in Metric::ALL.iter().enumerate() {
                for (ti, t) in self.thresholds.iter().enumerate() {
                    let _ = writeln!(out, "{}\t{}\t{}\t{}", v.video_id, m, t, v.scores[mi][ti]);
                }
            }
            let _ = writeln!(out, "{}\tsoda_c\tall\t{}", v.video_id, v.soda_c);
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12}", "tIoU")?;
        for t in &self.thresholds {
            write!(f, "{t:>9.2}")?;
        }
        writeln!(f, "{:>9}", "avg")?;
        for m in &self.metrics {
            write!(f, "{:<12}", m.metric.name())?;
            for s in &m.per_threshold {
                write!(f, "{s:>9.4}")?;
            }
            writeln!(f, "{:>9.4}", m.average)?;
        }
        write!(f, "{:<12}", "matched")?;
        for c in &self.matched {
            write!(f, "{c:>9}")?;
        }
        writeln!(f)?;
        writeln!(f, "soda_c      {:.4}", self.soda_c)?;
        writeln!(
            f,
            "predictions {}  ground truth {}",
            self.predictions, self.ground_truth
        )?;
        for d in &self.diagnostics {
            writeln!(f, "note: {d}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn ev(a: f64, b: f64, s: &str) -> Event {
        Event {
            segment: Segment::new(a, b).unwrap(),
            tokens: tokenize(s),
        }
    }

    fn corpus() -> Vec<VideoEval> {
        let gt = vec![
            ev(0.0, 0.4, "the person in red clothes walks along the street"),
            ev(0.3, 0.9, "the person in blue clothes stands near the door"),
        ];
        vec![VideoEval {
            video_id: "a".into(),
            predictions: gt.clone(),
            ground_truth: gt,
        }]
    }

    #[test]
    fn identity_scores() {
        let r = tiou_matched_eval(&corpus(), &THRESHOLDS).unwrap();
        assert_eq!(r.metric(Metric::Bleu4).per_threshold, vec![1.0; 4]);
        assert_eq!(r.metric(Metric::RougeL).per_threshold, vec![1.0; 4]);
        assert_eq!(r.metric(Metric::CiderD).per_threshold, vec![10.0; 4]);
        let m = 9.0f64;
        assert_eq!(
            r.metric(Metric::MeteorLite).average,
            1.0 - 0.5 / (m * m * m)
        );
        assert_eq!(r.matched, vec![2; 4]);
    }

    #[test]
    fn threshold_arithmetic() {
        // tIoU([0, 0.6], [0, 1]) = 0.6.
        let v = vec![VideoEval {
            video_id: "x".into(),
            predictions: vec![ev(0.0, 0.6, "a b c d")],
            ground_truth: vec![ev(0.0, 1.0, "a b c d")],
        }];
        let r = tiou_matched_eval(&v, &THRESHOLDS).unwrap();
        assert_eq!(r.matched, vec![1, 1, 0, 0]);
        assert_eq!(
            r.metric(Metric::Bleu4).per_threshold,
            vec![1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn unmatched_predictions_count_zero() {
        let mut v = corpus();
        v[0].predictions.push(ev(0.95, 1.0, "stray words"));
        let r = tiou_matched_eval(&v, &[0.5]).unwrap();
        assert_eq!(r.metric(Metric::Bleu4).per_threshold, vec![2.0 / 3.0]);
    }

    #[test]
    fn empty_ground_truth_is_diagnosed() {
        let v = vec![VideoEval {
            video_id: "e".into(),
            predictions: vec![ev(0.0, 1.0, "a")],
            ground_truth: vec![],
        }];
        let r = tiou_matched_eval(&v, &THRESHOLDS).unwrap();
        assert!(r.metrics.iter().all(|m| m.average == 0.0));
        assert_eq!(r.soda_c, 0.0);
        assert!(!r.diagnostics.is_empty());
        assert!(tiou_matched_eval(&v, &[0.0]).is_err());
    }

    #[test]
    fn table_shape() {
        let r = tiou_matched_eval(&corpus(), &THRESHOLDS).unwrap();
        assert_eq!(r.table().lines().count(), 1 + 4 * 4 + 1);
    }
}
