//! Set-prediction criterion: bipartite matching of predicted person segments
//! to ground truth, then a weighted gIoU + focal + caption loss, summed over
//! every decoder layer's prediction head.

mod hungarian;
mod losses;

pub use hungarian::hungarian;
pub use losses::{
    caption_ce, caption_ce_batched, focal_loss, focal_loss_tape, giou_loss_tape, FocalParams,
    PROB_CLAMP,
};

use thiserror::Error;

use crate::diffcore::{Tape, TensorError, Var};
use crate::geometry::{giou1d, Segment};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SetCritError {
    #[error("cost matrix: {0}")]
    Cost(String),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Weights of the matching cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchWeights {
    pub alpha_giou: f64,
    pub alpha_cls: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            alpha_giou: 2.0,
            alpha_cls: 1.0,
        }
    }
}

impl MatchWeights {
    pub fn validate(&self) -> Result<(), SetCritError> {
        if self.alpha_giou < 0.0 || self.alpha_cls < 0.0 {
            return Err(SetCritError::Weights(
                "matching weights must be non-negative".into(),
            ));
        }
        if self.alpha_giou == 0.0 && self.alpha_cls == 0.0 {
            return Err(SetCritError::Weights(
                "matching weights cannot both be zero".into(),
            ));
        }
        Ok(())
    }
}

/// Weights of the training loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub beta_giou: f64,
    pub beta_cls: f64,
    pub beta_cap: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta_giou: 2.0,
            beta_cls: 1.0,
            beta_cap: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), SetCritError> {
        if [self.beta_giou, self.beta_cls, self.beta_cap]
            .iter()
            .any(|&b| b < 0.0 || !b.is_finite())
        {
            return Err(SetCritError::Weights(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `(prediction, ground truth)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub total_cost: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SetCriterion {
    pub matching: MatchWeights,
    pub loss: LossWeights,
    pub focal: FocalParams,
}

/// Matching cost `α_giou (1 - gIoU) + α_cls focal(conf, 1)`; captions play
/// no part in matching.
pub fn match_cost(
    preds: &[(Segment, f64)],
    gts: &[Segment],
    weights: MatchWeights,
    focal: FocalParams,
) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|(seg, conf)| {
            let cls = weights.alpha_cls * focal_loss(*conf, true, focal);
            gts.iter()
                .map(|gt| weights.alpha_giou * (1.0 - giou1d(seg, gt)) + cls)
                .collect()
        })
        .collect()
}

/// One decoder layer's localization outputs.
#[derive(Clone, Copy, Debug)]
pub struct LayerOutput {
    /// `[N, 2]` rows of (start, end).
    pub segments: Var,
    /// `[N, 1]` pre-sigmoid foreground confidence.
    pub confidence_logits: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LayerLoss {
    pub giou: f64,
    pub cls: f64,
    pub caption: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct SetLoss {
    pub total: Var,
    pub layers: Vec<LayerLoss>,
    pub assignments: Vec<Assignment>,
}

/// Sums the set-prediction loss over all decoder layers, re-matching every
/// layer independently.
///
/// `caption_loss(tape, layer, pairs)` must return the length-normalized
/// caption cross-entropy of each matched `(prediction, gt)` pair as `[M, 1]`
/// in `pairs` order. Each term is normalized by `max(1, #gt)`. Partial sums
/// accumulate in value order, so the loss is exactly invariant under
/// reordering of predictions or ground truths.
pub fn set_loss<S, F>(
    tape: &mut Tape<S>,
    layers: &[LayerOutput],
    gts: &[Segment],
    criterion: &SetCriterion,
    mut caption_loss: F,
) -> Result<SetLoss, SetCritError>
where
    S: Scalar,
    F: FnMut(&mut Tape<S>, usize, &[(usize, usize)]) -> Result<Var, TensorError>,
{
    criterion.matching.validate()?;
    criterion.loss.validate()?;
    if layers.is_empty() {
        return Err(SetCritError::Tensor(TensorError::Contract(
            "set loss needs at least one decoder layer".into(),
        )));
    }
    let norm = S::one() / S::from_usize_lossy(gts.len().max(1));
    let beta = |b: f64| S::from_f64_lossy(b);
    let mut layer_totals = Vec::with_capacity(layers.len());
    let mut report = Vec::with_capacity(layers.len());
    let mut assignments = Vec::with_capacity(layers.len());

    for (li, layer) in layers.iter().enumerate() {
        let seg_vals = tape.value(layer.segments).to_f64_vec();
        let conf_vals = tape.value(layer.confidence_logits).to_f64_vec();
        let n = conf_vals.len();
        let preds: Vec<(Segment, f64)> = (0..n)
            .map(|i| {
                let s = seg_vals[2 * i];
                let e = seg_vals[2 * i + 1].max(s);
                let seg = Segment::new(s.clamp(0.0, 1.0), e.clamp(0.0, 1.0))
                    .expect("clamped segment is valid");
                (seg, sigmoid(conf_vals[i]))
            })
            .collect();
        let cost = match_cost(&preds, gts, criterion.matching, criterion.focal);
        let assignment = hungarian(&cost)?;
        tape.note_branch(u64::MAX);
        for &(p, g) in &assignment.pairs {
            tape.note_branch(((p as u64) << 32) | g as u64);
        }

        let mut labels = vec![false; n];
        for &(p, _) in &assignment.pairs {
            labels[p] = true;
        }
        let focal = focal_loss_tape(tape, layer.confidence_logits, &labels, criterion.focal)?;
        let cls = tape.sum_canonical(focal)?;
        let cls = tape.scale(cls, norm)?;
        let mut terms = vec![(cls, criterion.loss.beta_cls)];
        let mut entry = LayerLoss {
            cls: tape.value(cls).item().to_f64_lossy(),
            ..LayerLoss::default()
        };

        if !assignment.pairs.is_empty() {
            let pred_idx: Vec<usize> = assignment.pairs.iter().map(|&(p, _)| p).collect();
            let targets: Vec<[f64; 2]> = assignment
                .pairs
                .iter()
                .map(|&(_, g)| [gts[g].start(), gts[g].end()])
                .collect();
            let matched = tape.gather_rows(layer.segments, &pred_idx)?;
            let giou = giou_loss_tape(tape, matched, &targets)?;
            let giou = tape.sum_canonical(giou)?;
            let giou = tape.scale(giou, norm)?;
            entry.giou = tape.value(giou).item().to_f64_lossy();
            terms.push((giou, criterion.loss.beta_giou));

            let cap = caption_loss(tape, li, &assignment.pairs)?;
            if tape.value(cap).numel() != assignment.pairs.len() {
                return Err(SetCritError::Tensor(TensorError::Shape(format!(
                    "caption loss returned {} values for {} pairs",
                    tape.value(cap).numel(),
                    assignment.pairs.len()
                ))));
            }
            let cap = tape.sum_canonical(cap)?;
            let cap = tape.scale(cap, norm)?;
            entry.caption = tape.value(cap).item().to_f64_lossy();
            terms.push((cap, criterion.loss.beta_cap));
        }

        let mut total: Option<Var> = None;
        for (term, weight) in terms {
            let weighted = tape.scale(term, beta(weight))?;
            total = Some(match total {
                Some(acc) => tape.add(acc, weighted)?,
                None => weighted,
            });
        }
        let total = total.expect("classification term always present");
        entry.total = tape.value(total).item().to_f64_lossy();
        layer_totals.push(total);
        report.push(entry);
        assignments.push(assignment);
    }

    let mut total = layer_totals[0];
    for &t in &layer_totals[1..] {
        total = tape.add(total, t)?;
    }
    Ok(SetLoss {
        total,
        layers: report,
        assignments,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
