use crate::diffcore::{Tape, Tensor, TensorError, Var};
use crate::scalar::Scalar;

/// Probabilities are kept this far from 0 and 1 before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// `-α_t (1 - p_t)^γ log p_t` for a single probability.
pub fn focal_loss(prob: f64, label: bool, params: FocalParams) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let (p_t, alpha_t) = if label {
        (p, params.alpha)
    } else {
        (1.0 - p, 1.0 - params.alpha)
    };
    -alpha_t * (1.0 - p_t).powf(params.gamma) * p_t.ln()
}

/// Elementwise focal loss of `sigmoid(logits)` against 0/1 labels.
/// `logits` is `[n, 1]`; the result has the same shape.
pub fn focal_loss_tape<S: Scalar>(
    tape: &mut Tape<S>,
    logits: Var,
    labels: &[bool],
    params: FocalParams,
) -> Result<Var, TensorError> {
    let n = tape.value(logits).numel();
    if labels.len() != n {
        return Err(TensorError::Shape(format!(
            "{} labels for {n} confidence logits",
            labels.len()
        )));
    }
    let shape = tape.shape(logits).to_vec();
    let constant = |f: &dyn Fn(bool) -> f64| -> Tensor<S> {
        Tensor::from_parts(
            shape.clone(),
            labels.iter().map(|&y| S::from_f64_lossy(f(y))).collect(),
        )
    };
    // p_t = sign * p + offset, with (sign, offset) = (1, 0) for positives
    // and (-1, 1) for negatives.
    let sign = tape.constant(constant(&|y| if y { 1.0 } else { -1.0 }));
    let offset = tape.constant(constant(&|y| if y { 0.0 } else { 1.0 }));
    let alpha_t = tape.constant(constant(&|y| {
        if y {
            params.alpha
        } else {
            1.0 - params.alpha
        }
    }));

    let p = tape.sigmoid(logits)?;
    let p = tape.clamp(
        p,
        S::from_f64_lossy(PROB_CLAMP),
        S::from_f64_lossy(1.0 - PROB_CLAMP),
    )?;
    let signed = tape.mul(p, sign)?;
    let p_t = tape.add(signed, offset)?;
    let log_p = tape.log(p_t)?;
    let neg_p = tape.neg(p_t)?;
    let one_minus = tape.add_scalar(neg_p, S::one())?;
    let modulator = power(tape, one_minus, params.gamma)?;
    let weighted = tape.mul(modulator, log_p)?;
    let weighted = tape.mul(weighted, alpha_t)?;
    tape.neg(weighted)
}

fn power<S: Scalar>(tape: &mut Tape<S>, x: Var, gamma: f64) -> Result<Var, TensorError> {
    if gamma == 0.0 {
        let ones = Tensor::ones(tape.shape(x));
        return Ok(tape.constant(ones));
    }
    if gamma.fract() == 0.0 && (1.0..=8.0).contains(&gamma) {
        let mut acc = x;
        for _ in 1..gamma as usize {
            acc = tape.mul(acc, x)?;
        }
        return Ok(acc);
    }
    let l = tape.log(x)?;
    let l = tape.scale(l, S::from_f64_lossy(gamma))?;
    tape.exp(l)
}

/// `1 - gIoU` between predicted `[m, 2]` (start, end) rows and fixed target
/// rows. Returns `[m, 1]`.
pub fn giou_loss_tape<S: Scalar>(
    tape: &mut Tape<S>,
    pred: Var,
    target: &[[f64; 2]],
) -> Result<Var, TensorError> {
    let (m, w) = tape.value(pred).dims2()?;
    if w != 2 || m != target.len() {
        return Err(TensorError::Shape(format!(
            "gIoU loss of {:?} against {} targets",
            tape.shape(pred),
            target.len()
        )));
    }
    let tiny = S::from_f64_lossy(1e-12);
    let col = |f: fn(&[f64; 2]) -> f64| {
        Tensor::from_parts(
            vec![m, 1],
            target.iter().map(|t| S::from_f64_lossy(f(t))).collect(),
        )
    };
    let gs = tape.constant(col(|t| t[0]));
    let ge = tape.constant(col(|t| t[1]));
    let glen = tape.constant(col(|t| t[1] - t[0]));
    let ps = tape.slice_cols(pred, 0, 1)?;
    let pe = tape.slice_cols(pred, 1, 2)?;

    let lo = tape.maximum(ps, gs)?;
    let hi = tape.minimum(pe, ge)?;
    let overlap = tape.sub(hi, lo)?;
    let inter = tape.relu(overlap)?;
    let plen = tape.sub(pe, ps)?;
    let sum_len = tape.add(plen, glen)?;
    let union = tape.sub(sum_len, inter)?;
    let union = tape.clamp(union, tiny, S::infinity())?;
    let hull_hi = tape.maximum(pe, ge)?;
    let hull_lo = tape.minimum(ps, gs)?;
    let hull = tape.sub(hull_hi, hull_lo)?;
    let hull = tape.clamp(hull, tiny, S::infinity())?;

    let iou = tape.div(inter, union)?;
    let gap = tape.sub(hull, union)?;
    let penalty = tape.div(gap, hull)?;
    let giou = tape.sub(iou, penalty)?;
    let neg = tape.neg(giou)?;
    tape.add_scalar(neg, S::one())
}

/// Length-normalized caption cross-entropy,
/// `(1/T) Σ_t -log softmax(logits_t)[target_t]`, for `[T, V]` logits.
pub fn caption_ce<S: Scalar>(
    tape: &mut Tape<S>,
    logits: Var,
    targets: &[usize],
) -> Result<Var, TensorError> {
    let (t, _) = tape.value(logits).dims2()?;
    if targets.is_empty() {
        return Err(TensorError::Contract("caption of length zero".into()));
    }
    if targets.len() != t {
        return Err(TensorError::Shape(format!(
            "{} targets for {t} logit rows",
            targets.len()
        )));
    }
    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick(logp, targets)?;
    let total = tape.sum(picked)?;
    tape.scale(total, -S::one() / S::from_usize_lossy(t))
}

/// Batched caption cross-entropy for teacher-forced decoding.
///
/// `step_logits[t]` is `[M, V]`: the logits of all `M` captions at step `t`.
/// Caption `i` contributes steps `0..targets[i].len()` only. Returns the
/// per-caption length-normalized loss as `[M, 1]`.
pub fn caption_ce_batched<S: Scalar>(
    tape: &mut Tape<S>,
    step_logits: &[Var],
    targets: &[Vec<usize>],
) -> Result<Var, TensorError> {
    let m = targets.len();
    let steps = step_logits.len();
    if m == 0 || steps == 0 {
        return Err(TensorError::Contract("empty caption batch".into()));
    }
    if let Some(i) = targets.iter().position(Vec::is_empty) {
        return Err(TensorError::Contract(format!(
            "caption {i} has length zero"
        )));
    }
    if let Some(i) = targets.iter().position(|t| t.len() > steps) {
        return Err(TensorError::Shape(format!(
            "caption {i} longer than the {steps} decoded steps"
        )));
    }
    let mut columns = Vec::with_capacity(steps);
    for (t, &logits) in step_logits.iter().enumerate() {
        let idx: Vec<usize> = targets
            .iter()
            .map(|seq| seq.get(t).copied().unwrap_or(0))
            .collect();
        let logp = tape.log_softmax(logits)?;
        columns.push(tape.pick(logp, &idx)?);
    }
    let picked = tape.concat_cols(&columns)?;
    let weights = Tensor::from_parts(
        vec![m, steps],
        targets
            .iter()
            .flat_map(|seq| {
                let w = -S::one() / S::from_usize_lossy(seq.len());
                (0..steps).map(move |t| if t < seq.len() { w } else { S::zero() })
            })
            .collect(),
    );
    let weights = tape.constant(weights);
    let weighted = tape.mul(picked, weights)?;
    tape.sum_rows(weighted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_hand_values() {
        let f = FocalParams::default();
        let v = focal_loss(0.9, true, f);
        assert!((v - (-0.25 * 0.01 * 0.9f64.ln())).abs() < 1e-15);
        assert!((v - 2.634e-4).abs() < 1e-7);
        let v = focal_loss(0.5, false, f);
        assert!((v - 0.12997).abs() < 1e-5);
        assert!(focal_loss(1.0 - 1e-9, true, f) < 1e-12);
    }

    #[test]
    fn focal_degenerates_to_half_cross_entropy() {
        let f = FocalParams {
            alpha: 0.5,
            gamma: 0.0,
        };
        for &p in &[0.1, 0.3, 0.77] {
            assert!((focal_loss(p, true, f) - 0.5 * -p.ln()).abs() < 1e-15);
            assert!((focal_loss(p, false, f) - 0.5 * -(1.0 - p).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn focal_tape_matches_scalar() {
        let logits = [-1.3, 0.0, 2.2];
        let labels = [true, false, true];
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[3, 1], &logits).unwrap());
        let out = focal_loss_tape(&mut tape, x, &labels, FocalParams::default()).unwrap();
        for (i, (&z, &y)) in logits.iter().zip(&labels).enumerate() {
            let p = 1.0 / (1.0 + (-z).exp());
            let expected = focal_loss(p, y, FocalParams::default());
            assert!((tape.value(out).data()[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn caption_ce_uniform_is_log_vocab() {
        for t in [1usize, 3, 7] {
            let mut tape = Tape::<f64>::new();
            let logits = tape.constant(Tensor::zeros(&[t, 50]));
            let targets: Vec<usize> = (0..t).map(|i| i * 7 % 50).collect();
            let loss = caption_ce(&mut tape, logits, &targets).unwrap();
            assert!((tape.value(loss).item() - 50f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn caption_ce_hand_fixture() {
        let rows = [
            [1.0, 2.0, 0.5, -1.0],
            [0.0, 0.0, 3.0, 1.0],
            [2.0, -2.0, 0.0, 0.0],
        ];
        let targets = [1usize, 2, 0];
        let mut by_hand = 0.0;
        for (row, &t) in rows.iter().zip(&targets) {
            let z: f64 = row.iter().map(|v: &f64| v.exp()).sum();
            by_hand += -(row[t].exp() / z).ln();
        }
        by_hand /= 3.0;
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(Tensor::from_f64(&[3, 4], &rows.concat()).unwrap());
        let loss = caption_ce(&mut tape, logits, &targets).unwrap();
        assert!((tape.value(loss).item() - by_hand).abs() < 1e-14);
    }

    #[test]
    fn caption_ce_confident_limit_and_errors() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(Tensor::from_f64(&[1, 3], &[0.0, 60.0, 0.0]).unwrap());
        let loss = caption_ce(&mut tape, logits, &[1]).unwrap();
        assert!(tape.value(loss).item() < 1e-20);
        let empty = tape.constant(Tensor::zeros(&[1, 3]));
        assert!(caption_ce(&mut tape, empty, &[]).is_err());
        assert!(caption_ce(&mut tape, empty, &[5]).is_err());
    }

    #[test]
    fn batched_caption_ce_matches_single() {
        let mut tape = Tape::<f64>::new();
        let step0 =
            tape.constant(Tensor::from_f64(&[2, 3], &[0.1, 0.5, -0.2, 1.0, 0.0, 0.3]).unwrap());
        let step1 =
            tape.constant(Tensor::from_f64(&[2, 3], &[2.0, 0.0, 0.0, -1.0, 0.4, 0.2]).unwrap());
        let targets = vec![vec![1, 0], vec![2]];
        let batched = caption_ce_batched(&mut tape, &[step0, step1], &targets).unwrap();
        let got = tape.value(batched).to_f64_vec();

        let a = tape.constant(Tensor::from_f64(&[2, 3], &[0.1, 0.5, -0.2, 2.0, 0.0, 0.0]).unwrap());
        let a = caption_ce(&mut tape, a, &[1, 0]).unwrap();
        let b = tape.constant(Tensor::from_f64(&[1, 3], &[1.0, 0.0, 0.3]).unwrap());
        let b = caption_ce(&mut tape, b, &[2]).unwrap();
        assert!((got[0] - tape.value(a).item()).abs() < 1e-14);
        assert!((got[1] - tape.value(b).item()).abs() < 1e-14);
    }

    #[test]
    fn giou_tape_matches_geometry() {
        use crate::geometry::{giou1d, Segment};
        let preds = [[0.2, 0.5], [0.0, 0.2], [0.3, 0.9]];
        let gts = [[0.4, 0.8], [0.8, 1.0], [0.3, 0.9]];
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::from_f64(&[3, 2], &preds.concat()).unwrap());
        let loss = giou_loss_tape(&mut tape, p, &gts).unwrap();
        for i in 0..3 {
            let a = Segment::new(preds[i][0], preds[i][1]).unwrap();
            let b = Segment::new(gts[i][0], gts[i][1]).unwrap();
            assert!((tape.value(loss).data()[i] - (1.0 - giou1d(&a, &b))).abs() < 1e-12);
        }
    }
}
