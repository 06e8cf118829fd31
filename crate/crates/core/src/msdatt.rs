//! Deformable attention over temporal feature pyramids.
//!
//! Both kernels sample a handful of points around a scalar reference
//! coordinate on every pyramid level. [`msdatt`] mixes the samples with
//! weights predicted directly from the query; [`dsa`] instead treats the
//! samples as keys and values of ordinary scaled dot-product attention,
//! which keeps the caption context local to the person's time span.
//!
//! All levels are addressed with the same normalized coordinate `p ∈ [0, 1]`
//! and a sample at `p` reads position `u = p·(T_l − 1)` by linear
//! interpolation. Samples outside the map read zeros.

use crate::diffcore::{Tape, Tensor, TensorError, Var};
use crate::scalar::Scalar;

/// Levels of a temporal pyramid, finest first. Level `l + 1` has
/// `ceil(T_l / 2)` rows.
#[derive(Clone, Debug)]
pub struct FeaturePyramid<S> {
    levels: Vec<Tensor<S>>,
}

impl<S: Scalar> FeaturePyramid<S> {
    pub fn new(levels: Vec<Tensor<S>>) -> Result<Self, TensorError> {
        let Some(first) = levels.first() else {
            return Err(TensorError::Shape(
                "a pyramid needs at least one level".into(),
            ));
        };
        let d = first.dims2()?.1;
        for level in &levels {
            if level.dims2()?.1 != d {
                return Err(TensorError::Shape("pyramid levels differ in width".into()));
            }
        }
        Ok(Self { levels })
    }

    /// Builds `levels` scales from `base` by repeated stride-2 average
    /// pooling.
    pub fn from_base(base: Tensor<S>, levels: usize) -> Result<Self, TensorError> {
        if levels == 0 {
            return Err(TensorError::Shape(
                "a pyramid needs at least one level".into(),
            ));
        }
        let mut out = vec![base];
        while out.len() < levels {
            let prev = out.last().expect("non-empty");
            let pool = pool_matrix::<S>(prev.shape()[0]);
            out.push(pool.matmul(prev)?);
        }
        Self::new(out)
    }

    pub fn levels(&self) -> &[Tensor<S>] {
        &self.levels
    }

    pub fn width(&self) -> usize {
        self.levels[0].shape()[1]
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.shape()[0]).collect()
    }
}

/// Number of rows after one pooling step.
pub fn pooled_len(t: usize) -> usize {
    t.div_ceil(2)
}

/// `[ceil(T/2), T]` matrix averaging rows `2i` and `2i + 1`; an odd trailing
/// row passes through unchanged.
pub fn pool_matrix<S: Scalar>(t: usize) -> Tensor<S> {
    let rows = pooled_len(t);
    let mut data = vec![S::zero(); rows * t];
    for i in 0..rows {
        let hi = (2 * i + 2).min(t);
        let w = S::one() / S::from_usize_lossy(hi - 2 * i);
        for j in 2 * i..hi {
            data[i * t + j] = w;
        }
    }
    Tensor::from_parts(vec![rows, t], data)
}

/// Pools `base` into `levels` scales on the tape.
pub fn pyramid_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    base: Var,
    levels: usize,
) -> Result<Vec<Var>, TensorError> {
    let mut out = vec![base];
    while out.len() < levels {
        let prev = *out.last().expect("non-empty");
        let pool = tape.constant(pool_matrix(tape.shape(prev)[0]));
        out.push(tape.matmul(pool, prev)?);
    }
    Ok(out)
}

/// Reads `level` at normalized coordinate `p` by linear interpolation,
/// returning zeros outside the map.
pub fn sample_linear<S: Scalar>(level: &Tensor<S>, p: S) -> Result<Vec<S>, TensorError> {
    let (t, d) = level.dims2()?;
    let u = p * S::from_usize_lossy(t - 1);
    if !(u >= S::zero() && u <= S::from_usize_lossy(t - 1)) {
        return Ok(vec![S::zero(); d]);
    }
    let i0 = u.floor().to_usize().unwrap_or(0).min(t - 1);
    let i1 = (i0 + 1).min(t - 1);
    let w1 = u - S::from_usize_lossy(i0);
    let w0 = S::one() - w1;
    let (r0, r1) = (level.row(i0), level.row(i1));
    Ok((0..d).map(|c| w0 * r0[c] + w1 * r1[c]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingSpec {
    pub heads: usize,
    pub levels: usize,
    pub points: usize,
}

impl SamplingSpec {
    pub fn columns(&self) -> usize {
        self.heads * self.levels * self.points
    }

    pub fn validate(&self, d_model: usize) -> Result<(), TensorError> {
        if self.heads == 0 || self.levels == 0 || self.points == 0 {
            return Err(TensorError::Shape(
                "heads, levels and points must be positive".into(),
            ));
        }
        if !d_model.is_multiple_of(self.heads) {
            return Err(TensorError::Shape(format!(
                "d_model {d_model} is not divisible by {} heads",
                self.heads
            )));
        }
        Ok(())
    }

    /// Initial offset bias: points spread symmetrically around the
    /// reference, one pyramid cell apart on each level, mirrored between
    /// alternate heads.
    pub fn offset_bias_init<S: Scalar>(&self, level_lengths: &[usize]) -> Tensor<S> {
        let mut data = Vec::with_capacity(self.columns());
        for h in 0..self.heads {
            let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
            for l in 0..self.levels {
                let t = level_lengths.get(l).copied().unwrap_or(1).max(2) as f64;
                for k in 0..self.points {
                    let spread = k as f64 - (self.points as f64 - 1.0) / 2.0;
                    data.push(S::from_f64_lossy(sign * spread / (t - 1.0)));
                }
            }
        }
        Tensor::from_parts(vec![1, self.columns()], data)
    }
}

/// Parameters of one multi-scale deformable attention block, all as tape
/// handles. Shapes: `offset_w`/`attn_w` `[d, H·L·K]`, biases `[1, ·]`,
/// `value_w`/`out_w` `[d, d]`.
#[derive(Clone, Copy, Debug)]
pub struct MsdAttWeights {
    pub offset_w: Var,
    pub offset_b: Var,
    pub attn_w: Var,
    pub attn_b: Var,
    pub value_w: Var,
    pub value_b: Var,
    pub out_w: Var,
    pub out_b: Var,
}

fn linear<S: Scalar>(tape: &mut Tape<S>, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Multi-scale deformable attention for `Q` queries `[Q, d]` with scalar
/// reference points `[Q, 1]` over pyramid levels `[T_l, d]`.
///
/// Per head, `A = softmax(q·W_A)` over the `L·K` samples and the head output
/// is `Σ A · sample(W_v x^l, p + Δp)`; heads are concatenated and passed
/// through the output projection.
pub fn msdatt<S: Scalar>(
    tape: &mut Tape<S>,
    spec: SamplingSpec,
    w: &MsdAttWeights,
    queries: Var,
    refs: Var,
    pyramid: &[Var],
) -> Result<Var, TensorError> {
    let (q, d) = tape.value(queries).dims2()?;
    spec.validate(d)?;
    if pyramid.len() != spec.levels {
        return Err(TensorError::Shape(format!(
            "pyramid has {} levels, attention expects {}",
            pyramid.len(),
            spec.levels
        )));
    }
    if tape.shape(refs) != [q, 1] {
        return Err(TensorError::Shape(format!(
            "reference points {:?} for {q} queries",
            tape.shape(refs)
        )));
    }
    let values = pyramid
        .iter()
        .map(|&x| linear(tape, x, w.value_w, w.value_b))
        .collect::<Result<Vec<_>, _>>()?;
    let offsets = linear(tape, queries, w.offset_w, w.offset_b)?;
    let loc = tape.add_col(offsets, refs)?;
    let logits = linear(tape, queries, w.attn_w, w.attn_b)?;
    let logits = tape.reshape(logits, &[q * spec.heads, spec.levels * spec.points])?;
    let attn = tape.softmax(logits, 1)?;
    let sampled = tape.deform_sample(&values, loc, spec.heads, spec.points)?;
    let heads = tape.group_weighted_sum(attn, sampled)?;
    let merged = tape.reshape(heads, &[q, d])?;
    linear(tape, merged, w.out_w, w.out_b)
}

/// Deformable soft attention parameters. `offset_w` is `[d_h + d_q, L·K]`,
/// `query_w` `[d_h + d_q, d_k]`, `key_w` `[d, d_k]`, `value_w` `[d, d_v]`.
#[derive(Clone, Copy, Debug)]
pub struct DsaWeights {
    pub offset_w: Var,
    pub offset_b: Var,
    pub query_w: Var,
    pub key_w: Var,
    pub key_b: Var,
    pub value_w: Var,
    pub value_b: Var,
}

/// Key- and value-projected pyramid levels. Projecting once per forward
/// pass lets every decoding step reuse them.
#[derive(Clone, Debug)]
pub struct DsaMemory {
    pub keys: Vec<Var>,
    pub values: Vec<Var>,
    pub points: usize,
}

pub fn dsa_memory<S: Scalar>(
    tape: &mut Tape<S>,
    w: &DsaWeights,
    pyramid: &[Var],
    points: usize,
) -> Result<DsaMemory, TensorError> {
    let mut keys = Vec::with_capacity(pyramid.len());
    let mut values = Vec::with_capacity(pyramid.len());
    for &x in pyramid {
        keys.push(linear(tape, x, w.key_w, w.key_b)?);
        values.push(linear(tape, x, w.value_w, w.value_b)?);
    }
    Ok(DsaMemory {
        keys,
        values,
        points,
    })
}

/// Deformable soft attention. `[h ; q]` (`[Q, d_h + d_q]`) predicts `L·K`
/// offsets around the reference points `[Q, 1]`; the sampled keys and values
/// then enter scaled dot-product attention with query `[h ; q]·W_q`.
/// Returns the context `[Q, d_v]` and the attention weights `[Q, L·K]`.
pub fn dsa<S: Scalar>(
    tape: &mut Tape<S>,
    w: &DsaWeights,
    memory: &DsaMemory,
    hidden: Var,
    person: Var,
    refs: Var,
) -> Result<(Var, Var), TensorError> {
    let x = tape.concat_cols(&[hidden, person])?;
    let offsets = linear(tape, x, w.offset_w, w.offset_b)?;
    let loc = tape.add_col(offsets, refs)?;
    let keys = tape.deform_sample(&memory.keys, loc, 1, memory.points)?;
    let values = tape.deform_sample(&memory.values, loc, 1, memory.points)?;
    let query = tape.matmul(x, w.query_w)?;
    let dk = tape.shape(query)[1];
    let scores = tape.group_dot(query, keys)?;
    let scores = tape.scale(scores, S::one() / S::from_usize_lossy(dk).sqrt())?;
    let attn = tape.softmax(scores, 1)?;
    let context = tape.group_weighted_sum(attn, values)?;
    Ok((context, attn))
}
