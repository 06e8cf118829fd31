use super::caption::CaptionContext;
use super::{ModelConfig, ModelError, VideoInput};
use crate::diffcore::{BoundParams, Tape, Tensor, TensorError, Var};
use crate::msdatt::{msdatt, pyramid_on_tape, MsdAttWeights};
use crate::scalar::Scalar;

/// Scalars appended to each person feature before projection: the track
/// center and width.
pub const EXTENT_FEATURES: usize = 2;

/// Extent inputs enter the query projection as logits, the same space the
/// reference point and the width offset live in.
pub fn extent_logit(v: f64) -> f64 {
    let v = v.clamp(1e-3, 1.0 - 1e-3);
    (v / (1.0 - v)).ln()
}

const LN_EPS: f64 = 1e-5;

/// `[T, d]` sinusoidal encoding: `sin(t / 10000^(2i/d))` on even channels,
/// the matching cosine on odd ones.
pub fn positional_encoding<S: Scalar>(t: usize, d: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(t * d);
    for pos in 0..t {
        for c in 0..d {
            let i = (c / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
            data.push(S::from_f64_lossy(if c % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }));
        }
    }
    Tensor::new(&[t, d], data).expect("positive extents")
}

/// The network bound to a tape: configuration plus parameter handles.
pub struct Net<'a> {
    pub cfg: &'a ModelConfig,
    pub params: &'a BoundParams,
}

#[derive(Clone, Copy, Debug)]
pub struct LocalizationOutput {
    /// `[N, 2]` (start, end) rows.
    pub segments: Var,
    /// `[N, 1]` foreground logits.
    pub confidence_logits: Var,
}

/// Queries and reference points after one decoder layer, with that layer's
/// localization head already applied.
#[derive(Clone, Copy, Debug)]
pub struct DecodedLayer {
    /// `[N, d]`.
    pub queries: Var,
    /// `[N, 1]` logit of the reference point.
    pub ref_logits: Var,
    pub loc: LocalizationOutput,
}

pub struct Forward {
    pub pyramid: Vec<Var>,
    pub layers: Vec<DecodedLayer>,
    pub caption: Option<CaptionContext>,
    /// Person queries first, then any no-object padding.
    pub num_queries: usize,
}

impl Net<'_> {
    fn p(&self, name: &str) -> Var {
        self.params.get(name)
    }

    fn linear<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        name: &str,
    ) -> Result<Var, TensorError> {
        let y = tape.matmul(x, self.p(&format!("{name}.w")))?;
        tape.add_row(y, self.p(&format!("{name}.b")))
    }

    fn layer_norm<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        name: &str,
    ) -> Result<Var, TensorError> {
        let n = tape.layer_norm(x, S::from_f64_lossy(LN_EPS))?;
        let n = tape.mul_row(n, self.p(&format!("{name}.g")))?;
        tape.add_row(n, self.p(&format!("{name}.b")))
    }

    fn ffn<S: Scalar>(&self, tape: &mut Tape<S>, x: Var, name: &str) -> Result<Var, TensorError> {
        let h = tape.matmul(x, self.p(&format!("{name}.w1")))?;
        let h = tape.add_row(h, self.p(&format!("{name}.b1")))?;
        let h = tape.relu(h)?;
        let y = tape.matmul(h, self.p(&format!("{name}.w2")))?;
        tape.add_row(y, self.p(&format!("{name}.b2")))
    }

    fn msdatt_weights(&self, name: &str) -> MsdAttWeights {
        let g = |f: &str| self.p(&format!("{name}.{f}"));
        MsdAttWeights {
            offset_w: g("offset_w"),
            offset_b: g("offset_b"),
            attn_w: g("attn_w"),
            attn_b: g("attn_b"),
            value_w: g("value_w"),
            value_b: g("value_b"),
            out_w: g("out_w"),
            out_b: g("out_b"),
        }
    }

    /// Frame features `[T, C]` to an encoded pyramid of `levels` scales.
    pub fn encode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        frames: Var,
    ) -> Result<Vec<Var>, TensorError> {
        let (t, _) = tape.value(frames).dims2()?;
        let d = self.cfg.d_model;
        let mut x = self.linear(tape, frames, "enc.in")?;
        let pos = tape.constant(positional_encoding(t, d));
        let denom = S::from_usize_lossy(t.saturating_sub(1).max(1));
        let refs = Tensor::new(
            &[t, 1],
            (0..t).map(|i| S::from_usize_lossy(i) / denom).collect(),
        )?;
        let refs = tape.constant(refs);
        for i in 0..self.cfg.enc_layers {
            let query = tape.add(x, pos)?;
            let pyramid = pyramid_on_tape(tape, x, self.cfg.levels)?;
            let w = self.msdatt_weights(&format!("enc.{i}.attn"));
            let attended = msdatt(tape, self.cfg.sampling(), &w, query, refs, &pyramid)?;
            let r = tape.add(x, attended)?;
            x = self.layer_norm(tape, r, &format!("enc.{i}.ln1"))?;
            let f = self.ffn(tape, x, &format!("enc.{i}.ffn"))?;
            let r = tape.add(x, f)?;
            x = self.layer_norm(tape, r, &format!("enc.{i}.ln2"))?;
        }
        pyramid_on_tape(tape, x, self.cfg.levels)
    }

    /// Person queries `[N, d]` and reference logits `[N, 1]`, padded with
    /// no-object queries up to the configured budget. `None` when there is
    /// nothing to decode.
    pub fn project_queries<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        input: &VideoInput<S>,
    ) -> Result<Option<(Var, Var)>, TensorError> {
        let n = input.persons.len();
        let budget = self.cfg.query_budget;
        let mut queries = Vec::new();
        let mut refs = Vec::new();
        if n > 0 {
            let width = input.persons[0].feature.len() + EXTENT_FEATURES;
            let mut rows = Vec::with_capacity(n * width);
            for person in &input.persons {
                rows.extend_from_slice(&person.feature);
                rows.push(S::from_f64_lossy(extent_logit(person.extent.center())));
                rows.push(S::from_f64_lossy(extent_logit(person.extent.width())));
            }
            let x = tape.constant(Tensor::new(&[n, width], rows)?);
            let q = self.linear(tape, x, "query")?;
            let r = self.linear(tape, q, "ref")?;
            queries.push(q);
            refs.push(r);
        }
        if budget > n {
            let idx: Vec<usize> = (0..budget - n).collect();
            queries.push(tape.gather_rows(self.p("noobj.emb"), &idx)?);
            refs.push(tape.gather_rows(self.p("noobj.ref"), &idx)?);
        }
        match queries.len() {
            0 => Ok(None),
            1 => Ok(Some((queries[0], refs[0]))),
            _ => Ok(Some((
                tape.concat_rows(&queries)?,
                tape.concat_rows(&refs)?,
            ))),
        }
    }

    fn self_attention<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        x: Var,
        name: &str,
    ) -> Result<Var, TensorError> {
        let heads = self.cfg.heads;
        let dh = self.cfg.d_model / heads;
        let proj = |tape: &mut Tape<S>, w: &str, b: &str| -> Result<Var, TensorError> {
            let y = tape.matmul(x, self.p(&format!("{name}.{w}")))?;
            tape.add_row(y, self.p(&format!("{name}.{b}")))
        };
        let q = proj(tape, "wq", "bq")?;
        let k = proj(tape, "wk", "bk")?;
        let v = proj(tape, "wv", "bv")?;
        let scale = S::one() / S::from_usize_lossy(dh).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, (h + 1) * dh)?;
            let kh = tape.slice_cols(k, h * dh, (h + 1) * dh)?;
            let vh = tape.slice_cols(v, h * dh, (h + 1) * dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let attn = tape.softmax(scores, 1)?;
            outs.push(tape.matmul(attn, vh)?);
        }
        let merged = tape.concat_cols(&outs)?;
        let y = tape.matmul(merged, self.p(&format!("{name}.wo")))?;
        tape.add_row(y, self.p(&format!("{name}.bo")))
    }

    /// Runs every decoder layer and applies the localization head after each.
    pub fn decode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        queries: Var,
        ref_logits: Var,
        pyramid: &[Var],
    ) -> Result<Vec<DecodedLayer>, TensorError> {
        let mut q = queries;
        let mut r = ref_logits;
        let mut layers = Vec::with_capacity(self.cfg.dec_layers);
        for i in 0..self.cfg.dec_layers {
            let sa = self.self_attention(tape, q, &format!("dec.{i}.sa"))?;
            let x = tape.add(q, sa)?;
            q = self.layer_norm(tape, x, &format!("dec.{i}.ln1"))?;

            let p = tape.sigmoid(r)?;
            let w = self.msdatt_weights(&format!("dec.{i}.ca"));
            let ca = msdatt(tape, self.cfg.sampling(), &w, q, p, pyramid)?;
            let x = tape.add(q, ca)?;
            q = self.layer_norm(tape, x, &format!("dec.{i}.ln2"))?;

            let f = self.ffn(tape, q, &format!("dec.{i}.ffn"))?;
            let x = tape.add(q, f)?;
            q = self.layer_norm(tape, x, &format!("dec.{i}.ln3"))?;

            let delta = self.linear(tape, q, &format!("dec.{i}.refine"))?;
            r = tape.add(r, delta)?;
            let loc = self.localization_head(tape, q, r)?;
            layers.push(DecodedLayer {
                queries: q,
                ref_logits: r,
                loc,
            });
        }
        Ok(layers)
    }

    /// Segment and confidence for decoded queries `[N, d]` anchored at
    /// reference logits `[N, 1]`.
    ///
    /// center = σ(logit p + δc), width = σ(δw); the segment is
    /// `[max(0, c − w/2), min(1, c + w/2)]`, written with ReLUs so it stays
    /// differentiable.
    pub fn localization_head<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        queries: Var,
        ref_logits: Var,
    ) -> Result<LocalizationOutput, TensorError> {
        let h = self.linear(tape, queries, "loc.1")?;
        let h = tape.relu(h)?;
        let h = self.linear(tape, h, "loc.2")?;
        let h = tape.relu(h)?;
        let delta = self.linear(tape, h, "loc.3")?;
        let dc = tape.slice_cols(delta, 0, 1)?;
        let dw = tape.slice_cols(delta, 1, 2)?;
        let c = tape.add(ref_logits, dc)?;
        let center = tape.sigmoid(c)?;
        let width = tape.sigmoid(dw)?;
        let half = tape.scale(width, S::from_f64_lossy(0.5))?;
        let lo = tape.sub(center, half)?;
        let start = tape.relu(lo)?;
        let hi = tape.add(center, half)?;
        let neg = tape.neg(hi)?;
        let room = tape.add_scalar(neg, S::one())?;
        let room = tape.relu(room)?;
        let neg_room = tape.neg(room)?;
        let end = tape.add_scalar(neg_room, S::one())?;
        let segments = tape.concat_cols(&[start, end])?;
        let confidence_logits = self.linear(tape, queries, "conf")?;
        Ok(LocalizationOutput {
            segments,
            confidence_logits,
        })
    }

    /// Encoder, query projection, decoder and caption context in one pass.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        input: &VideoInput<S>,
    ) -> Result<Forward, ModelError> {
        let frames = tape.constant(input.frames.clone());
        let pyramid = self.encode(tape, frames)?;
        let Some((queries, refs)) = self.project_queries(tape, input)? else {
            return Ok(Forward {
                pyramid,
                layers: Vec::new(),
                caption: None,
                num_queries: 0,
            });
        };
        let num_queries = tape.shape(queries)[0];
        let layers = self.decode(tape, queries, refs, &pyramid)?;
        let caption = CaptionContext::new(self, tape, &pyramid)?;
        Ok(Forward {
            pyramid,
            layers,
            caption: Some(caption),
            num_queries,
        })
    }
}
