use super::network::Net;
use crate::diffcore::{Tape, Tensor, TensorError, Var};
use crate::msdatt::{dsa, dsa_memory, DsaMemory, DsaWeights};
use crate::scalar::Scalar;
use crate::setcrit::caption_ce_batched;
use crate::text::Vocab;

/// Per-video tensors shared by every caption decoding step: the projected
/// key/value pyramid and the embedding table already multiplied into the
/// LSTM input weights.
#[derive(Clone, Debug)]
pub struct CaptionContext {
    pub memory: DsaMemory,
    /// `[V, 4H]`.
    pub embed_gates: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// LSTM cell from precomputed gate pre-activations `[M, 4H]` in the order
/// input, forget, candidate, output.
pub fn lstm_cell<S: Scalar>(
    tape: &mut Tape<S>,
    gates: Var,
    c_prev: Var,
) -> Result<LstmState, TensorError> {
    let (_, four_h) = tape.value(gates).dims2()?;
    let h = four_h / 4;
    let i = tape.slice_cols(gates, 0, h)?;
    let f = tape.slice_cols(gates, h, 2 * h)?;
    let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
    let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

impl CaptionContext {
    pub fn new<S: Scalar>(
        net: &Net<'_>,
        tape: &mut Tape<S>,
        pyramid: &[Var],
    ) -> Result<Self, TensorError> {
        let memory = dsa_memory(tape, &net.dsa_weights(), pyramid, net.cfg.points)?;
        let embed_gates = tape.matmul(net.params.get("cap.embed"), net.params.get("cap.w_e"))?;
        Ok(Self {
            memory,
            embed_gates,
        })
    }
}

/// Query-dependent pieces fixed for a whole caption.
pub struct CaptionRows {
    /// `[M, d]` decoded person queries.
    pub queries: Var,
    /// `[M, 1]` reference points in `(0, 1)`.
    pub refs: Var,
    /// `[M, 4H]` = queries · W_q + b.
    query_gates: Var,
}

impl Net<'_> {
    pub(crate) fn dsa_weights(&self) -> DsaWeights {
        let g = |f: &str| self.params.get(&format!("dsa.{f}"));
        DsaWeights {
            offset_w: g("offset_w"),
            offset_b: g("offset_b"),
            query_w: g("query_w"),
            key_w: g("key_w"),
            key_b: g("key_b"),
            value_w: g("value_w"),
            value_b: g("value_b"),
        }
    }

    pub fn caption_rows<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        queries: Var,
        refs: Var,
    ) -> Result<CaptionRows, TensorError> {
        let qg = tape.matmul(queries, self.params.get("cap.w_q"))?;
        let query_gates = tape.add_row(qg, self.params.get("cap.b"))?;
        Ok(CaptionRows {
            queries,
            refs,
            query_gates,
        })
    }

    pub fn initial_state<S: Scalar>(&self, tape: &mut Tape<S>, rows: usize) -> LstmState {
        let zeros = Tensor::zeros(&[rows, self.cfg.lstm_hidden]);
        LstmState {
            h: tape.constant(zeros.clone()),
            c: tape.constant(zeros),
        }
    }

    /// One decoding step for all rows: soft-attend around the reference
    /// point with `[h ; q]`, feed `[z ; q ; embed(w_prev)]` to the LSTM and
    /// project the new hidden state to word logits `[M, V]`.
    pub fn caption_step<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        ctx: &CaptionContext,
        rows: &CaptionRows,
        state: LstmState,
        prev_tokens: &[usize],
    ) -> Result<(LstmState, Var), TensorError> {
        let vocab = self.cfg.vocab_size;
        if let Some(&bad) = prev_tokens.iter().find(|&&t| t >= vocab) {
            return Err(TensorError::Contract(format!(
                "token {bad} outside vocabulary of {vocab}"
            )));
        }
        let (z, _) = dsa(
            tape,
            &self.dsa_weights(),
            &ctx.memory,
            state.h,
            rows.queries,
            rows.refs,
        )?;
        let zg = tape.matmul(z, self.params.get("cap.w_z"))?;
        let hg = tape.matmul(state.h, self.params.get("cap.w_h"))?;
        let eg = tape.gather_rows(ctx.embed_gates, prev_tokens)?;
        let gates = tape.add(zg, hg)?;
        let gates = tape.add(gates, eg)?;
        let gates = tape.add(gates, rows.query_gates)?;
        let next = lstm_cell(tape, gates, state.c)?;
        let logits = tape.matmul(next.h, self.params.get("cap.out.w"))?;
        let logits = tape.add_row(logits, self.params.get("cap.out.b"))?;
        Ok((next, logits))
    }

    /// Teacher-forced, length-normalized cross-entropy of each row's caption
    /// (tokens without `<bos>`/`<eos>`; `<eos>` is appended as the final
    /// target). Captions longer than `max_caption_len - 1` words are cut.
    /// Returns `[M, 1]`.
    pub fn caption_loss<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        ctx: &CaptionContext,
        rows: &CaptionRows,
        captions: &[&[usize]],
    ) -> Result<Var, TensorError> {
        let max_words = self.cfg.max_caption_len - 1;
        let targets: Vec<Vec<usize>> = captions
            .iter()
            .map(|c| {
                let mut t: Vec<usize> = c.iter().copied().take(max_words).collect();
                t.push(Vocab::EOS);
                t
            })
            .collect();
        let steps = targets.iter().map(Vec::len).max().unwrap_or(0);
        let mut state = self.initial_state(tape, captions.len());
        let mut logits = Vec::with_capacity(steps);
        for t in 0..steps {
            let prev: Vec<usize> = targets
                .iter()
                .map(|seq| match t {
                    0 => Vocab::BOS,
                    _ => seq.get(t - 1).copied().unwrap_or(Vocab::PAD),
                })
                .collect();
            let (next, step_logits) = self.caption_step(tape, ctx, rows, state, &prev)?;
            state = next;
            logits.push(step_logits);
        }
        caption_ce_batched(tape, &logits, &targets)
    }

    /// Greedy decoding; ties go to the lowest token id. Each caption stops
    /// after `<eos>` (included in the output) or at `max_caption_len`.
    pub fn caption_greedy<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        ctx: &CaptionContext,
        rows: &CaptionRows,
        count: usize,
    ) -> Result<Vec<Vec<usize>>, TensorError> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); count];
        let mut prev = vec![Vocab::BOS; count];
        let mut state = self.initial_state(tape, count);
        for _ in 0..self.cfg.max_caption_len {
            if out.iter().all(|c| c.last() == Some(&Vocab::EOS)) {
                break;
            }
            let (next, logits) = self.caption_step(tape, ctx, rows, state, &prev)?;
            state = next;
            let values = tape.value(logits);
            for (row, caption) in out.iter_mut().enumerate() {
                if caption.last() == Some(&Vocab::EOS) {
                    prev[row] = Vocab::PAD;
                    continue;
                }
                let best = argmax(values.row(row));
                caption.push(best);
                prev[row] = best;
            }
        }
        Ok(out)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 5]), 0);
    }

    #[test]
    fn lstm_cell_hand_value() {
        let mut tape = Tape::<f64>::new();
        // H = 1: gates (i, f, g, o) = (0, 0, 0, 0) with c_prev = 2
        let gates = tape.constant(Tensor::zeros(&[1, 4]));
        let c = tape.constant(Tensor::full(&[1, 1], 2.0));
        let s = lstm_cell(&mut tape, gates, c).unwrap();
        assert_eq!(tape.value(s.c).item(), 1.0);
        assert!((tape.value(s.h).item() - 0.5 * 1f64.tanh()).abs() < 1e-15);
    }
}
