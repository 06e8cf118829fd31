use super::network::Forward;
use super::{Model, ModelError, VideoInput};
use crate::diffcore::Tape;
use crate::geometry::Segment;
use crate::scalar::Scalar;

/// One decoded query.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonPrediction {
    /// Row of the query: person queries first, then no-object padding.
    pub query_index: usize,
    /// The tracked person behind the query, if any.
    pub person_index: Option<usize>,
    pub segment: Segment,
    pub confidence: f64,
    /// Greedy word ids; ends with `<eos>` unless the length limit hit.
    pub tokens: Vec<usize>,
    /// `(segment, confidence)` after every decoder layer, last one equal to
    /// the fields above.
    pub layers: Vec<(Segment, f64)>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<S: Scalar> Model<S> {
    /// Every query's prediction in query order, without filtering.
    pub fn predict(&self, input: &VideoInput<S>) -> Result<Vec<PersonPrediction>, ModelError> {
        self.check_input(input)?;
        let mut tape = if self.cfg.checked {
            Tape::new()
        } else {
            Tape::unchecked()
        };
        let bound = self.params.bind_frozen(&mut tape);
        let net = self.net(&bound);
        let Forward {
            layers,
            caption,
            num_queries,
            ..
        } = net.forward(&mut tape, input)?;
        let Some(ctx) = caption else {
            return Ok(Vec::new());
        };
        let last = *layers.last().expect("at least one decoder layer");
        let refs = tape.sigmoid(last.ref_logits)?;
        let rows = net.caption_rows(&mut tape, last.queries, refs)?;
        let captions = net.caption_greedy(&mut tape, &ctx, &rows, num_queries)?;

        let per_layer: Vec<Vec<(Segment, f64)>> = layers
            .iter()
            .map(|l| {
                let seg = tape.value(l.loc.segments).to_f64_vec();
                let conf = tape.value(l.loc.confidence_logits).to_f64_vec();
                (0..num_queries)
                    .map(|q| {
                        let start = seg[2 * q].clamp(0.0, 1.0);
                        let end = seg[2 * q + 1].clamp(start, 1.0);
                        let segment = Segment::new(start, end).expect("clamped into [0, 1]");
                        (segment, sigmoid(conf[q]))
                    })
                    .collect()
            })
            .collect();
        Ok(captions
            .into_iter()
            .enumerate()
            .map(|(q, tokens)| {
                let layers: Vec<(Segment, f64)> = per_layer.iter().map(|l| l[q]).collect();
                let (segment, confidence) = *layers.last().expect("non-empty");
                PersonPrediction {
                    query_index: q,
                    person_index: input.persons.get(q).map(|p| p.person_index),
                    segment,
                    confidence,
                    tokens,
                    layers,
                }
            })
            .collect())
    }

    /// Predictions at or above the confidence threshold, sorted by start
    /// time (query order on ties).
    pub fn infer(&self, input: &VideoInput<S>) -> Result<Vec<PersonPrediction>, ModelError> {
        let mut kept: Vec<PersonPrediction> = self
            .predict(input)?
            .into_iter()
            .filter(|p| p.confidence >= self.cfg.confidence_threshold)
            .collect();
        kept.sort_by(|a, b| {
            a.segment
                .start()
                .total_cmp(&b.segment.start())
                .then(a.query_index.cmp(&b.query_index))
        });
        Ok(kept)
    }

    /// The `k` most confident predictions, sorted like [`Model::infer`].
    pub fn infer_top_k(
        &self,
        input: &VideoInput<S>,
        k: usize,
    ) -> Result<Vec<PersonPrediction>, ModelError> {
        let mut all = self.predict(input)?;
        all.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.query_index.cmp(&b.query_index))
        });
        all.truncate(k);
        all.sort_by(|a, b| {
            a.segment
                .start()
                .total_cmp(&b.segment.start())
                .then(a.query_index.cmp(&b.query_index))
        });
        Ok(all)
    }
}
