use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Forward, Net};
use super::{Model, ModelError, TrainingVideo};
use crate::diffcore::{Adam, BoundParams, Tape};
use crate::scalar::Scalar;
use crate::setcrit::{set_loss, LayerLoss, LayerOutput, SetLoss};

/// What happened at one optimizer step.
#[derive(Clone, Debug)]
pub struct StepLog {
    pub step: usize,
    pub video: String,
    pub loss: f64,
    pub layers: Vec<LayerLoss>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    /// Total loss before each update, one entry per step.
    pub losses: Vec<f64>,
}

/// Keeps the shuffling stream apart from the initialization stream.
const ORDER_STREAM: u64 = 0x5e_ed0f_0dde;

impl<S: Scalar> Model<S> {
    pub fn net<'a>(&'a self, bound: &'a BoundParams) -> Net<'a> {
        Net {
            cfg: &self.cfg,
            params: bound,
        }
    }

    /// Set-prediction loss of one video, summed over every decoder layer.
    /// `None` when the video yields no queries at all.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape<S>,
        bound: &BoundParams,
        video: &TrainingVideo<S>,
    ) -> Result<Option<SetLoss>, ModelError> {
        self.check_input(&video.input)?;
        if video.segments.len() != video.captions.len() {
            return Err(ModelError::Data(format!(
                "video {}: {} segments but {} captions",
                video.id,
                video.segments.len(),
                video.captions.len()
            )));
        }
        if let Some(i) = video.captions.iter().position(Vec::is_empty) {
            return Err(ModelError::Data(format!(
                "video {}: caption {i} is empty",
                video.id
            )));
        }
        let net = self.net(bound);
        let Forward {
            layers, caption, ..
        } = net.forward(tape, &video.input)?;
        let Some(ctx) = caption else {
            return Ok(None);
        };
        let outputs: Vec<LayerOutput> = layers
            .iter()
            .map(|l| LayerOutput {
                segments: l.loc.segments,
                confidence_logits: l.loc.confidence_logits,
            })
            .collect();
        let loss = set_loss(
            tape,
            &outputs,
            &video.segments,
            &self.cfg.criterion(),
            |tape, layer, pairs| {
                let preds: Vec<usize> = pairs.iter().map(|&(p, _)| p).collect();
                let queries = tape.gather_rows(layers[layer].queries, &preds)?;
                let refs = tape.gather_rows(layers[layer].ref_logits, &preds)?;
                let refs = tape.sigmoid(refs)?;
                let rows = net.caption_rows(tape, queries, refs)?;
                let captions: Vec<&[usize]> = pairs
                    .iter()
                    .map(|&(_, g)| video.captions[g].as_slice())
                    .collect();
                net.caption_loss(tape, &ctx, &rows, &captions)
            },
        )?;
        Ok(Some(loss))
    }

    /// Adam over `steps` single-video mini-batches, visiting the corpus in a
    /// fresh seeded order every epoch.
    pub fn train(
        &mut self,
        corpus: &[TrainingVideo<S>],
        steps: usize,
        mut on_step: impl FnMut(&StepLog),
    ) -> Result<TrainOutcome, ModelError> {
        if corpus.is_empty() {
            return Err(ModelError::Data("training corpus is empty".into()));
        }
        let mut adam = Adam::new(self.cfg.adam());
        adam.checked = self.cfg.checked;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ ORDER_STREAM);
        let mut order: Vec<usize> = Vec::new();
        let mut outcome = TrainOutcome::default();
        for step in 0..steps {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                order.shuffle(&mut rng);
                order.reverse();
            }
            let video = &corpus[order.pop().expect("refilled above")];
            let mut tape = if self.cfg.checked {
                Tape::new()
            } else {
                Tape::unchecked()
            };
            let bound = self.params.bind(&mut tape);
            let Some(loss) = self.loss_on_tape(&mut tape, &bound, video)? else {
                outcome.losses.push(0.0);
                continue;
            };
            let value = tape.value(loss.total).item().to_f64_lossy();
            tape.backward(loss.total)?;
            let grads = self.params.collect_grads(&tape, &bound);
            adam.step(self.params.tensors_mut(), &grads)?;
            outcome.losses.push(value);
            on_step(&StepLog {
                step,
                video: video.id.clone(),
                loss: value,
                layers: loss.layers,
            });
        }
        Ok(outcome)
    }
}
