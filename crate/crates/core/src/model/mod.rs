//! The captioning network.
//!
//! Frame features are reduced to `d_model` channels and refined by a
//! deformable encoder into a temporal pyramid. Each tracked person becomes
//! one decoder query with a scalar reference point; decoder layers mix the
//! queries with self-attention, read the pyramid with deformable
//! cross-attention and nudge the reference point. After every decoder layer
//! a shared localization head turns each query into a segment and a
//! foreground confidence, and a shared LSTM caption head (reading the video
//! through deformable soft attention) writes the person's caption.

mod caption;
mod config;
mod data;
mod infer;
mod network;
mod train;

pub use caption::{lstm_cell, CaptionContext, LstmState};
pub use config::ModelConfig;
pub use data::{training_video, video_input};
pub use infer::PersonPrediction;
pub use network::{
    positional_encoding, DecodedLayer, Forward, LocalizationOutput, Net, EXTENT_FEATURES,
};
pub use train::{StepLog, TrainOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diffcore::{ParamStore, Tensor, TensorError};
use crate::geometry::Segment;
use crate::msdatt::{pooled_len, SamplingSpec};
use crate::scalar::Scalar;
use crate::setcrit::SetCritError;
use crate::text::VocabError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input data: {0}")]
    Data(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    SetCrit(#[from] SetCritError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

/// One tracked person as seen by the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonQueryInput<S> {
    /// 1-based order of appearance.
    pub person_index: usize,
    /// Track-pooled appearance feature.
    pub feature: Vec<S>,
    /// Temporal extent of the track.
    pub extent: Segment,
}

#[derive(Clone, Debug)]
pub struct VideoInput<S> {
    /// `[T, C]` frame features.
    pub frames: Tensor<S>,
    pub persons: Vec<PersonQueryInput<S>>,
}

/// A video with its ground truth: one segment and one tokenized caption
/// (without `<bos>`/`<eos>`) per person.
#[derive(Clone, Debug)]
pub struct TrainingVideo<S> {
    pub id: String,
    pub input: VideoInput<S>,
    pub segments: Vec<Segment>,
    pub captions: Vec<Vec<usize>>,
}

/// Length assumed when spreading the initial sampling offsets, in frames.
const NOMINAL_LENGTH: usize = 32;

/// Configuration plus every learnable tensor.
#[derive(Clone, Debug)]
pub struct Model<S> {
    pub cfg: ModelConfig,
    pub frame_dim: usize,
    pub person_dim: usize,
    pub params: ParamStore<S>,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn xavier<S: Scalar>(&mut self, rows: usize, cols: usize) -> Tensor<S> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Tensor::uniform(&[rows, cols], limit, &mut self.rng)
    }
}

impl<S: Scalar> Model<S> {
    /// Fresh parameters drawn from `cfg.seed`.
    pub fn init(cfg: ModelConfig, frame_dim: usize, person_dim: usize) -> Result<Self, ModelError> {
        cfg.validate()?;
        if cfg.vocab_size <= 4 {
            return Err(ModelError::Config(
                "vocab_size must exceed the 4 special tokens".into(),
            ));
        }
        if frame_dim == 0 || person_dim == 0 {
            return Err(ModelError::Config("feature widths must be positive".into()));
        }
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let mut p = ParamStore::new();
        let d = cfg.d_model;
        let spec = cfg.sampling();
        let zeros = |r: usize, c: usize| Tensor::<S>::zeros(&[r, c]);
        let ones = |r: usize, c: usize| Tensor::<S>::ones(&[r, c]);
        let mut nominal = vec![NOMINAL_LENGTH];
        while nominal.len() < cfg.levels {
            nominal.push(pooled_len(*nominal.last().expect("non-empty")));
        }

        let layer_norm = |p: &mut ParamStore<S>, name: &str| {
            p.insert(format!("{name}.g"), ones(1, d));
            p.insert(format!("{name}.b"), zeros(1, d));
        };
        let msdatt = |p: &mut ParamStore<S>, init: &mut Init, name: &str| {
            let c = spec.columns();
            p.insert(format!("{name}.offset_w"), zeros(d, c));
            p.insert(format!("{name}.offset_b"), spec.offset_bias_init(&nominal));
            p.insert(format!("{name}.attn_w"), zeros(d, c));
            p.insert(format!("{name}.attn_b"), zeros(1, c));
            p.insert(format!("{name}.value_w"), init.xavier(d, d));
            p.insert(format!("{name}.value_b"), zeros(1, d));
            p.insert(format!("{name}.out_w"), init.xavier(d, d));
            p.insert(format!("{name}.out_b"), zeros(1, d));
        };
        let ffn = |p: &mut ParamStore<S>, init: &mut Init, name: &str| {
            p.insert(format!("{name}.w1"), init.xavier(d, cfg.ffn_dim));
            p.insert(format!("{name}.b1"), zeros(1, cfg.ffn_dim));
            p.insert(format!("{name}.w2"), init.xavier(cfg.ffn_dim, d));
            p.insert(format!("{name}.b2"), zeros(1, d));
        };

        p.insert("enc.in.w", init.xavier(frame_dim, d));
        p.insert("enc.in.b", zeros(1, d));
        for i in 0..cfg.enc_layers {
            msdatt(&mut p, &mut init, &format!("enc.{i}.attn"));
            layer_norm(&mut p, &format!("enc.{i}.ln1"));
            ffn(&mut p, &mut init, &format!("enc.{i}.ffn"));
            layer_norm(&mut p, &format!("enc.{i}.ln2"));
        }

        // Channels 0 and 1 of a fresh query carry the track's center and
        // width logits, and the reference head reads channel 0, so the
        // initial reference point is the center of the tracked extent.
        let mut query_w = init.xavier::<S>(person_dim + EXTENT_FEATURES, d);
        for row in 0..person_dim + EXTENT_FEATURES {
            for col in 0..EXTENT_FEATURES.min(d) {
                query_w.data_mut()[row * d + col] = if row == person_dim + col {
                    S::one()
                } else {
                    S::zero()
                };
            }
        }
        p.insert("query.w", query_w);
        p.insert("query.b", zeros(1, d));
        let mut ref_w = zeros(d, 1);
        ref_w.data_mut()[0] = S::one();
        p.insert("ref.w", ref_w);
        p.insert("ref.b", zeros(1, 1));
        if cfg.query_budget > 0 {
            p.insert(
                "noobj.emb",
                Tensor::randn(&[cfg.query_budget, d], 1.0, &mut init.rng),
            );
            p.insert("noobj.ref", zeros(cfg.query_budget, 1));
        }

        for i in 0..cfg.dec_layers {
            for w in ["wq", "wk", "wv", "wo"] {
                let t = init.xavier(d, d);
                p.insert(format!("dec.{i}.sa.{w}"), t);
            }
            for b in ["bq", "bk", "bv", "bo"] {
                p.insert(format!("dec.{i}.sa.{b}"), zeros(1, d));
            }
            layer_norm(&mut p, &format!("dec.{i}.ln1"));
            msdatt(&mut p, &mut init, &format!("dec.{i}.ca"));
            layer_norm(&mut p, &format!("dec.{i}.ln2"));
            ffn(&mut p, &mut init, &format!("dec.{i}.ffn"));
            layer_norm(&mut p, &format!("dec.{i}.ln3"));
            p.insert(format!("dec.{i}.refine.w"), zeros(d, 1));
            p.insert(format!("dec.{i}.refine.b"), zeros(1, 1));
        }

        p.insert("loc.1.w", init.xavier(d, d));
        p.insert("loc.1.b", zeros(1, d));
        p.insert("loc.2.w", init.xavier(d, d));
        p.insert("loc.2.b", zeros(1, d));
        p.insert("loc.3.w", zeros(d, 2));
        p.insert("loc.3.b", zeros(1, 2));
        p.insert("conf.w", init.xavier(d, 1));
        p.insert("conf.b", zeros(1, 1));

        let (h, e, v, dk) = (
            cfg.lstm_hidden,
            cfg.embed_dim,
            cfg.vocab_size,
            cfg.dsa_key_dim,
        );
        let dsa_spec = SamplingSpec {
            heads: 1,
            levels: cfg.levels,
            points: cfg.points,
        };
        p.insert("dsa.offset_w", zeros(h + d, cfg.levels * cfg.points));
        p.insert("dsa.offset_b", dsa_spec.offset_bias_init(&nominal));
        p.insert("dsa.query_w", init.xavier(h + d, dk));
        p.insert("dsa.key_w", init.xavier(d, dk));
        p.insert("dsa.key_b", zeros(1, dk));
        p.insert("dsa.value_w", init.xavier(d, d));
        p.insert("dsa.value_b", zeros(1, d));

        p.insert("cap.embed", init.xavier(v, e));
        p.insert("cap.w_z", init.xavier(d, 4 * h));
        p.insert("cap.w_q", init.xavier(d, 4 * h));
        p.insert("cap.w_e", init.xavier(e, 4 * h));
        p.insert("cap.w_h", init.xavier(h, 4 * h));
        // gate order i, f, g, o; forget gate starts open
        let mut bias = vec![S::zero(); 4 * h];
        for b in &mut bias[h..2 * h] {
            *b = S::one();
        }
        p.insert("cap.b", Tensor::new(&[1, 4 * h], bias)?);
        p.insert("cap.out.w", init.xavier(h, v));
        p.insert("cap.out.b", zeros(1, v));

        Ok(Self {
            cfg,
            frame_dim,
            person_dim,
            params: p,
        })
    }

    /// Rebuilds the parameter layout for `cfg` and fills it from named
    /// tensors (a checkpoint).
    pub fn from_named(
        cfg: ModelConfig,
        frame_dim: usize,
        person_dim: usize,
        named: &[(String, Tensor<f64>)],
    ) -> Result<Self, ModelError> {
        let mut model = Self::init(cfg, frame_dim, person_dim)?;
        model.params.load_named(named)?;
        Ok(model)
    }

    pub(crate) fn check_input(&self, input: &VideoInput<S>) -> Result<(), ModelError> {
        let (t, c) = input.frames.dims2()?;
        if c != self.frame_dim {
            return Err(ModelError::Data(format!(
                "frame features have {c} channels, model expects {}",
                self.frame_dim
            )));
        }
        if t == 0 {
            return Err(ModelError::Data("video has no frames".into()));
        }
        if let Some(p) = input
            .persons
            .iter()
            .find(|p| p.feature.len() != self.person_dim)
        {
            return Err(ModelError::Data(format!(
                "person {} has {} feature channels, model expects {}",
                p.person_index,
                p.feature.len(),
                self.person_dim
            )));
        }
        if self.cfg.checked && !input.frames.all_finite() {
            return Err(ModelError::Data("non-finite frame feature".into()));
        }
        Ok(())
    }
}
