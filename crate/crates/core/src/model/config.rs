use std::fmt::Write as _;
use std::str::FromStr;

use super::ModelError;
use crate::diffcore::AdamConfig;
use crate::msdatt::SamplingSpec;
use crate::setcrit::{FocalParams, LossWeights, MatchWeights, SetCriterion};

/// Architecture, optimizer and training hyperparameters.
///
/// Serialized as a flat `key = value` file; see [`ModelConfig::to_kv`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub ffn_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub levels: usize,
    pub points: usize,
    pub lstm_hidden: usize,
    pub embed_dim: usize,
    pub dsa_key_dim: usize,
    /// Filled in from the corpus vocabulary when training starts.
    pub vocab_size: usize,
    /// Upper bound on decoded tokens, `<eos>` included.
    pub max_caption_len: usize,
    /// Pads the person queries with learned no-object queries up to this
    /// count; 0 disables padding.
    pub query_budget: usize,
    pub confidence_threshold: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub steps: usize,
    pub seed: u64,
    pub checked: bool,
    pub alpha_giou: f64,
    pub alpha_cls: f64,
    pub beta_giou: f64,
    pub beta_cls: f64,
    pub beta_cap: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub log_every: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

macro_rules! kv_fields {
    ($mac:ident) => {
        $mac!(
            d_model,
            ffn_dim,
            enc_layers,
            dec_layers,
            heads,
            levels,
            points,
            lstm_hidden,
            embed_dim,
            dsa_key_dim,
            vocab_size,
            max_caption_len,
            query_budget,
            confidence_threshold,
            learning_rate,
            adam_beta1,
            adam_beta2,
            adam_eps,
            steps,
            seed,
            checked,
            alpha_giou,
            alpha_cls,
            beta_giou,
            beta_cls,
            beta_cap,
            focal_alpha,
            focal_gamma,
            log_every
        )
    };
}

impl ModelConfig {
    /// Laptop-sized default: 256-wide model, 1024-wide feed-forward.
    pub fn desk() -> Self {
        Self {
            d_model: 256,
            ffn_dim: 1024,
            enc_layers: 2,
            dec_layers: 2,
            heads: 8,
            levels: 4,
            points: 4,
            lstm_hidden: 256,
            embed_dim: 128,
            dsa_key_dim: 64,
            vocab_size: 0,
            max_caption_len: 65,
            query_budget: 0,
            confidence_threshold: 0.5,
            learning_rate: 5e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            steps: 5000,
            seed: 0,
            checked: true,
            alpha_giou: 2.0,
            alpha_cls: 1.0,
            beta_giou: 2.0,
            beta_cls: 1.0,
            beta_cap: 1.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            log_every: 100,
        }
    }

    /// Full-width variant: 512 model width, 2048 feed-forward, 512 LSTM.
    pub fn full() -> Self {
        Self {
            d_model: 512,
            ffn_dim: 2048,
            lstm_hidden: 512,
            ..Self::desk()
        }
    }

    /// A few-thousand-parameter network for tests and gradient checks.
    pub fn tiny() -> Self {
        Self {
            d_model: 8,
            ffn_dim: 12,
            enc_layers: 1,
            dec_layers: 2,
            heads: 2,
            levels: 2,
            points: 2,
            lstm_hidden: 6,
            embed_dim: 4,
            dsa_key_dim: 4,
            max_caption_len: 8,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ModelError> {
        match name {
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            "full" => Ok(Self::full()),
            other => Err(ModelError::Config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn sampling(&self) -> SamplingSpec {
        SamplingSpec {
            heads: self.heads,
            levels: self.levels,
            points: self.points,
        }
    }

    pub fn criterion(&self) -> SetCriterion {
        SetCriterion {
            matching: MatchWeights {
                alpha_giou: self.alpha_giou,
                alpha_cls: self.alpha_cls,
            },
            loss: LossWeights {
                beta_giou: self.beta_giou,
                beta_cls: self.beta_cls,
                beta_cap: self.beta_cap,
            },
            focal: FocalParams {
                alpha: self.focal_alpha,
                gamma: self.focal_gamma,
            },
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let extents = [
            ("d_model", self.d_model),
            ("ffn_dim", self.ffn_dim),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("heads", self.heads),
            ("levels", self.levels),
            ("points", self.points),
            ("lstm_hidden", self.lstm_hidden),
            ("embed_dim", self.embed_dim),
            ("dsa_key_dim", self.dsa_key_dim),
            ("max_caption_len", self.max_caption_len),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(ModelError::Config(
                "confidence_threshold must lie in [0, 1]".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        self.criterion()
            .matching
            .validate()
            .and_then(|_| self.criterion().loss.validate())
            .map_err(|e| ModelError::Config(e.to_string()))
    }

    /// `key = value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($($f:ident),*) => {
                $( writeln!(out, "{} = {}", stringify!($f), self.$f).expect("write to String"); )*
            };
        }
        kv_fields!(emit);
        out
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped; `preset = desk|full|tiny` resets every field and
    /// must come first.
    pub fn apply_kv(mut self, text: &str) -> Result<Self, ModelError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ModelError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "preset" {
                self = Self::preset(value)?;
                continue;
            }
            self.set(key, value)
                .map_err(|e| ModelError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("invalid value `{value}` for `{key}`"))
        }
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $( stringify!($f) => { self.$f = parse(key, value)?; Ok(()) } )*
                    _ => Err(format!("unknown key `{key}`")),
                }
            };
        }
        kv_fields!(assign)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let d = ModelConfig::desk();
        assert_eq!(
            (d.d_model, d.ffn_dim, d.enc_layers, d.dec_layers),
            (256, 1024, 2, 2)
        );
        assert_eq!((d.heads, d.levels, d.points), (8, 4, 4));
        assert_eq!(d.learning_rate, 5e-5);
        let p = ModelConfig::full();
        assert_eq!((p.d_model, p.ffn_dim, p.lstm_hidden), (512, 2048, 512));
        assert!(d.validate().is_ok() && p.validate().is_ok());
    }

    #[test]
    fn kv_round_trip_and_errors() {
        let mut c = ModelConfig::desk();
        c.d_model = 64;
        c.checked = false;
        c.learning_rate = 1e-3;
        let back = ModelConfig::desk().apply_kv(&c.to_kv()).unwrap();
        assert_eq!(back, c);
        let c = ModelConfig::desk()
            .apply_kv("preset = full\n# comment\nsteps = 7  # trailing\n")
            .unwrap();
        assert_eq!((c.d_model, c.steps), (512, 7));
        assert!(ModelConfig::desk().apply_kv("bogus = 1").is_err());
        assert!(ModelConfig::desk().apply_kv("steps = many").is_err());
        assert!(ModelConfig::desk().apply_kv("steps").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::desk();
        c.heads = 7;
        assert!(c.validate().is_err());
        c = ModelConfig::desk();
        c.points = 0;
        assert!(c.validate().is_err());
    }
}
