//! Finite-difference checks of every differentiable kernel.
//!
//! Each kernel is evaluated on freshly drawn inputs per trial. Tensor-valued
//! outputs are reduced to a scalar through a fixed random weighting, so every
//! output entry contributes to the checked gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{
    check_gradients, BoundParams, GradCheckOptions, Tape, Tensor, TensorError, Var,
};
use crate::geometry::Segment;
use crate::model::{
    lstm_cell, Model, ModelConfig, Net, PersonQueryInput, TrainingVideo, VideoInput,
};
use crate::msdatt::{
    dsa, dsa_memory, msdatt, pyramid_on_tape, DsaWeights, MsdAttWeights, SamplingSpec,
};
use crate::setcrit::{caption_ce, focal_loss_tape, giou_loss_tape, FocalParams};

/// Tolerance for single kernels.
pub const KERNEL_TOLERANCE: f64 = 1e-4;
/// Tolerance for the end-to-end composite.
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;

/// Central-difference step and relative-error floor. Gradients below the
/// floor are compared on an absolute scale, which keeps rounding noise in
/// near-zero entries from reading as large relative errors.
pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-5;
/// Largest share of coordinates a kernel may lose to kinks and still pass.
pub const MAX_SKIPPED_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    pub name: &'static str,
    pub trials: usize,
    pub coords: usize,
    /// Coordinates whose difference stencil straddled a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl KernelReport {
    /// Error within tolerance, and kinks rare enough that the checked
    /// coordinates still cover the kernel.
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
            && self.skipped as f64 <= MAX_SKIPPED_FRACTION * (self.coords + self.skipped) as f64
    }
}

type Inputs = Vec<Tensor<f64>>;
type Body = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>>;

struct Case {
    inputs: Inputs,
    body: Body,
    max_coords: Option<usize>,
}

/// Weighted sum of every entry with weights drawn from `seed`.
fn reduce(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var, TensorError> {
    let shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(Tensor::randn(&shape, 1.0, &mut rng));
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor<f64> {
    Tensor::randn(shape, std, rng)
}

/// Entries bounded away from zero, for kernels with a kink there.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    randn(rng, shape, 1.0).map(|v| if v >= 0.0 { v + 0.05 } else { v - 0.05 })
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    randn(rng, shape, 1.0).map(|v| v.abs() + 0.5)
}

fn unary(
    f: fn(&mut Tape<f64>, Var) -> Result<Var, TensorError>,
    x: Tensor<f64>,
    seed: u64,
) -> Case {
    Case {
        inputs: vec![x],
        body: Box::new(move |t, v| {
            let y = f(t, v[0])?;
            reduce(t, y, seed)
        }),
        max_coords: None,
    }
}

fn binary(
    f: fn(&mut Tape<f64>, Var, Var) -> Result<Var, TensorError>,
    a: Tensor<f64>,
    b: Tensor<f64>,
    seed: u64,
) -> Case {
    Case {
        inputs: vec![a, b],
        body: Box::new(move |t, v| {
            let y = f(t, v[0], v[1])?;
            reduce(t, y, seed)
        }),
        max_coords: None,
    }
}

fn tiny_model() -> Model<f64> {
    let mut cfg = ModelConfig::tiny();
    cfg.vocab_size = 9;
    Model::init(cfg, 5, 4).expect("tiny config is valid")
}

fn tiny_video(rng: &mut ChaCha8Rng) -> TrainingVideo<f64> {
    let t = rng.random_range(5..9);
    let n = rng.random_range(2..4);
    let persons = (0..n)
        .map(|i| {
            let a: f64 = rng.random_range(0.0..0.6);
            let b = a + rng.random_range(0.15..0.4);
            PersonQueryInput {
                person_index: i + 1,
                feature: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                extent: Segment::new(a, b.min(1.0)).expect("ordered"),
            }
        })
        .collect::<Vec<_>>();
    let segments = persons
        .iter()
        .map(|p| {
            let s = p.extent.start() + rng.random_range(-0.05..0.05);
            let e = p.extent.end() + rng.random_range(-0.05..0.05);
            Segment::new(
                s.clamp(0.0, 0.9),
                e.clamp(0.95, 1.0).min(e.max(s.clamp(0.0, 0.9) + 0.05)),
            )
            .expect("ordered")
        })
        .collect();
    let captions = (0..n)
        .map(|_| {
            (0..rng.random_range(1..5))
                .map(|_| rng.random_range(4..9))
                .collect()
        })
        .collect();
    TrainingVideo {
        id: "gradcheck".into(),
        input: VideoInput {
            frames: randn(rng, &[t, 5], 1.0),
            persons,
        },
        segments,
        captions,
    }
}

/// Builds the trial `trial` of kernel `name`.
fn case(name: &str, rng: &mut ChaCha8Rng, seed: u64) -> Case {
    match name {
        "add" => binary(
            Tape::add,
            randn(rng, &[3, 4], 1.0),
            randn(rng, &[3, 4], 1.0),
            seed,
        ),
        "sub" => binary(
            Tape::sub,
            randn(rng, &[3, 4], 1.0),
            randn(rng, &[3, 4], 1.0),
            seed,
        ),
        "mul" => binary(
            Tape::mul,
            randn(rng, &[3, 4], 1.0),
            randn(rng, &[3, 4], 1.0),
            seed,
        ),
        "div" => binary(
            Tape::div,
            randn(rng, &[3, 4], 1.0),
            positive(rng, &[3, 4]),
            seed,
        ),
        "minimum_maximum" => {
            let a = randn(rng, &[3, 4], 1.0);
            let shift: Vec<f64> = (0..12)
                .map(|_| if rng.random_bool(0.5) { 0.3 } else { -0.3 })
                .collect();
            let b = Tensor::new(
                &[3, 4],
                a.data().iter().zip(&shift).map(|(x, s)| x + s).collect(),
            )
            .expect("3 x 4");
            Case {
                inputs: vec![a, b],
                body: Box::new(move |t, v| {
                    let lo = t.minimum(v[0], v[1])?;
                    let hi = t.maximum(v[0], v[1])?;
                    let y = t.concat_cols(&[lo, hi])?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "broadcast" => {
            let (a, r, c) = (
                randn(rng, &[3, 4], 1.0),
                randn(rng, &[1, 4], 1.0),
                randn(rng, &[3, 1], 1.0),
            );
            Case {
                inputs: vec![a, r, c],
                body: Box::new(move |t, v| {
                    let y = t.add_row(v[0], v[1])?;
                    let y = t.add_col(y, v[2])?;
                    let y = t.mul_row(y, v[1])?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "sigmoid" => unary(Tape::sigmoid, randn(rng, &[3, 4], 2.0), seed),
        "tanh" => unary(Tape::tanh, randn(rng, &[3, 4], 2.0), seed),
        "relu" => unary(Tape::relu, away_from_zero(rng, &[3, 4]), seed),
        "exp" => unary(Tape::exp, randn(rng, &[3, 4], 1.0), seed),
        "log" => unary(Tape::log, positive(rng, &[3, 4]), seed),
        "matmul" => binary(
            Tape::matmul,
            randn(rng, &[3, 5], 1.0),
            randn(rng, &[5, 4], 1.0),
            seed,
        ),
        "softmax" => Case {
            inputs: vec![randn(rng, &[3, 5], 1.5)],
            body: Box::new(move |t, v| {
                let a = t.softmax(v[0], 0)?;
                let b = t.softmax(v[0], 1)?;
                let c = t.log_softmax(v[0])?;
                let y = t.concat_cols(&[a, b, c])?;
                reduce(t, y, seed)
            }),
            max_coords: None,
        },
        "layer_norm" => unary(|t, v| t.layer_norm(v, 1e-5), randn(rng, &[3, 6], 1.0), seed),
        "structural" => Case {
            inputs: vec![randn(rng, &[4, 5], 1.0)],
            body: Box::new(move |t, v| {
                let g = t.gather_rows(v[0], &[3, 0, 3, 1])?;
                let s = t.slice_cols(g, 1, 4)?;
                let tr = t.transpose(s)?;
                let r = t.reshape(tr, &[4, 3])?;
                let p = t.pick(v[0], &[0, 4, 2, 1])?;
                let sr = t.sum_rows(r)?;
                let total = reduce(t, sr, seed)?;
                let extra = reduce(t, p, seed ^ 1)?;
                let m = t.mean(v[0])?;
                let both = t.add(total, extra)?;
                t.add(both, m)
            }),
            max_coords: None,
        },
        "deform_sample" => {
            let (heads, levels, points, d) = (2, 2, 2, 4);
            let maps = [randn(rng, &[7, d], 1.0), randn(rng, &[4, d], 1.0)];
            let cols = heads * levels * points;
            let loc = Tensor::uniform(&[2, cols], 0.5, rng).map(|v| v + 0.5);
            Case {
                inputs: vec![maps[0].clone(), maps[1].clone(), loc],
                body: Box::new(move |t, v| {
                    let y = t.deform_sample(&[v[0], v[1]], v[2], heads, points)?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "group_dot" => binary(
            Tape::group_dot,
            randn(rng, &[3, 4], 1.0),
            randn(rng, &[9, 4], 1.0),
            seed,
        ),
        "group_weighted_sum" => binary(
            Tape::group_weighted_sum,
            randn(rng, &[3, 3], 1.0),
            randn(rng, &[9, 4], 1.0),
            seed,
        ),
        "lstm_cell" => binary(
            |t, g, c| {
                let s = lstm_cell(t, g, c)?;
                t.concat_cols(&[s.h, s.c])
            },
            randn(rng, &[3, 12], 1.0),
            randn(rng, &[3, 3], 1.0),
            seed,
        ),
        "msdatt" => {
            let spec = SamplingSpec {
                heads: 2,
                levels: 2,
                points: 2,
            };
            let (d, c) = (4, spec.columns());
            let inputs = vec![
                randn(rng, &[d, c], 0.05),
                randn(rng, &[1, c], 0.1),
                randn(rng, &[d, c], 0.5),
                randn(rng, &[1, c], 0.5),
                randn(rng, &[d, d], 0.5),
                randn(rng, &[1, d], 0.5),
                randn(rng, &[d, d], 0.5),
                randn(rng, &[1, d], 0.5),
                randn(rng, &[3, d], 1.0),
                Tensor::uniform(&[3, 1], 0.35, rng).map(|v| v + 0.5),
                randn(rng, &[7, d], 1.0),
            ];
            Case {
                inputs,
                body: Box::new(move |t, v| {
                    let w = MsdAttWeights {
                        offset_w: v[0],
                        offset_b: v[1],
                        attn_w: v[2],
                        attn_b: v[3],
                        value_w: v[4],
                        value_b: v[5],
                        out_w: v[6],
                        out_b: v[7],
                    };
                    let pyramid = pyramid_on_tape(t, v[10], spec.levels)?;
                    let y = msdatt(t, spec, &w, v[8], v[9], &pyramid)?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "dsa" => {
            let (levels, points, d, h, dk) = (2, 2, 4, 3, 3);
            let inputs = vec![
                randn(rng, &[h + d, levels * points], 0.05),
                randn(rng, &[1, levels * points], 0.1),
                randn(rng, &[h + d, dk], 0.5),
                randn(rng, &[d, dk], 0.5),
                randn(rng, &[1, dk], 0.5),
                randn(rng, &[d, d], 0.5),
                randn(rng, &[1, d], 0.5),
                randn(rng, &[3, h], 1.0),
                randn(rng, &[3, d], 1.0),
                Tensor::uniform(&[3, 1], 0.35, rng).map(|v| v + 0.5),
                randn(rng, &[7, d], 1.0),
            ];
            Case {
                inputs,
                body: Box::new(move |t, v| {
                    let w = DsaWeights {
                        offset_w: v[0],
                        offset_b: v[1],
                        query_w: v[2],
                        key_w: v[3],
                        key_b: v[4],
                        value_w: v[5],
                        value_b: v[6],
                    };
                    let pyramid = pyramid_on_tape(t, v[10], levels)?;
                    let memory = dsa_memory(t, &w, &pyramid, points)?;
                    let (ctx, attn) = dsa(t, &w, &memory, v[7], v[8], v[9])?;
                    let y = t.concat_cols(&[ctx, attn])?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "localization_head" => {
            let model = tiny_model();
            let names: Vec<String> = [
                "loc.1.w", "loc.1.b", "loc.2.w", "loc.2.b", "loc.3.w", "loc.3.b", "conf.w",
                "conf.b",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            let d = model.cfg.d_model;
            let mut inputs: Inputs = names
                .iter()
                .map(|n| {
                    let shape = model.params.get(n).expect("loc parameter").shape().to_vec();
                    randn(rng, &shape, 0.4)
                })
                .collect();
            inputs.push(randn(rng, &[3, d], 1.0));
            inputs.push(randn(rng, &[3, 1], 0.5));
            let cfg = model.cfg.clone();
            Case {
                inputs,
                body: Box::new(move |t, v| {
                    let k = names.len();
                    let bound = BoundParams::from_parts(&names, &v[..k]);
                    let net = Net {
                        cfg: &cfg,
                        params: &bound,
                    };
                    let out = net.localization_head(t, v[k], v[k + 1])?;
                    let y = t.concat_cols(&[out.segments, out.confidence_logits])?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "focal_loss" => {
            let labels: Vec<bool> = (0..6).map(|_| rng.random_bool(0.5)).collect();
            let params = FocalParams::default();
            Case {
                inputs: vec![randn(rng, &[6, 1], 2.0)],
                body: Box::new(move |t, v| {
                    let y = focal_loss_tape(t, v[0], &labels, params)?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "giou_loss" => {
            let m = 4;
            let mut pred = Vec::with_capacity(2 * m);
            let mut target = Vec::with_capacity(m);
            for _ in 0..m {
                let a: f64 = rng.random_range(0.0..0.7);
                pred.extend([a, a + rng.random_range(0.1..0.3)]);
                let b: f64 = rng.random_range(0.0..0.7);
                target.push([b, b + rng.random_range(0.1..0.3)]);
            }
            Case {
                inputs: vec![Tensor::new(&[m, 2], pred).expect("m x 2")],
                body: Box::new(move |t, v| {
                    let y = giou_loss_tape(t, v[0], &target)?;
                    reduce(t, y, seed)
                }),
                max_coords: None,
            }
        }
        "caption_loss" => {
            let targets: Vec<usize> = (0..5).map(|_| rng.random_range(0..7)).collect();
            Case {
                inputs: vec![randn(rng, &[5, 7], 1.5)],
                body: Box::new(move |t, v| caption_ce(t, v[0], &targets)),
                max_coords: None,
            }
        }
        "set_loss" => {
            let mut model = tiny_model();
            // Non-zero heads so that every path carries gradient.
            for tensor in model.params.tensors_mut() {
                for x in tensor.data_mut() {
                    *x += rng.random_range(-0.1..0.1);
                }
            }
            let video = tiny_video(rng);
            let names = model.params.names().to_vec();
            let inputs = model.params.tensors().to_vec();
            Case {
                inputs,
                body: Box::new(move |t, v| {
                    let bound = BoundParams::from_parts(&names, v);
                    let loss = model
                        .loss_on_tape(t, &bound, &video)
                        .map_err(|e| TensorError::Contract(e.to_string()))?
                        .ok_or_else(|| TensorError::Contract("no queries".into()))?;
                    Ok(loss.total)
                }),
                max_coords: Some(24),
            }
        }
        other => panic!("unknown kernel `{other}`"),
    }
}

/// Every checked kernel, in report order.
pub const KERNELS: [&str; 26] = [
    "add",
    "sub",
    "mul",
    "div",
    "minimum_maximum",
    "broadcast",
    "sigmoid",
    "tanh",
    "relu",
    "exp",
    "log",
    "matmul",
    "softmax",
    "layer_norm",
    "structural",
    "deform_sample",
    "group_dot",
    "group_weighted_sum",
    "lstm_cell",
    "msdatt",
    "dsa",
    "localization_head",
    "focal_loss",
    "giou_loss",
    "caption_loss",
    "set_loss",
];

/// Checks one kernel over `trials` independent draws.
pub fn check_kernel(
    name: &'static str,
    seed: u64,
    trials: usize,
) -> Result<KernelReport, TensorError> {
    let tolerance = if name == "set_loss" {
        COMPOSITE_TOLERANCE
    } else {
        KERNEL_TOLERANCE
    };
    let mut report = KernelReport {
        name,
        trials,
        coords: 0,
        skipped: 0,
        max_rel_error: 0.0,
        tolerance,
    };
    for trial in 0..trials {
        let trial_seed = seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let c = case(name, &mut rng, trial_seed);
        let opts = GradCheckOptions {
            step: STEP,
            floor: FLOOR,
            max_coords: c.max_coords,
            seed: trial_seed,
        };
        let r = check_gradients(&c.inputs, &*c.body, &opts)?;
        report.coords += r.coords;
        report.skipped += r.skipped;
        report.max_rel_error = report.max_rel_error.max(r.max_rel_error);
    }
    Ok(report)
}

/// Runs the whole suite.
pub fn run_suite(seed: u64, trials: usize) -> Result<Vec<KernelReport>, TensorError> {
    KERNELS
        .iter()
        .map(|name| check_kernel(name, seed, trials))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kernel_passes_a_few_trials() {
        for r in run_suite(3, 3).unwrap() {
            assert!(r.passed(), "{r:?}");
            assert!(r.coords > 0);
        }
    }
}
