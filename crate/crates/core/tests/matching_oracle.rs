//! Hungarian matching against exhaustive search, and exact permutation
//! invariance of the set-prediction loss.

use hcap_core::diffcore::{Tape, Tensor, TensorError, Var};
use hcap_core::geometry::Segment;
use hcap_core::setcrit::{caption_ce_batched, hungarian, set_loss, LayerOutput, SetCriterion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum total cost over all injections of the smaller side into the
/// larger one.
fn brute_force(cost: &[Vec<f64>]) -> f64 {
    let (n, m) = (cost.len(), cost[0].len());
    fn go(
        cost: &[Vec<f64>],
        row: usize,
        used: &mut Vec<bool>,
        transposed: bool,
        acc: f64,
        best: &mut f64,
    ) {
        let (n, m) = if transposed {
            (cost[0].len(), cost.len())
        } else {
            (cost.len(), cost[0].len())
        };
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                let c = if transposed {
                    cost[j][row]
                } else {
                    cost[row][j]
                };
                go(cost, row + 1, used, transposed, acc + c, best);
                used[j] = false;
            }
        }
    }
    let transposed = n > m;
    let mut best = f64::INFINITY;
    go(
        cost,
        0,
        &mut vec![false; n.max(m)],
        transposed,
        0.0,
        &mut best,
    );
    best
}

#[test]
fn hungarian_equals_exhaustive_minimum_on_1000_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for trial in 0..1000 {
        let n = rng.random_range(1..=7);
        let m = rng.random_range(1..=7);
        // Every tenth matrix uses small integers so that ties are common.
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        if trial % 10 == 0 {
                            f64::from(rng.random_range(0..4u8))
                        } else {
                            rng.random_range(-5.0..5.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let a = hungarian(&cost).unwrap();
        let expected = brute_force(&cost);
        assert!(
            (a.total_cost - expected).abs() <= 1e-9,
            "trial {trial}: {} vs {expected} on {cost:?}",
            a.total_cost
        );
        // The reported pairs realize the reported cost and form an injection.
        let realized: f64 = a.pairs.iter().map(|&(i, j)| cost[i][j]).sum();
        assert!((realized - a.total_cost).abs() <= 1e-9);
        assert_eq!(a.pairs.len(), n.min(m));
        let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols.len(), a.pairs.len());
        checked += 1;
    }
    assert_eq!(checked, 1000);
}

struct Fixture {
    /// Per layer: `[N, 2]` segments and `[N, 1]` logits.
    layers: Vec<(Vec<f64>, Vec<f64>)>,
    /// Per layer and caption step: `[N, V]` logits.
    caption_logits: Vec<Vec<Vec<f64>>>,
    gts: Vec<Segment>,
    captions: Vec<Vec<usize>>,
}

const VOCAB: usize = 7;
const STEPS: usize = 4;

fn fixture(rng: &mut ChaCha8Rng) -> Fixture {
    let n = rng.random_range(1..=6);
    let g = rng.random_range(0..=n);
    let layers = (0..rng.random_range(1..=3))
        .map(|_| {
            let segs = (0..n)
                .flat_map(|_| {
                    let a: f64 = rng.random_range(0.0..0.8);
                    [a, a + rng.random_range(0.01..0.2)]
                })
                .collect();
            let logits = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            (segs, logits)
        })
        .collect::<Vec<_>>();
    let caption_logits = layers
        .iter()
        .map(|_| {
            (0..STEPS)
                .map(|_| {
                    (0..n * VOCAB)
                        .map(|_| rng.random_range(-2.0..2.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let gts = (0..g)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..0.8);
            Segment::new(a, a + rng.random_range(0.01..0.2)).unwrap()
        })
        .collect();
    let captions = (0..g)
        .map(|_| {
            (0..rng.random_range(1..STEPS))
                .map(|_| rng.random_range(4..VOCAB))
                .collect()
        })
        .collect();
    Fixture {
        layers,
        caption_logits,
        gts,
        captions,
    }
}

/// Applies `pp` to prediction rows and `gp` to ground truths. `pp[i]` is
/// the old index placed at row `i`.
fn permuted(f: &Fixture, pp: &[usize], gp: &[usize]) -> Fixture {
    let rows = |data: &[f64], width: usize| -> Vec<f64> {
        pp.iter()
            .flat_map(|&i| data[i * width..(i + 1) * width].to_vec())
            .collect()
    };
    Fixture {
        layers: f
            .layers
            .iter()
            .map(|(s, c)| (rows(s, 2), rows(c, 1)))
            .collect(),
        caption_logits: f
            .caption_logits
            .iter()
            .map(|steps| steps.iter().map(|l| rows(l, VOCAB)).collect())
            .collect(),
        gts: gp.iter().map(|&i| f.gts[i]).collect(),
        captions: gp.iter().map(|&i| f.captions[i].clone()).collect(),
    }
}

fn loss(f: &Fixture) -> (f64, Vec<Option<Vec<f64>>>) {
    let n = f.layers[0].1.len();
    let mut tape = Tape::<f64>::new();
    let mut params = Vec::new();
    let outputs: Vec<LayerOutput> = f
        .layers
        .iter()
        .map(|(s, c)| {
            let segments = tape.param(Tensor::from_f64(&[n, 2], s).unwrap());
            let confidence_logits = tape.param(Tensor::from_f64(&[n, 1], c).unwrap());
            params.push(segments);
            params.push(confidence_logits);
            LayerOutput {
                segments,
                confidence_logits,
            }
        })
        .collect();
    let caption_vars: Vec<Vec<Var>> = f
        .caption_logits
        .iter()
        .map(|steps| {
            steps
                .iter()
                .map(|l| tape.param(Tensor::from_f64(&[n, VOCAB], l).unwrap()))
                .collect()
        })
        .collect();
    let out = set_loss(
        &mut tape,
        &outputs,
        &f.gts,
        &SetCriterion::default(),
        |tape, layer, pairs| -> Result<Var, TensorError> {
            let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let steps = caption_vars[layer]
                .iter()
                .map(|&v| tape.gather_rows(v, &preds))
                .collect::<Result<Vec<_>, _>>()?;
            let targets: Vec<Vec<usize>> = pairs.iter().map(|p| f.captions[p.1].clone()).collect();
            caption_ce_batched(tape, &steps, &targets)
        },
    )
    .unwrap();
    let value = tape.value(out.total).item();
    tape.backward(out.total).unwrap();
    let grads = params
        .iter()
        .map(|&p| tape.grad(p).map(|g| g.data().to_vec()))
        .collect();
    (value, grads)
}

#[test]
fn set_loss_is_exactly_permutation_invariant_on_100_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for trial in 0..100 {
        let f = fixture(&mut rng);
        let n = f.layers[0].1.len();
        let mut pp: Vec<usize> = (0..n).collect();
        let mut gp: Vec<usize> = (0..f.gts.len()).collect();
        pp.shuffle(&mut rng);
        gp.shuffle(&mut rng);
        let (base, base_grads) = loss(&f);
        let (moved, moved_grads) = loss(&permuted(&f, &pp, &gp));
        assert_eq!(
            base.to_bits(),
            moved.to_bits(),
            "trial {trial}: {base} vs {moved}"
        );
        // Gradients follow their rows.
        for (layer, (bg, mg)) in base_grads.iter().zip(&moved_grads).enumerate() {
            let (Some(bg), Some(mg)) = (bg, mg) else {
                assert_eq!(bg.is_some(), mg.is_some());
                continue;
            };
            let width = bg.len() / n;
            for (row, &old) in pp.iter().enumerate() {
                assert_eq!(
                    &mg[row * width..(row + 1) * width],
                    &bg[old * width..(old + 1) * width],
                    "trial {trial}, param {layer}, row {row}"
                );
            }
        }
    }
}
