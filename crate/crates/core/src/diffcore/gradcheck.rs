use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor of the relative error, so that gradients that are
    /// zero up to rounding compare on an absolute scale.
    pub floor: f64,
    /// Check only this many randomly chosen coordinates.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            floor: 1e-6,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords: usize,
    /// Coordinates left out because `x ± step` ran on a different smooth
    /// piece than `x` (see [`Tape::branch_signature`]). A central
    /// difference across a kink measures nothing about the gradient.
    pub skipped: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            coords: self.coords + other.coords,
            skipped: self.skipped + other.skipped,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of `f` at `inputs` against central finite
/// differences of the forward pass alone.
pub fn check_gradients<F>(
    inputs: &[Tensor<f64>],
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(f64, u64), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.value(out).item(), tape.branch_signature()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let piece = tape.branch_signature();
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map_or_else(|| vec![0.0; t.numel()], |g| g.data().to_vec())
        })
        .collect();

    let mut coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    if let Some(limit) = opts.max_coords {
        if limit < coords.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked: Vec<usize> = sample(&mut rng, coords.len(), limit).into_vec();
            picked.sort_unstable();
            coords = picked.into_iter().map(|k| coords[k]).collect();
        }
    }

    let mut report = GradCheck::default();
    let mut values = inputs.to_vec();
    for (i, j) in coords {
        let original = values[i].data()[j];
        values[i].data_mut()[j] = original + opts.step;
        let (plus, plus_piece) = eval(&values)?;
        values[i].data_mut()[j] = original - opts.step;
        let (minus, minus_piece) = eval(&values)?;
        values[i].data_mut()[j] = original;
        if plus_piece != piece || minus_piece != piece {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[i][j];
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        report.max_rel_error = report
            .max_rel_error
            .max(relative_error(a, numeric, opts.floor));
        report.coords += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_sum(t: &mut Tape<f64>, v: &[Var]) -> Result<Var, TensorError> {
        let r = t.relu(v[0])?;
        t.sum(r)
    }

    #[test]
    fn stencil_across_a_kink_is_skipped_not_scored() {
        // The first coordinate sits inside the stencil of relu's kink.
        let x = Tensor::from_f64(&[1, 2], &[1e-7, 0.7]).unwrap();
        let opts = GradCheckOptions::default();
        let r = check_gradients(&[x], relu_sum, &opts).unwrap();
        assert_eq!((r.coords, r.skipped), (1, 1));
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // Claims d/dx x^2 = x by routing the backward pass through a
        // detached copy.
        let x = Tensor::from_f64(&[1, 1], &[0.8]).unwrap();
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let c = t.constant(t.value(v[0]).clone());
            let y = t.mul(v[0], c)?;
            t.sum(y)
        };
        let r = check_gradients(&[x], f, &GradCheckOptions::default()).unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-6, "{r:?}");
    }
}
