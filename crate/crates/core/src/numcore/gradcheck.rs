//! Central-difference gradient checking against tape gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NumArray, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates sampled per parameter block; smaller blocks are checked fully.
    pub coords_per_block: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            coords_per_block: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub block: usize,
    pub coords: usize,
    /// Coordinates passed over because `x ± ε` crossed a ReLU or max-pool
    /// switch point, where the function has no derivative to compare.
    pub kinks_skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub max_rel_error: f64,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn evaluate<F>(params: &[NumArray<f64>], f: &F) -> Result<(f64, u64)>
where
    F: for<'p> Fn(&mut Tape<'p, f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape.scalar(out), tape.branch_signature()))
}

/// Compares the tape gradient of the scalar built by `f` with central
/// differences, one parameter block at a time.
///
/// `f` receives a fresh tape and one leaf per entry of `params`. It must be
/// deterministic; two unperturbed evaluations are compared bit for bit.
/// Blocks larger than `coords_per_block` are sampled in a seeded random
/// order; a coordinate whose perturbation flips a ReLU or max-pool choice is
/// skipped and the next one is taken instead.
pub fn grad_check<F>(
    params: &mut [NumArray<f64>],
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: for<'p> Fn(&mut Tape<'p, f64>, &[Var]) -> Result<Var>,
{
    let (analytic, base_signature) = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let out = f(&mut tape, &vars)?;
        let first = tape.scalar(out);
        let signature = tape.branch_signature();
        let mut grads = tape.backward(out)?;
        let (second, _) = evaluate(params, &f)?;
        if first.to_bits() != second.to_bits() {
            return Err(Error::NonDeterministic { first, second });
        }
        let analytic: Vec<NumArray<f64>> = vars
            .iter()
            .zip(params.iter())
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| NumArray::zeros(p.shape().to_vec())))
            .collect();
        (analytic, signature)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = opts.epsilon;
    let mut blocks = Vec::with_capacity(params.len());
    for b in 0..params.len() {
        let len = params[b].len();
        let mut order: Vec<usize> = (0..len).collect();
        if len > opts.coords_per_block {
            order.shuffle(&mut rng);
        }
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mut kinks_skipped = 0;
        for i in order {
            if checked == opts.coords_per_block {
                break;
            }
            let orig = params[b].data()[i];
            params[b].data_mut()[i] = orig + eps;
            let plus = evaluate(params, &f);
            params[b].data_mut()[i] = orig - eps;
            let minus = evaluate(params, &f);
            params[b].data_mut()[i] = orig;
            let ((plus, sp), (minus, sm)) = (plus?, minus?);
            if sp != base_signature || sm != base_signature {
                kinks_skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[b].data()[i], numeric));
            checked += 1;
        }
        blocks.push(BlockReport {
            block: b,
            coords: checked,
            kinks_skipped,
            max_rel_error: worst,
        });
    }
    let max_rel_error = blocks.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        blocks,
        max_rel_error,
    })
}
