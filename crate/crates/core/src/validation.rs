//! Finite-difference gradient suite over every tape operation and the full
//! encoder plus training loss.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, Vocabulary};
use crate::encoder::{init_model_with, Architecture, InitOptions, InitScheme, ModelParams, ModelVars};
use crate::error::Result;
use crate::numcore::{grad_check, Activation, GradCheckOptions, GradCheckReport, LossForm, Mode, NumArray, Tape, Var};
use crate::objective::{Diagnostics, LossSettings, Objective};

/// Largest relative error the suite accepts.
pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub blocks: usize,
    /// Fewest coordinates checked in any one block.
    pub min_coords: usize,
    pub kinks_skipped: usize,
    /// Every block got `min(size, coords_per_block)` coordinates, or all of
    /// its coordinates away from kinks.
    pub covered: bool,
    pub max_rel_error: f64,
}

impl SuiteEntry {
    fn from_report(name: &str, sizes: &[usize], report: &GradCheckReport, opts: &GradCheckOptions) -> Self {
        SuiteEntry {
            name: name.to_string(),
            blocks: report.blocks.len(),
            min_coords: report.blocks.iter().map(|b| b.coords).min().unwrap_or(0),
            kinks_skipped: report.blocks.iter().map(|b| b.kinks_skipped).sum(),
            covered: report.blocks.len() == sizes.len()
                && report
                    .blocks
                    .iter()
                    .zip(sizes)
                    .all(|(b, &n)| b.coords >= n.min(opts.coords_per_block) || b.coords + b.kinks_skipped >= n),
            max_rel_error: report.max_rel_error,
        }
    }

    pub fn passed(&self) -> bool {
        self.covered && self.max_rel_error < SUITE_TOLERANCE
    }
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(SuiteEntry::passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> NumArray<f64> {
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    let len = shape.iter().product();
    NumArray::new(shape.to_vec(), (0..len).map(|_| dist.sample(rng)).collect()).expect("shape matches length")
}

/// Runs one check; `build` maps the parameter leaves to an array that is
/// reduced to a scalar with fixed random weights.
fn check<F>(
    name: &str,
    mut params: Vec<NumArray<f64>>,
    weights_seed: u64,
    opts: &GradCheckOptions,
    build: F,
) -> Result<SuiteEntry>
where
    F: for<'p> Fn(&mut Tape<'p, f64>, &[Var]) -> Result<Var>,
{
    let sizes: Vec<usize> = params.iter().map(NumArray::len).collect();
    let report = grad_check(
        &mut params,
        |tape, vars| {
            let out = build(tape, vars)?;
            let n = tape.value(out).len();
            let mut rng = ChaCha8Rng::seed_from_u64(weights_seed);
            let w = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            tape.weighted_sum(out, w)
        },
        opts,
    )?;
    Ok(SuiteEntry::from_report(name, &sizes, &report, opts))
}

/// Checks each operation on seeded random inputs, then the full-size
/// encoder pair with both training losses on a three-sentence document.
pub fn gradient_suite(seed: u64) -> Result<SuiteReport> {
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    let mut rng = crate::rng::stream(seed, "gradcheck", 0);
    let mut r = |shape: &[usize]| random(&mut rng, shape);
    let lens = [4usize, 3, 5];
    let mut entries = vec![
        check("embedding", vec![r(&[7, 5])], seed, &opts, |t, v| t.embedding(v[0], &[1, 3, 3, 6, 0, 2]))?,
        check("conv1d", vec![r(&[12, 5]), r(&[4, 2, 5]), r(&[4])], seed, &opts, |t, v| {
            Ok(t.conv1d(v[0], &lens, v[1], v[2])?.0)
        })?,
        check("relu", vec![r(&[6, 4])], seed, &opts, |t, v| t.relu(v[0]))?,
        check("maxpool", vec![r(&[12, 3])], seed, &opts, |t, v| Ok(t.maxpool(v[0], &lens)?.0))?,
        check("avgpool", vec![r(&[12, 3])], seed, &opts, |t, v| t.avgpool(v[0], &lens))?,
        check("dense", vec![r(&[3, 6]), r(&[4, 6]), r(&[4])], seed, &opts, |t, v| {
            t.dense(v[0], v[1], v[2], Activation::None)
        })?,
        check("dense_relu", vec![r(&[3, 6]), r(&[4, 6]), r(&[4])], seed, &opts, |t, v| {
            t.dense(v[0], v[1], v[2], Activation::Relu)
        })?,
        check("dropout", vec![r(&[5, 4])], seed, &opts, |t, v| {
            t.dropout(v[0], 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed))
        })?,
        check("mean_rows", vec![r(&[4, 3])], seed, &opts, |t, v| t.mean_rows(v[0], &[0, 2, 3]))?,
        check("length_adjust", vec![r(&[4, 3])], seed, &opts, |t, v| {
            let m = t.mean_rows(v[0], &[0, 1, 3])?;
            t.length_adjust(m, v[0], &[0, 1, 3])
        })?,
        check("row", vec![r(&[4, 3])], seed, &opts, |t, v| t.row(v[0], 2))?,
        check("dot", vec![r(&[6]), r(&[6])], seed, &opts, |t, v| t.dot(v[0], v[1]))?,
        check("sum", vec![r(&[3]), r(&[3])], seed, &opts, |t, v| t.sum(&[v[0], v[1], v[0]]))?,
        check("scale", vec![r(&[3])], seed, &opts, |t, v| t.scale(v[0], -1.7))?,
    ];
    for (name, form) in [("ns_loss_standard", LossForm::Standard), ("ns_loss_literal", LossForm::Literal)] {
        entries.push(check(name, vec![r(&[1]), r(&[1]), r(&[1])], seed, &opts, |t, v| {
            let target = t.weighted_sum(v[0], vec![2.0])?;
            let n0 = t.weighted_sum(v[1], vec![2.0])?;
            let n1 = t.weighted_sum(v[2], vec![2.0])?;
            t.ns_loss(target, &[n0, n1], form)
        })?);
    }
    entries.push(composite(seed, &opts)?);
    Ok(SuiteReport { entries })
}

/// Both encoders at full size, context and document losses, dropout on with
/// a fixed mask.
fn composite(seed: u64, opts: &GradCheckOptions) -> Result<SuiteEntry> {
    let words: Vec<(String, u64)> = (0..10).map(|i| (format!("w{i}"), 1)).collect();
    let vocab = Vocabulary::from_entries(words)?;
    let doc = |id: &str, sentences: Vec<Vec<u32>>| Document {
        id: id.to_string(),
        sentences,
    };
    let corpus = Corpus::new(
        vec![
            doc("a", vec![vec![2, 3, 4, 5], vec![6, 7, 2], vec![8, 9, 10, 11, 3]]),
            doc("b", vec![vec![11, 10, 4], vec![5, 5, 9, 2, 7, 6]]),
        ],
        vocab,
    )?;
    let init = InitOptions {
        scheme: InitScheme::He,
        embedding_bound: Some(0.5),
    };
    let model: ModelParams<f64> = init_model_with(
        corpus.vocab().len(),
        &Architecture::default(),
        &init,
        &mut crate::rng::stream(seed, crate::rng::INIT, 0),
    )?;
    let objective = Objective::new(
        &corpus,
        LossSettings {
            r: 1,
            mode: Mode::Train,
            ..LossSettings::default()
        },
    )?;
    let mut params: Vec<NumArray<f64>> = model.arrays().into_iter().cloned().collect();
    let diag = Diagnostics::default();
    let sizes: Vec<usize> = params.iter().map(NumArray::len).collect();
    let report = grad_check(
        &mut params,
        |tape, vars| {
            let mv = ModelVars::from_slice(vars);
            let mut rng = crate::rng::document_stream(seed, 0, 0);
            Ok(objective.document_total(tape, &mv, &model, 0, &mut rng, &diag, None)?.total)
        },
        opts,
    )?;
    Ok(SuiteEntry::from_report("encoder_and_loss", &sizes, &report, opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_threshold() {
        let e = SuiteEntry {
            name: "x".into(),
            blocks: 1,
            min_coords: 1,
            kinks_skipped: 0,
            covered: true,
            max_rel_error: 2e-4,
        };
        assert!(!e.passed());
        assert!(!SuiteEntry {
            covered: false,
            max_rel_error: 0.0,
            ..e.clone()
        }
        .passed());
        let report = SuiteReport { entries: vec![e] };
        assert!(!report.passed());
        assert_eq!(report.max_rel_error(), 2e-4);
    }
}
