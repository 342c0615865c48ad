//! Downstream evaluation: per-aspect linear SVMs on frozen document
//! vectors, label handling, the averaged-word-vector baseline and the
//! synthetic review generator.

mod labels;
mod svm;
mod synth;

use std::collections::HashMap;
use std::io::Write;

use rand::seq::SliceRandom;

pub use labels::{
    make_aspect_label, make_aspect_label_with, AspectScores, LabelTable, NEGATIVE_THRESHOLD, POSITIVE_THRESHOLD,
    SCORE_ASPECTS,
};
pub use svm::{
    accuracy, train_linear_svm, train_linear_svm_fit, Label, LabeledSet, LinearModel, Standardizer, SvmFit,
    SvmOptions,
};
pub use synth::{generate_synthetic_corpus, generate_toy_corpus, SyntheticCorpus, ASPECT_WORDS};

use crate::corpus::{Corpus, PAD};
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::numcore::Real;
use crate::rng;

/// Shuffles `n` items with the seed's split stream and returns
/// `(train, test)` index lists; the train side gets `round(n × fraction)`.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("split {train_fraction} not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split", 0));
    let cut = (n as f64 * train_fraction).round() as usize;
    let test = order.split_off(cut);
    Ok((order, test))
}

/// Classifier and held-out data of one aspect.
#[derive(Clone, Debug)]
pub struct AspectEvaluation {
    pub aspect: String,
    pub model: LinearModel,
    pub train_size: usize,
    pub test_ids: Vec<String>,
    pub test: LabeledSet,
    pub accuracy: f64,
}

impl AspectEvaluation {
    /// Accuracy restricted to held-out documents selected by `keep`.
    pub fn subset_accuracy(&self, keep: impl Fn(&str) -> bool) -> Result<f64> {
        let points = self
            .test_ids
            .iter()
            .zip(self.test.points())
            .filter(|(id, _)| keep(id))
            .map(|(_, p)| p.clone())
            .collect();
        accuracy(&self.model, &LabeledSet::new(points)?)
    }
}

/// Splits labeled documents once, then trains and scores one SVM per
/// aspect. Excluded labels drop a document from that aspect only. Every
/// labeled document needs a vector.
pub fn evaluate_aspects(
    vectors: &[(String, Vec<f64>)],
    labels: &LabelTable,
    train_fraction: f64,
    opts: &SvmOptions,
) -> Result<Vec<AspectEvaluation>> {
    let by_id: HashMap<&str, &[f64]> = vectors.iter().map(|(id, v)| (id.as_str(), v.as_slice())).collect();
    for (id, _) in &labels.rows {
        if !by_id.contains_key(id.as_str()) {
            return Err(Error::invalid(format!("no vector for labeled document {id}")));
        }
    }
    let (train_idx, test_idx) = split_indices(labels.rows.len(), train_fraction, opts.seed)?;
    labels
        .aspects
        .iter()
        .enumerate()
        .map(|(a, aspect)| {
            let collect = |idx: &[usize]| -> (Vec<String>, Vec<(Vec<f64>, Label)>) {
                idx.iter()
                    .filter_map(|&i| {
                        let (id, l) = &labels.rows[i];
                        l[a].map(|label| (id.clone(), (by_id[id.as_str()].to_vec(), label)))
                    })
                    .unzip()
            };
            let (_, train_points) = collect(&train_idx);
            let (test_ids, test_points) = collect(&test_idx);
            let train = LabeledSet::new(train_points)?;
            let test = LabeledSet::new(test_points)?;
            let model = train_linear_svm(&train, opts)?;
            Ok(AspectEvaluation {
                aspect: aspect.clone(),
                accuracy: accuracy(&model, &test)?,
                model,
                train_size: train.len(),
                test_ids,
                test,
            })
        })
        .collect()
}

/// Mean of the embedding-table rows of every token in each document.
pub fn average_word_embeddings<T: Real>(model: &ModelParams<T>, corpus: &Corpus) -> Vec<(String, Vec<f64>)> {
    let d = model.arch.embedding_dim;
    corpus
        .documents()
        .iter()
        .map(|doc| {
            let mut acc = vec![0.0; d];
            let mut n = 0usize;
            for &id in doc.sentences.iter().flatten().filter(|&&id| id != PAD) {
                for (a, x) in acc.iter_mut().zip(model.embedding.row(id as usize)) {
                    *a += x.as_f64();
                }
                n += 1;
            }
            acc.iter_mut().for_each(|a| *a /= n.max(1) as f64);
            (doc.id.clone(), acc)
        })
        .collect()
}

/// `#key=value` metadata lines, then one `aspect<TAB>accuracy` row each.
pub fn write_results<W: Write>(mut w: W, meta: &[(&str, String)], results: &[(String, f64)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "#{k}={v}")?;
    }
    for (aspect, acc) in results {
        writeln!(w, "{aspect}\t{acc:.6}")?;
    }
    w.flush()?;
    Ok(())
}
