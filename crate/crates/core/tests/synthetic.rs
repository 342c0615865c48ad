//! The synthetic corpus must not be solvable from word counts on documents
//! whose aspects disagree. Checked with a unigram logistic regression that
//! reads the corpus text directly.

use std::collections::BTreeMap;

use sentdoc::eval::{generate_synthetic_corpus, Label};

/// Accuracy on the mixed-label test documents, measured when the generator
/// was written.
const PINNED_MIXED_ACCURACY: [f64; 2] = [0.5120967741935484, 0.5060483870967742];

fn counts(text: &str, index: &BTreeMap<String, usize>) -> Vec<f64> {
    let mut v = vec![0.0; index.len() + 1];
    for w in text.split(|c: char| c.is_whitespace() || c == '.').filter(|w| !w.is_empty()) {
        v[index[w]] += 1.0;
    }
    v[index.len()] = 1.0;
    v
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[test]
fn word_counts_cannot_separate_mixed_documents() {
    let synth = generate_synthetic_corpus(1, 2000, 2).unwrap();
    let mut text = Vec::new();
    synth.write_corpus(&mut text).unwrap();
    let text = String::from_utf8(text).unwrap();
    let bodies: Vec<&str> = text.lines().map(|l| l.split_once('\t').unwrap().1).collect();

    let mut index = BTreeMap::new();
    for b in &bodies {
        for w in b.split(|c: char| c.is_whitespace() || c == '.').filter(|w| !w.is_empty()) {
            let next = index.len();
            index.entry(w.to_string()).or_insert(next);
        }
    }
    let xs: Vec<Vec<f64>> = bodies.iter().map(|b| counts(b, &index)).collect();
    let (train, test): (Vec<usize>, Vec<usize>) = (0..xs.len()).partition(|i| i % 2 == 0);

    for (aspect, pinned) in PINNED_MIXED_ACCURACY.iter().enumerate() {
        let y = |i: usize| if synth.labels[i][aspect] == Label::Positive { 1.0 } else { 0.0 };
        let mut w = vec![0.0; index.len() + 1];
        for _ in 0..300 {
            let mut grad = vec![0.0; w.len()];
            for &i in &train {
                let z: f64 = w.iter().zip(&xs[i]).map(|(a, b)| a * b).sum();
                let err = sigmoid(z) - y(i);
                for (g, x) in grad.iter_mut().zip(&xs[i]) {
                    *g += err * x;
                }
            }
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= 0.5 * g / train.len() as f64;
            }
        }
        let mixed: Vec<usize> = test.iter().copied().filter(|&i| synth.is_order_dependent(i)).collect();
        let correct = mixed
            .iter()
            .filter(|&&i| {
                let z: f64 = w.iter().zip(&xs[i]).map(|(a, b)| a * b).sum();
                (z > 0.0) == (y(i) == 1.0)
            })
            .count();
        let acc = correct as f64 / mixed.len() as f64;
        println!("aspect {aspect}: unigram accuracy on {} mixed documents {acc}", mixed.len());
        assert!(acc <= 0.60);
        assert_eq!(acc, *pinned);
    }
}
