use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Binary class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    /// `+1` / `-1`, as used in label files.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "+1" | "1" => Some(Label::Positive),
            "-1" => Some(Label::Negative),
            _ => None,
        }
    }
}

/// Feature vectors with binary labels, all of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    points: Vec<(Vec<f64>, Label)>,
}

impl LabeledSet {
    pub fn new(points: Vec<(Vec<f64>, Label)>) -> Result<Self> {
        let dim = points.first().ok_or(Error::Empty("labeled set"))?.0.len();
        if let Some((v, _)) = points.iter().find(|(v, _)| v.len() != dim) {
            return Err(Error::shape(
                "LabeledSet::new",
                format!("vector of length {} in a set of dimension {dim}", v.len()),
            ));
        }
        if points.iter().any(|(v, _)| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("labeled set features"));
        }
        Ok(LabeledSet { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(Vec<f64>, Label)] {
        &self.points
    }
}

/// Per-dimension mean and standard deviation of a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics of `train`. Constant dimensions get a unit deviation.
    pub fn fit(train: &LabeledSet) -> Self {
        let n = train.len() as f64;
        let mut mean = vec![0.0; train.dim()];
        for (v, _) in train.points() {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; train.dim()];
        for (v, _) in train.points() {
            for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmOptions {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            lambda: 1e-4,
            epochs: 50,
            seed: 0,
        }
    }
}

/// Linear decision function on raw (unstandardized) features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// Ties go to the positive class.
    pub fn predict(&self, x: &[f64]) -> Label {
        if self.decision(x) >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// A trained classifier plus the regularized objective after each epoch.
#[derive(Clone, Debug)]
pub struct SvmFit {
    pub model: LinearModel,
    pub standardizer: Standardizer,
    pub objective_per_epoch: Vec<f64>,
}

/// `λ/2 ‖w‖² + mean hinge`, with the bias folded into `w`.
fn objective(w: &[f64], xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / xs.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Primal stochastic subgradient descent with step `1/(λt)` and projection
/// onto the ball of radius `1/√λ`. Features are standardized with training
/// statistics and a constant feature carries the bias; the result is mapped
/// back to raw feature space.
pub fn train_linear_svm_fit(train: &LabeledSet, opts: &SvmOptions) -> Result<SvmFit> {
    if opts.lambda.is_nan() || opts.lambda <= 0.0 {
        return Err(Error::invalid(format!("lambda {} must be positive", opts.lambda)));
    }
    let has = |l: Label| train.points().iter().any(|(_, y)| *y == l);
    if !has(Label::Positive) || !has(Label::Negative) {
        return Err(Error::SingleClass);
    }
    let standardizer = Standardizer::fit(train);
    let xs: Vec<Vec<f64>> = train
        .points()
        .iter()
        .map(|(x, _)| {
            let mut z = standardizer.apply(x);
            z.push(1.0);
            z
        })
        .collect();
    let ys: Vec<f64> = train.points().iter().map(|(_, y)| y.sign()).collect();

    let lambda = opts.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; train.dim() + 1];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0u64;
    let mut objective_per_epoch = Vec::with_capacity(opts.epochs);
    // The last stochastic iterate wanders; keep the best epoch-end iterate.
    let mut best = w.clone();
    let mut best_objective = f64::INFINITY;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng::stream(opts.seed, "svm", epoch as u64));
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let violated = ys[i] * dot(&w, &xs[i]) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                for (v, x) in w.iter_mut().zip(&xs[i]) {
                    *v += eta * ys[i] * x;
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
        let current = objective(&w, &xs, &ys, lambda);
        if current <= best_objective {
            best_objective = current;
            best.clone_from(&w);
        }
        objective_per_epoch.push(best_objective);
    }
    let w = best;

    // w·((x - μ)/σ) + b  =  (w/σ)·x + (b - Σ wμ/σ)
    let d = train.dim();
    let mut bias = w[d];
    let weights = (0..d)
        .map(|j| {
            let raw = w[j] / standardizer.std[j];
            bias -= raw * standardizer.mean[j];
            raw
        })
        .collect();
    Ok(SvmFit {
        model: LinearModel { weights, bias },
        standardizer,
        objective_per_epoch,
    })
}

pub fn train_linear_svm(train: &LabeledSet, opts: &SvmOptions) -> Result<LinearModel> {
    Ok(train_linear_svm_fit(train, opts)?.model)
}

/// Fraction of points whose predicted sign matches the label.
pub fn accuracy(model: &LinearModel, test: &LabeledSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if test.dim() != model.weights.len() {
        return Err(Error::shape(
            "accuracy",
            format!("model has {} weights, test set dimension {}", model.weights.len(), test.dim()),
        ));
    }
    let correct = test.points().iter().filter(|(x, y)| model.predict(x) == *y).count();
    Ok(correct as f64 / test.len() as f64)
}
