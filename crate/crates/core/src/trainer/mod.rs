//! End-to-end optimization of both encoders and the shared embedding table.

mod checkpoint;
mod config;
mod optim;
mod sweep;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, MAGIC, VERSION};
pub use config::{OptimizerKind, Precision, TrainingConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use optim::{AdamState, Optimizer};
pub use sweep::{sweep_alpha, write_sweep, FinalLosses, SweepEval, SweepOutcome, SweepRow};

use crate::corpus::Corpus;
use crate::encoder::{init_model_with, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::{NumArray, Real, Tape};
use crate::objective::{Diagnostics, Objective, Ranking, Trace};
use crate::rng;

/// Losses and logit summaries of one optimizer step, averaged over the
/// step's documents.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub epoch: u64,
    /// One-based count of steps taken so far.
    pub step: u64,
    pub documents: Vec<usize>,
    pub total: f64,
    /// `None` when no document in the step had context targets.
    pub context: Option<f64>,
    pub document: f64,
    pub mean_target_logit: f64,
    /// `None` when `r = 0`.
    pub mean_negative_logit: Option<f64>,
}

struct DocumentPass<T> {
    grads: Vec<Option<NumArray<T>>>,
    total: f64,
    context: Option<f64>,
    document: f64,
    target_logits: Vec<f64>,
    negative_logits: Vec<f64>,
}

/// Training state for one precision.
pub struct Trainer<'c, T: Real> {
    corpus: &'c Corpus,
    config: TrainingConfig,
    model: ModelParams<T>,
    optimizer: Optimizer<T>,
    step: u64,
    epochs_completed: u64,
    diagnostics: Diagnostics,
    pool: Option<rayon::ThreadPool>,
}

impl<'c, T: Real> Trainer<'c, T> {
    /// Freshly initialized model drawn from the config seed.
    pub fn new(corpus: &'c Corpus, config: TrainingConfig) -> Result<Self> {
        let mut init_rng = rng::stream(config.seed, rng::INIT, 0);
        let model = init_model_with(corpus.vocab().len(), &config.arch, &config.init, &mut init_rng)?;
        let optimizer = Optimizer::new(config.optimizer, config.learning_rate, &model.arrays());
        Self::assemble(corpus, config, model, optimizer, 0, 0)
    }

    /// Continues from a checkpoint. The checkpoint's architecture wins over
    /// the config's; Adam moments are restored when both use Adam.
    pub fn from_checkpoint(corpus: &'c Corpus, mut config: TrainingConfig, ck: &Checkpoint) -> Result<Self> {
        if ck.model.vocab_size() != corpus.vocab().len() {
            return Err(Error::invalid(format!(
                "checkpoint vocabulary has {} entries, corpus vocabulary {}",
                ck.model.vocab_size(),
                corpus.vocab().len()
            )));
        }
        config.arch = ck.model.arch.clone();
        let model: ModelParams<T> = ck.model.cast();
        let optimizer = match (&ck.adam, config.optimizer) {
            (Some((m, v)), OptimizerKind::Adam) => Optimizer::Adam {
                learning_rate: config.learning_rate,
                state: AdamState {
                    m: m.iter().map(|a| a.cast()).collect(),
                    v: v.iter().map(|a| a.cast()).collect(),
                    t: ck.step,
                },
            },
            _ => Optimizer::new(config.optimizer, config.learning_rate, &model.arrays()),
        };
        Self::assemble(corpus, config, model, optimizer, ck.step, ck.rng.epochs_completed)
    }

    fn assemble(
        corpus: &'c Corpus,
        config: TrainingConfig,
        model: ModelParams<T>,
        optimizer: Optimizer<T>,
        step: u64,
        epochs_completed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        if config.r > 0 && corpus.len() < 2 {
            return Err(Error::NoEligibleNegatives(0));
        }
        let threads = if config.deterministic { 1 } else { config.threads };
        let pool = if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Some(pool)
        } else {
            None
        };
        Ok(Trainer {
            corpus,
            config,
            model,
            optimizer,
            step,
            epochs_completed,
            diagnostics: Diagnostics::default(),
            pool,
        })
    }

    pub fn model(&self) -> &ModelParams<T> {
        &self.model
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn epochs_completed(&self) -> u64 {
        self.epochs_completed
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Changes the step size of later updates.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
        self.optimizer.set_learning_rate(lr);
    }

    fn objective(&self) -> Objective<'c> {
        Objective::new(self.corpus, self.config.loss_settings()).expect("config validated on construction")
    }

    fn document_pass(&self, objective: &Objective<'_>, doc: usize, epoch: u64, grads: bool) -> Result<DocumentPass<T>> {
        let mut tape = Tape::new().checked(self.config.checked);
        let vars = self.model.register(&mut tape);
        let mut rng = rng::document_stream(self.config.seed, epoch, doc);
        let mut trace = Trace::default();
        let losses = objective.document_total(
            &mut tape,
            &vars,
            &self.model,
            doc,
            &mut rng,
            &self.diagnostics,
            Some(&mut trace),
        )?;
        let grads = if grads {
            let mut g = tape.backward(losses.total)?;
            vars.to_vec().into_iter().map(|v| g.take(v)).collect()
        } else {
            Vec::new()
        };
        Ok(DocumentPass {
            grads,
            total: tape.scalar(losses.total).as_f64(),
            context: losses.context.map(|c| tape.scalar(c).as_f64()),
            document: tape.scalar(losses.document).as_f64(),
            target_logits: trace.targets.iter().map(|t| t.logits.target).collect(),
            negative_logits: trace
                .targets
                .iter()
                .flat_map(|t| t.logits.negatives.iter().copied())
                .collect(),
        })
    }

    fn passes(&self, docs: &[usize], epoch: u64, grads: bool) -> Result<Vec<DocumentPass<T>>> {
        let objective = self.objective();
        for &d in docs {
            if d >= self.corpus.len() {
                return Err(Error::IndexOutOfRange {
                    what: "corpus documents",
                    index: d,
                    size: self.corpus.len(),
                });
            }
        }
        match &self.pool {
            Some(pool) if docs.len() > 1 => pool.install(|| {
                docs.par_iter()
                    .map(|&d| self.document_pass(&objective, d, epoch, grads))
                    .collect()
            }),
            _ => docs
                .iter()
                .map(|&d| self.document_pass(&objective, d, epoch, grads))
                .collect(),
        }
    }

    /// Target-ranking tallies of the current model with fresh negatives.
    pub fn ranking(&self, seed: u64) -> Result<Ranking> {
        self.objective().ranking(&self.model, seed)
    }

    /// Mean total loss over `docs` using the random draws that a step in
    /// `epoch` would use, without changing anything.
    pub fn loss(&self, docs: &[usize], epoch: u64) -> Result<f64> {
        let passes = self.passes(docs, epoch, false)?;
        Ok(passes.iter().map(|p| p.total).sum::<f64>() / passes.len() as f64)
    }

    /// One optimizer update on the mean loss of `docs`.
    pub fn step_documents(&mut self, docs: &[usize], epoch: u64) -> Result<StepReport> {
        if docs.is_empty() {
            return Err(Error::Empty("documents for a step"));
        }
        let passes = self.passes(docs, epoch, true)?;
        let n = passes.len();

        // Reduce in document order so the sum does not depend on scheduling.
        let mut grads: Vec<Option<NumArray<T>>> = vec![None; self.model.arrays().len()];
        for pass in &passes {
            for (acc, g) in grads.iter_mut().zip(&pass.grads) {
                match (acc.as_mut(), g) {
                    (Some(a), Some(g)) => a.add_assign(g),
                    (None, Some(g)) => *acc = Some(g.clone()),
                    _ => {}
                }
            }
        }
        if n > 1 {
            let inv = T::one() / T::of(n as f64);
            grads.iter_mut().flatten().for_each(|g| g.scale(inv));
        }
        self.optimizer.step(&mut self.model.arrays_mut(), &grads)?;
        self.step += 1;

        let total = passes.iter().map(|p| p.total).sum::<f64>() / n as f64;
        if self.config.checked {
            if !total.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            if !self.model.is_finite() {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        let contexts: Vec<f64> = passes.iter().filter_map(|p| p.context).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let targets: Vec<f64> = passes.iter().flat_map(|p| p.target_logits.iter().copied()).collect();
        let negatives: Vec<f64> = passes.iter().flat_map(|p| p.negative_logits.iter().copied()).collect();
        Ok(StepReport {
            epoch,
            step: self.step,
            documents: docs.to_vec(),
            total,
            context: (!contexts.is_empty()).then(|| mean(&contexts)),
            document: passes.iter().map(|p| p.document).sum::<f64>() / n as f64,
            mean_target_logit: mean(&targets),
            mean_negative_logit: (!negatives.is_empty()).then(|| mean(&negatives)),
        })
    }

    /// Document order for an epoch.
    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.corpus.len()).collect();
        order.shuffle(&mut rng::stream(self.config.seed, rng::SHUFFLE, epoch));
        order
    }

    /// One pass over the corpus in shuffled order.
    pub fn run_epoch(&mut self, on_step: &mut dyn FnMut(&StepReport)) -> Result<()> {
        let epoch = self.epochs_completed;
        let order = self.epoch_order(epoch);
        for chunk in order.chunks(self.config.docs_per_step) {
            let report = self.step_documents(chunk, epoch)?;
            on_step(&report);
        }
        self.epochs_completed += 1;
        Ok(())
    }

    /// Runs `config.epochs` epochs.
    pub fn run(&mut self, on_step: &mut dyn FnMut(&StepReport)) -> Result<()> {
        for _ in 0..self.config.epochs {
            self.run_epoch(on_step)?;
        }
        let degenerate = self.diagnostics.degenerate_norms();
        if degenerate > 0 {
            log::warn!("{degenerate} context vectors had a near-zero norm");
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let adam = match &self.optimizer {
            Optimizer::Adam { state, .. } => Some((
                state.m.iter().map(|a| a.cast()).collect(),
                state.v.iter().map(|a| a.cast()).collect(),
            )),
            Optimizer::Sgd { .. } => None,
        };
        Checkpoint {
            model: self.model.cast(),
            adam,
            rng: RngState {
                seed: self.config.seed,
                epochs_completed: self.epochs_completed,
            },
            step: self.step,
        }
    }
}

/// Trains a fresh model at the configured precision.
pub fn train(corpus: &Corpus, config: &TrainingConfig, on_step: &mut dyn FnMut(&StepReport)) -> Result<Checkpoint> {
    match config.precision {
        Precision::F32 => {
            let mut t = Trainer::<f32>::new(corpus, config.clone())?;
            t.run(on_step)?;
            Ok(t.checkpoint())
        }
        Precision::F64 => {
            let mut t = Trainer::<f64>::new(corpus, config.clone())?;
            t.run(on_step)?;
            Ok(t.checkpoint())
        }
    }
}
