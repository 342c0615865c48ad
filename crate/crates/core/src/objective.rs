//! Training objective.
//!
//! A context vector is the elementwise mean of context-encoder sentence
//! vectors. Candidates (the true target and `r` negatives drawn from other
//! documents) are scored by their inner product with it and combined with
//! a negative-sampling loss.
//!
//! * Context loss: for each target with `k` sentences on both sides, the
//!   context is the unadjusted mean of those `2k` neighbours. Averaged over
//!   the `n - 2k` valid targets.
//! * Document loss: one context built from every sentence of the document
//!   (targets included) and rescaled to the mean constituent length; every
//!   sentence is a target. Averaged over `n`.
//! * Total: `alpha * context + (1 - alpha) * document`, or just the document
//!   loss when the document is too short to have context targets.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::corpus::{sample_negatives, Corpus, SentenceRef};
use crate::encoder::{encode_on_tape, EncoderKind, ModelParams, ModelVars, SentenceVector};
use crate::error::{Error, Result};
use crate::numcore::ops::l2_norm;
use crate::numcore::{adjust_length, ns_loss_value, Mode, NumArray, Real, Tape, Var};

pub use crate::numcore::{LossForm, NORM_EPSILON};

/// Counters for conditions that training tolerates but should surface.
#[derive(Debug, Default)]
pub struct Diagnostics {
    degenerate_norms: AtomicU64,
    skipped_context: AtomicU64,
}

impl Diagnostics {
    pub fn degenerate_norms(&self) -> u64 {
        self.degenerate_norms.load(Ordering::Relaxed)
    }

    pub fn skipped_context(&self) -> u64 {
        self.skipped_context.load(Ordering::Relaxed)
    }

    pub(crate) fn add_degenerate(&self, n: u64) {
        self.degenerate_norms.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn add_skipped(&self) {
        self.skipped_context.fetch_add(1, Ordering::Relaxed);
    }
}

/// Averaged sentence vectors plus the lengths of what was averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextVector<T> {
    pub values: Vec<T>,
    pub constituent_lengths: Vec<T>,
}

/// Target logit and negative logits for one prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitSet {
    pub target: f64,
    pub negatives: Vec<f64>,
}

pub fn neg_sampling_loss(logits: &LogitSet, form: LossForm) -> f64 {
    ns_loss_value(logits.target, &logits.negatives, form)
}

/// Elementwise mean, summed in 64-bit, with the L2 length of each input.
pub fn mean_vectors<T: Real>(vs: &[SentenceVector<T>]) -> Result<ContextVector<T>> {
    let first = vs.first().ok_or(Error::Empty("mean over zero vectors"))?;
    let d = first.len();
    if vs.iter().any(|v| v.len() != d) {
        return Err(Error::shape("mean_vectors", "vectors differ in length"));
    }
    let mut acc = vec![0.0f64; d];
    for v in vs {
        for (a, &x) in acc.iter_mut().zip(v.values()) {
            *a += x.as_f64();
        }
    }
    let n = vs.len() as f64;
    Ok(ContextVector {
        values: acc.into_iter().map(|a| T::of(a / n)).collect(),
        constituent_lengths: vs.iter().map(|v| l2_norm(v.values())).collect(),
    })
}

/// Rescales the context to the mean constituent length. A context whose
/// norm is below [`NORM_EPSILON`] is returned unchanged and counted.
pub fn length_adjust<T: Real>(cv: &ContextVector<T>, diag: &Diagnostics) -> Vec<T> {
    match adjust_length(&cv.values, &cv.constituent_lengths) {
        Some(adj) => adj.values,
        None => {
            diag.add_degenerate(1);
            cv.values.clone()
        }
    }
}

/// Like [`length_adjust`] but a degenerate norm is an error.
pub fn length_adjust_strict<T: Real>(cv: &ContextVector<T>) -> Result<Vec<T>> {
    adjust_length(&cv.values, &cv.constituent_lengths)
        .map(|adj| adj.values)
        .ok_or_else(|| Error::DegenerateNorm(l2_norm(&cv.values).as_f64()))
}

/// `alpha * context + (1 - alpha) * document`; a skipped context loss
/// leaves only the document term.
pub fn total_loss(alpha: f64, context: Option<f64>, document: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(match context {
        Some(c) => alpha * c + (1.0 - alpha) * document,
        None => document,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} not in [0, 1]")))
    }
}

/// Hyperparameters of the objective.
#[derive(Clone, Debug)]
pub struct LossSettings {
    /// Context sentences on each side of a target.
    pub k: usize,
    /// Negatives per target.
    pub r: usize,
    pub alpha: f64,
    pub form: LossForm,
    pub mode: Mode,
}

impl Default for LossSettings {
    fn default() -> Self {
        LossSettings {
            k: 1,
            r: 5,
            alpha: 0.7,
            form: LossForm::Standard,
            mode: Mode::Train,
        }
    }
}

impl LossSettings {
    /// Zero-based targets with a full context window, if any.
    pub fn context_targets(&self, n: usize) -> Option<std::ops::Range<usize>> {
        (n > 2 * self.k).then(|| self.k..n - self.k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Context,
    Document,
}

/// Everything that went into one target's loss.
#[derive(Clone, Debug)]
pub struct TargetTrace {
    pub kind: LossKind,
    /// Zero-based sentence index of the target.
    pub target: usize,
    pub context_sentences: Vec<usize>,
    pub negatives: Vec<SentenceRef>,
    /// Mean of the context vectors before any length adjustment.
    pub context_raw: Vec<f64>,
    /// The vector actually dotted with the candidates.
    pub context_used: Vec<f64>,
    pub logits: LogitSet,
    pub loss: f64,
}

/// Instrumentation record of one document's losses.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub targets: Vec<TargetTrace>,
    pub context_loss: Option<f64>,
    pub document_loss: Option<f64>,
    pub total_loss: Option<f64>,
}

impl Trace {
    pub fn document_context(&self) -> Option<&[f64]> {
        self.targets
            .iter()
            .find(|t| t.kind == LossKind::Document)
            .map(|t| t.context_used.as_slice())
    }
}

/// Tape handles for one document's losses.
#[derive(Clone, Copy, Debug)]
pub struct DocumentLosses {
    pub total: Var,
    pub context: Option<Var>,
    pub document: Var,
}

/// `(hits, targets)` per loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ranking {
    pub context: (usize, usize),
    pub document: (usize, usize),
}

impl Ranking {
    /// Hits over all targets of both losses.
    pub fn accuracy(&self) -> f64 {
        let hits = self.context.0 + self.document.0;
        let total = self.context.1 + self.document.1;
        hits as f64 / total.max(1) as f64
    }
}

/// Builds losses on a tape for documents of one corpus.
pub struct Objective<'c> {
    corpus: &'c Corpus,
    settings: LossSettings,
}

struct Prediction {
    target: usize,
    context: Vec<usize>,
}

impl<'c> Objective<'c> {
    pub fn new(corpus: &'c Corpus, settings: LossSettings) -> Result<Self> {
        check_alpha(settings.alpha)?;
        if settings.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(Objective { corpus, settings })
    }

    pub fn settings(&self) -> &LossSettings {
        &self.settings
    }

    /// Context loss of one target, `k ≤ t < n - k` (zero-based).
    #[allow(clippy::too_many_arguments)]
    pub fn context_loss_for_target<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        vars: &ModelVars,
        model: &ModelParams<T>,
        doc: usize,
        t: usize,
        rng: &mut R,
        trace: Option<&mut Trace>,
    ) -> Result<Var> {
        let n = self.corpus.document(doc).len();
        let k = self.settings.k;
        if t < k || t + k >= n {
            return Err(Error::TargetOutOfRange {
                t,
                lo: k,
                hi: n.saturating_sub(k + 1),
            });
        }
        let preds = [self.local_prediction(t)];
        let losses = self.predictions(tape, vars, model, doc, &preds, LossKind::Context, rng, trace)?;
        Ok(losses[0])
    }

    /// Mean context loss over the `n - 2k` targets with a full window.
    pub fn context_loss<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        vars: &ModelVars,
        model: &ModelParams<T>,
        doc: usize,
        rng: &mut R,
        mut trace: Option<&mut Trace>,
    ) -> Result<Var> {
        let n = self.corpus.document(doc).len();
        let targets = self.settings.context_targets(n).ok_or(Error::NoValidTargets {
            sentences: n,
            k: self.settings.k,
        })?;
        let preds: Vec<Prediction> = targets.map(|t| self.local_prediction(t)).collect();
        let losses = self.predictions(
            tape,
            vars,
            model,
            doc,
            &preds,
            LossKind::Context,
            rng,
            trace.as_deref_mut(),
        )?;
        let mean = self.mean(tape, &losses)?;
        if let Some(tr) = trace {
            tr.context_loss = Some(tape.scalar(mean).as_f64());
        }
        Ok(mean)
    }

    /// Mean over every sentence of the loss against the whole-document,
    /// length-adjusted context.
    pub fn document_loss<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        vars: &ModelVars,
        model: &ModelParams<T>,
        doc: usize,
        rng: &mut R,
        mut trace: Option<&mut Trace>,
    ) -> Result<Var> {
        let n = self.corpus.document(doc).len();
        let all: Vec<usize> = (0..n).collect();
        let preds: Vec<Prediction> = (0..n)
            .map(|t| Prediction {
                target: t,
                context: all.clone(),
            })
            .collect();
        let losses = self.predictions(
            tape,
            vars,
            model,
            doc,
            &preds,
            LossKind::Document,
            rng,
            trace.as_deref_mut(),
        )?;
        let mean = self.mean(tape, &losses)?;
        if let Some(tr) = trace {
            tr.document_loss = Some(tape.scalar(mean).as_f64());
        }
        Ok(mean)
    }

    /// Weighted total for one document. Documents with `n ≤ 2k` contribute
    /// only the document loss; the skip is counted in `diag`.
    #[allow(clippy::too_many_arguments)]
    pub fn document_total<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        vars: &ModelVars,
        model: &ModelParams<T>,
        doc: usize,
        rng: &mut R,
        diag: &Diagnostics,
        mut trace: Option<&mut Trace>,
    ) -> Result<DocumentLosses> {
        let n = self.corpus.document(doc).len();
        let degenerate_before = tape.degenerate_norms();
        let context = match self.settings.context_targets(n) {
            Some(_) => Some(self.context_loss(tape, vars, model, doc, rng, trace.as_deref_mut())?),
            None => {
                diag.add_skipped();
                None
            }
        };
        let document = self.document_loss(tape, vars, model, doc, rng, trace.as_deref_mut())?;
        let alpha = self.settings.alpha;
        let total = match context {
            Some(c) => {
                let a = tape.scale(c, T::of(alpha))?;
                let b = tape.scale(document, T::of(1.0 - alpha))?;
                tape.sum(&[a, b])?
            }
            None => document,
        };
        diag.add_degenerate((tape.degenerate_norms() - degenerate_before) as u64);
        if let Some(tr) = trace {
            tr.total_loss = Some(tape.scalar(total).as_f64());
        }
        Ok(DocumentLosses {
            total,
            context,
            document,
        })
    }

    /// Share of targets whose logit beats every negative, with the model in
    /// inference mode and negatives from the seed's ranking stream.
    pub fn ranking<T: Real>(&self, model: &ModelParams<T>, seed: u64) -> Result<Ranking> {
        let objective = Objective {
            corpus: self.corpus,
            settings: LossSettings {
                mode: Mode::Infer,
                ..self.settings.clone()
            },
        };
        let diag = Diagnostics::default();
        let mut out = Ranking::default();
        for doc in 0..self.corpus.len() {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape);
            let mut rng = crate::rng::stream(seed, crate::rng::RANKING, doc as u64);
            let mut trace = Trace::default();
            objective.document_total(&mut tape, &vars, model, doc, &mut rng, &diag, Some(&mut trace))?;
            for t in &trace.targets {
                let hit = t.logits.negatives.iter().all(|&n| t.logits.target > n);
                let tally = match t.kind {
                    LossKind::Context => &mut out.context,
                    LossKind::Document => &mut out.document,
                };
                tally.0 += usize::from(hit);
                tally.1 += 1;
            }
        }
        Ok(out)
    }

    fn local_prediction(&self, t: usize) -> Prediction {
        let k = self.settings.k;
        Prediction {
            target: t,
            context: (t - k..t).chain(t + 1..=t + k).collect(),
        }
    }

    fn mean<T: Real>(&self, tape: &mut Tape<'_, T>, losses: &[Var]) -> Result<Var> {
        let sum = tape.sum(losses)?;
        tape.scale(sum, T::one() / T::of(losses.len() as f64))
    }

    /// Records one loss per prediction. Negatives for every prediction are
    /// drawn first, then the context batch is encoded, then the candidate
    /// batch; that fixes the order in which `rng` is consumed.
    #[allow(clippy::too_many_arguments)]
    fn predictions<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_, T>,
        vars: &ModelVars,
        model: &ModelParams<T>,
        doc: usize,
        preds: &[Prediction],
        kind: LossKind,
        rng: &mut R,
        mut trace: Option<&mut Trace>,
    ) -> Result<Vec<Var>> {
        let corpus = self.corpus;
        let sentences = &corpus.document(doc).sentences;
        let r = self.settings.r;
        let negatives: Vec<Vec<SentenceRef>> = preds
            .iter()
            .map(|_| sample_negatives(corpus, doc, r, rng))
            .collect::<Result<_>>()?;

        // Document predictions all share one context; encode it once.
        let shared = kind == LossKind::Document;
        let context_batch: Vec<&[u32]> = if shared {
            preds[0].context.iter().map(|&i| sentences[i].as_slice()).collect()
        } else {
            preds
                .iter()
                .flat_map(|p| p.context.iter().map(|&i| sentences[i].as_slice()))
                .collect()
        };
        let arch = &model.arch;
        let mode = self.settings.mode;
        let ctx_mat = encode_on_tape(tape, vars, arch, EncoderKind::Context, &context_batch, mode, rng)?;

        let mut candidate_batch: Vec<&[u32]> = Vec::with_capacity(preds.len() * (r + 1));
        for (p, negs) in preds.iter().zip(&negatives) {
            candidate_batch.push(&sentences[p.target]);
            candidate_batch.extend(negs.iter().map(|&n| corpus.sentence(n)));
        }
        let cand_mat = encode_on_tape(tape, vars, arch, EncoderKind::Candidate, &candidate_batch, mode, rng)?;

        let shared_ctx = if shared {
            let rows: Vec<usize> = (0..context_batch.len()).collect();
            let mean = tape.mean_rows(ctx_mat, &rows)?;
            let adjusted = tape.length_adjust(mean, ctx_mat, &rows)?;
            Some((mean, adjusted))
        } else {
            None
        };

        let mut losses = Vec::with_capacity(preds.len());
        let mut ctx_row = 0;
        for (i, (p, negs)) in preds.iter().zip(&negatives).enumerate() {
            let (raw, used) = match shared_ctx {
                Some(pair) => pair,
                None => {
                    let rows: Vec<usize> = (ctx_row..ctx_row + p.context.len()).collect();
                    ctx_row += p.context.len();
                    let mean = tape.mean_rows(ctx_mat, &rows)?;
                    (mean, mean)
                }
            };
            let base = i * (r + 1);
            let target_vec = tape.row(cand_mat, base)?;
            let target_logit = tape.dot(used, target_vec)?;
            let mut neg_logits = Vec::with_capacity(r);
            for j in 0..r {
                let v = tape.row(cand_mat, base + 1 + j)?;
                neg_logits.push(tape.dot(used, v)?);
            }
            let loss = tape.ns_loss(target_logit, &neg_logits, self.settings.form)?;
            losses.push(loss);

            if let Some(tr) = trace.as_deref_mut() {
                let to_f64 = |v: &NumArray<T>| v.data().iter().map(|x| x.as_f64()).collect::<Vec<_>>();
                tr.targets.push(TargetTrace {
                    kind,
                    target: p.target,
                    context_sentences: p.context.clone(),
                    negatives: negs.clone(),
                    context_raw: to_f64(tape.value(raw)),
                    context_used: to_f64(tape.value(used)),
                    logits: LogitSet {
                        target: tape.scalar(target_logit).as_f64(),
                        negatives: neg_logits.iter().map(|&l| tape.scalar(l).as_f64()).collect(),
                    },
                    loss: tape.scalar(loss).as_f64(),
                });
            }
        }
        Ok(losses)
    }
}
