//! `key<TAB>value` dumps of every intermediate value of one document's
//! training loss, for re-computation by an independent implementation.
//!
//! The dump is taken in inference mode so it holds no dropout masks. Float
//! lists are space separated and printed in shortest round-trip form.
//! Sentences are named `D:S` (document index, sentence index) and every
//! sentence the losses touch is listed with its token ids.
//!
//! Context-loss targets appear as `cntx.T.*` and document-loss targets as
//! `doc.T.*`, where `T` is the zero-based target sentence.

use std::collections::BTreeSet;
use std::io::Write;

use crate::corpus::Corpus;
use crate::encoder::ModelParams;
use crate::error::{Error, Result};
use crate::numcore::{LossForm, Mode, Real, Tape};
use crate::objective::{Diagnostics, LossKind, LossSettings, Objective, Trace};
use crate::rng;

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn join<I: IntoIterator<Item = String>>(items: I) -> String {
    items.into_iter().collect::<Vec<_>>().join(" ")
}

/// Records one document's losses with negatives drawn from the stream an
/// epoch-0 training step would use, and lists every value that went in.
pub fn oracle_dump<T: Real>(
    corpus: &Corpus,
    model: &ModelParams<T>,
    settings: &LossSettings,
    doc: usize,
    seed: u64,
) -> Result<Vec<(String, String)>> {
    if doc >= corpus.len() {
        return Err(Error::IndexOutOfRange {
            what: "corpus documents",
            index: doc,
            size: corpus.len(),
        });
    }
    let settings = LossSettings {
        mode: Mode::Infer,
        ..settings.clone()
    };
    let objective = Objective::new(corpus, settings.clone())?;
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let mut trace = Trace::default();
    let mut stream = rng::document_stream(seed, 0, doc);
    objective.document_total(
        &mut tape,
        &vars,
        model,
        doc,
        &mut stream,
        &Diagnostics::default(),
        Some(&mut trace),
    )?;

    let form = match settings.form {
        LossForm::Standard => "standard",
        LossForm::Literal => "literal",
    };
    let document = corpus.document(doc);
    let mut out: Vec<(String, String)> = vec![
        ("doc_index".into(), doc.to_string()),
        ("doc_id".into(), document.id.clone()),
        ("seed".into(), seed.to_string()),
        ("k".into(), settings.k.to_string()),
        ("r".into(), settings.r.to_string()),
        ("alpha".into(), settings.alpha.to_string()),
        ("loss_form".into(), form.into()),
        ("sentences".into(), document.len().to_string()),
    ];

    let mut touched: BTreeSet<(usize, usize)> = (0..document.len()).map(|s| (doc, s)).collect();
    for t in &trace.targets {
        touched.extend(t.negatives.iter().map(|n| (n.doc, n.sentence)));
    }
    for &(d, s) in &touched {
        let ids = &corpus.document(d).sentences[s];
        out.push((format!("sentence.{d}:{s}"), join(ids.iter().map(u32::to_string))));
    }

    let mut doc_context_written = false;
    for t in &trace.targets {
        let prefix = match t.kind {
            LossKind::Context => format!("cntx.{}", t.target),
            LossKind::Document => {
                if !doc_context_written {
                    out.push(("doc.context".into(), join(t.context_sentences.iter().map(|s| s.to_string()))));
                    out.push(("doc.v_cntx_raw".into(), floats(&t.context_raw)));
                    out.push(("doc.v_cntx".into(), floats(&t.context_used)));
                    doc_context_written = true;
                }
                format!("doc.{}", t.target)
            }
        };
        if t.kind == LossKind::Context {
            out.push((
                format!("{prefix}.context"),
                join(t.context_sentences.iter().map(|s| s.to_string())),
            ));
            out.push((format!("{prefix}.v_cntx"), floats(&t.context_used)));
        }
        out.push((
            format!("{prefix}.negatives"),
            join(t.negatives.iter().map(|n| format!("{}:{}", n.doc, n.sentence))),
        ));
        out.push((format!("{prefix}.l_t"), t.logits.target.to_string()));
        out.push((format!("{prefix}.l_neg"), floats(&t.logits.negatives)));
        out.push((format!("{prefix}.loss"), t.loss.to_string()));
    }
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
    out.push(("L_cntx".into(), opt(trace.context_loss)));
    out.push(("L_doc".into(), opt(trace.document_loss)));
    out.push(("L_total".into(), opt(trace.total_loss)));
    Ok(out)
}

pub fn write_dump<W: Write>(mut w: W, entries: &[(String, String)]) -> Result<()> {
    for (k, v) in entries {
        writeln!(w, "{k}\t{v}")?;
    }
    w.flush()?;
    Ok(())
}
