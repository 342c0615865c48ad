use std::io::Write;

use super::{train, StepReport, TrainingConfig};
use crate::corpus::Corpus;
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::eval::{evaluate_aspects, LabelTable, SvmOptions};
use crate::inference::embed_documents;

/// Mean losses over the last epoch's steps.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalLosses {
    pub total: f64,
    pub context: Option<f64>,
    pub document: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    /// `None` when no step ran (zero epochs).
    pub losses: Option<FinalLosses>,
    /// Held-out accuracy per aspect, in label-table order.
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub alpha: f64,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

/// Held-out labels and the classifier protocol used to score each model.
#[derive(Clone, Debug)]
pub struct SweepEval<'a> {
    pub labels: &'a LabelTable,
    pub train_fraction: f64,
    pub svm: SvmOptions,
}

/// Trains one model per alpha from the same seed and scores its document
/// vectors. A failing row records its error and the sweep moves on.
pub fn sweep_alpha(
    corpus: &Corpus,
    base: &TrainingConfig,
    alphas: &[f64],
    eval: &SweepEval<'_>,
) -> Result<Vec<SweepRow>> {
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid(format!("alpha {a} not in [0, 1]")));
    }
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let outcome = sweep_one(corpus, base, alpha, eval).map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("alpha {alpha}: {e}");
            }
            SweepRow { alpha, outcome }
        })
        .collect())
}

fn sweep_one(corpus: &Corpus, base: &TrainingConfig, alpha: f64, eval: &SweepEval<'_>) -> Result<SweepOutcome> {
    let config = TrainingConfig {
        alpha,
        ..base.clone()
    };
    let last_epoch = config.epochs.checked_sub(1);
    let mut last: Vec<StepReport> = Vec::new();
    let ck = train(corpus, &config, &mut |r: &StepReport| {
        if Some(r.epoch) == last_epoch {
            last.push(r.clone());
        }
    })?;
    let losses = (!last.is_empty()).then(|| {
        let n = last.len() as f64;
        let contexts: Vec<f64> = last.iter().filter_map(|r| r.context).collect();
        FinalLosses {
            total: last.iter().map(|r| r.total).sum::<f64>() / n,
            context: (!contexts.is_empty()).then(|| contexts.iter().sum::<f64>() / contexts.len() as f64),
            document: last.iter().map(|r| r.document).sum::<f64>() / n,
        }
    });
    let vectors: Vec<(String, Vec<f64>)> = embed_documents(&ck.model, corpus, EncoderKind::Context)?
        .into_iter()
        .map(|(id, v)| (id, v.into_iter().map(f64::from).collect()))
        .collect();
    let results = evaluate_aspects(&vectors, eval.labels, eval.train_fraction, &eval.svm)?;
    Ok(SweepOutcome {
        losses,
        accuracies: results.iter().map(|r| r.accuracy).collect(),
    })
}

/// Tab-separated table: a header naming the aspects, then one row per
/// alpha. Missing values are `-`; failed rows read `error<TAB>message`.
pub fn write_sweep<W: Write>(mut w: W, aspects: &[String], rows: &[SweepRow]) -> Result<()> {
    write!(w, "alpha\tL_total\tL_cntx\tL_doc")?;
    for a in aspects {
        write!(w, "\t{a}")?;
    }
    writeln!(w)?;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    for row in rows {
        write!(w, "{}", row.alpha)?;
        match &row.outcome {
            Ok(o) => {
                let l = o.losses.as_ref();
                write!(
                    w,
                    "\t{}\t{}\t{}",
                    opt(l.map(|l| l.total)),
                    opt(l.and_then(|l| l.context)),
                    opt(l.map(|l| l.document))
                )?;
                for acc in &o.accuracies {
                    write!(w, "\t{acc:.6}")?;
                }
            }
            Err(e) => write!(w, "\terror\t{}", e.replace(['\t', '\n'], " "))?,
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::generate_synthetic_corpus;

    fn small_config() -> TrainingConfig {
        let mut cfg = TrainingConfig {
            r: 1,
            epochs: 1,
            seed: 3,
            ..Default::default()
        };
        cfg.arch.embedding_dim = 6;
        cfg.arch.conv_channels = [4, 4, 4, 4];
        cfg.arch.hidden_dim = 8;
        cfg.arch.output_dim = 5;
        cfg
    }

    #[test]
    fn rows_follow_alphas_and_errors_do_not_stop_the_sweep() {
        let synth = generate_synthetic_corpus(1, 20, 2).unwrap();
        let corpus = synth.corpus().unwrap();
        let labels = synth.label_table();
        let eval = SweepEval {
            labels: &labels,
            train_fraction: 0.5,
            svm: SvmOptions::default(),
        };
        assert!(sweep_alpha(&corpus, &small_config(), &[], &eval).unwrap().is_empty());
        assert!(sweep_alpha(&corpus, &small_config(), &[1.5], &eval).is_err());

        let rows = sweep_alpha(&corpus, &small_config(), &[0.0, 1.0], &eval).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            let o = row.outcome.as_ref().unwrap();
            assert_eq!(o.accuracies.len(), 2);
            // two-sentence documents never have context targets
            assert_eq!(o.losses.as_ref().unwrap().context, None);
        }

        let broken = TrainingConfig {
            learning_rate: -1.0,
            ..small_config()
        };
        let rows = sweep_alpha(&corpus, &broken, &[0.7, 0.3], &eval).unwrap();
        assert!(rows.iter().all(|r| r.outcome.is_err()));

        let mut out = Vec::new();
        write_sweep(&mut out, &labels.aspects, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("alpha\tL_total\tL_cntx\tL_doc\tsmell\ttaste\n0.7\terror\t"), "{text}");
    }
}
