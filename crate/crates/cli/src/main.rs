use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sentdoc::corpus::{build_vocabulary, encode_corpus, read_raw_corpus, Corpus, Vocabulary};
use sentdoc::encoder::EncoderKind;
use sentdoc::eval::{evaluate_aspects, generate_synthetic_corpus, write_results, LabelTable, SvmOptions};
use sentdoc::inference::{embed_corpus, load_embeddings};
use sentdoc::oracle::{oracle_dump, write_dump};
use sentdoc::trainer::{
    load_checkpoint, save_checkpoint, sweep_alpha, train, write_sweep, StepReport, SweepEval, TrainingConfig,
};
use sentdoc::validation::{gradient_suite, SUITE_TOLERANCE};

/// Document vectors from CNN sentence encoders trained to predict
/// sentences from their context and from the whole document.
#[derive(Parser)]
#[command(name = "sentdoc", version)]
struct Cli {
    /// Worker threads for training. Deterministic configs always use one.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count tokens in a corpus and write the vocabulary.
    BuildVocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its checkpoint. Prints one loss line per step.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one vector per document.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the vocabulary saved next to the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Encoder::Cntx)]
        encoder: Encoder,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and score a linear SVM per aspect on document vectors.
    Eval {
        #[arg(long)]
        emb: PathBuf,
        #[command(flatten)]
        labels: LabelSource,
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// SVM regularization strength.
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        /// Also write the results table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every gradient. Fails unless all pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump every intermediate value of one document's loss.
    Oracle {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        doc_id: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to the vocabulary saved next to the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Loss settings (k, r, alpha, loss_form). Defaults to the config
        /// saved next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate the synthetic aspect corpus and its labels.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        docs: usize,
        #[arg(long, default_value_t = 2)]
        aspects: usize,
        /// Writes `<prefix>.tsv` and `<prefix>.labels.tsv`.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Train one model per alpha and tabulate final losses and accuracies.
    SweepAlpha {
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        labels: LabelSource,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        /// Seeds both training and the evaluation split.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct LabelSource {
    /// `doc_id<TAB>label` lines with labels +1/-1, one column per aspect.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Five-aspect score file, thresholded into labels.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoder {
    Cntx,
    Cdd,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn sidecar(ckpt: &Path, ext: &str) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read(open(path)?).with_context(|| format!("reading vocabulary {}", path.display()))
}

fn read_corpus(input: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let raw = read_raw_corpus(open(input)?).with_context(|| format!("reading corpus {}", input.display()))?;
    Ok(encode_corpus(&raw, vocab)?)
}

fn read_config(path: Option<&Path>) -> Result<TrainingConfig> {
    match path {
        Some(p) => TrainingConfig::from_file(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(TrainingConfig::default()),
    }
}

fn read_labels(src: &LabelSource) -> Result<LabelTable> {
    match (&src.labels, &src.scores) {
        (Some(p), _) => LabelTable::read(open(p)?).with_context(|| format!("reading labels {}", p.display())),
        (_, Some(p)) => LabelTable::from_scores(open(p)?).with_context(|| format!("reading scores {}", p.display())),
        _ => unreachable!("clap requires one label source"),
    }
}

fn apply_threads(config: &mut TrainingConfig, threads: Option<usize>) {
    if let Some(n) = threads {
        config.threads = n;
        if config.deterministic && n > 1 {
            log::warn!("deterministic config: training on one thread");
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| x.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    match cli.command {
        Command::BuildVocab { input, min_count, out } => {
            let raw = read_raw_corpus(open(&input)?)?;
            let tokenized: Vec<_> = raw.iter().map(|d| d.tokenized()).collect();
            let vocab = build_vocabulary(&tokenized, min_count)?;
            vocab.write(create(&out)?)?;
            log::info!("{} tokens", vocab.len());
        }
        Command::Train {
            input,
            vocab,
            config,
            seed,
            out,
        } => {
            let mut config = read_config(config.as_deref())?;
            if let Some(s) = seed {
                config.seed = s;
            }
            apply_threads(&mut config, cli.threads);
            config.validate()?;
            let vocab = read_vocab(&vocab)?;
            let corpus = read_corpus(&input, &vocab)?;
            let mut w = stdout.lock();
            writeln!(w, "step\tL_total\tL_cntx\tL_doc")?;
            let mut write_err = None;
            let ck = train(&corpus, &config, &mut |r: &StepReport| {
                if write_err.is_none() {
                    let line = format!("{}\t{}\t{}\t{}", r.step, r.total, opt(r.context), r.document);
                    write_err = writeln!(w, "{line}").err();
                }
            })?;
            if let Some(e) = write_err {
                return Err(e.into());
            }
            w.flush()?;
            save_checkpoint(&ck, &out)?;
            vocab.write(create(&sidecar(&out, ".vocab"))?)?;
            let mut cfg = create(&sidecar(&out, ".cfg"))?;
            write!(cfg, "{config}")?;
            cfg.flush()?;
        }
        Command::Embed {
            ckpt,
            input,
            vocab,
            encoder,
            out,
        } => {
            let ck = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let vocab = read_vocab(&vocab.unwrap_or_else(|| sidecar(&ckpt, ".vocab")))?;
            if vocab.len() != ck.model.vocab_size() {
                bail!(
                    "vocabulary has {} entries but the checkpoint has {}",
                    vocab.len(),
                    ck.model.vocab_size()
                );
            }
            let corpus = read_corpus(&input, &vocab)?;
            let kind = match encoder {
                Encoder::Cntx => EncoderKind::Context,
                Encoder::Cdd => EncoderKind::Candidate,
            };
            let n = embed_corpus(&ck.model, &corpus, &out, kind)?;
            log::info!("{n} documents embedded");
        }
        Command::Eval {
            emb,
            labels,
            split,
            seed,
            lambda,
            out,
        } => {
            let emb = load_embeddings(&emb).with_context(|| format!("loading {}", emb.display()))?;
            let labels = read_labels(&labels)?;
            let opts = SvmOptions {
                lambda,
                seed,
                ..SvmOptions::default()
            };
            let results = evaluate_aspects(&emb.records, &labels, split, &opts)?;
            let table: Vec<(String, f64)> = results.iter().map(|r| (r.aspect.clone(), r.accuracy)).collect();
            let meta = [
                ("seed", seed.to_string()),
                ("split", split.to_string()),
                ("lambda", lambda.to_string()),
                ("documents", labels.rows.len().to_string()),
            ];
            write_results(stdout.lock(), &meta, &table)?;
            if let Some(p) = out {
                write_results(create(&p)?, &meta, &table)?;
            }
        }
        Command::Gradcheck { seed } => {
            let report = gradient_suite(seed)?;
            let mut w = stdout.lock();
            writeln!(w, "op\tblocks\tmin_coords\tkinks_skipped\tmax_rel_error\tstatus")?;
            for e in &report.entries {
                let status = if e.passed() { "PASS" } else { "FAIL" };
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{:.3e}\t{status}",
                    e.name, e.blocks, e.min_coords, e.kinks_skipped, e.max_rel_error
                )?;
            }
            w.flush()?;
            if !report.passed() {
                bail!(
                    "gradient check failed: max relative error {:.3e} (tolerance {SUITE_TOLERANCE:e})",
                    report.max_rel_error()
                );
            }
        }
        Command::Oracle {
            ckpt,
            doc_id,
            seed,
            input,
            vocab,
            config,
        } => {
            let ck = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let vocab = read_vocab(&vocab.unwrap_or_else(|| sidecar(&ckpt, ".vocab")))?;
            let cfg_path = config.or_else(|| Some(sidecar(&ckpt, ".cfg")).filter(|p| p.exists()));
            let config = read_config(cfg_path.as_deref())?;
            let corpus = read_corpus(&input, &vocab)?;
            let doc = corpus
                .documents()
                .iter()
                .position(|d| d.id == doc_id)
                .with_context(|| format!("no document {doc_id:?} in {}", input.display()))?;
            let model = ck.model.cast::<f64>();
            let dump = oracle_dump(&corpus, &model, &config.loss_settings(), doc, seed)?;
            write_dump(stdout.lock(), &dump)?;
        }
        Command::Synth {
            seed,
            docs,
            aspects,
            out_prefix,
        } => {
            let synth = generate_synthetic_corpus(seed, docs, aspects)?;
            synth.write_corpus(create(&sidecar(&out_prefix, ".tsv"))?)?;
            synth.label_table().write(create(&sidecar(&out_prefix, ".labels.tsv"))?)?;
        }
        Command::SweepAlpha {
            alphas,
            input,
            vocab,
            labels,
            config,
            split,
            seed,
            out,
        } => {
            let mut config = read_config(config.as_deref())?;
            if let Some(s) = seed {
                config.seed = s;
            }
            apply_threads(&mut config, cli.threads);
            config.validate()?;
            let vocab = read_vocab(&vocab)?;
            let corpus = read_corpus(&input, &vocab)?;
            let labels = read_labels(&labels)?;
            let eval = SweepEval {
                labels: &labels,
                train_fraction: split,
                svm: SvmOptions {
                    seed: config.seed,
                    ..SvmOptions::default()
                },
            };
            let rows = sweep_alpha(&corpus, &config, &alphas, &eval)?;
            match out {
                Some(p) => write_sweep(create(&p)?, &labels.aspects, &rows)?,
                None => write_sweep(stdout.lock(), &labels.aspects, &rows)?,
            }
            if rows.iter().all(|r| r.outcome.is_err()) && !rows.is_empty() {
                bail!("every alpha failed");
            }
        }
    }
    Ok(())
}

fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<sentdoc::Error>(),
            Some(sentdoc::Error::UnknownKey(_))
        )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
