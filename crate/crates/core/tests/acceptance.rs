//! Acceptance criteria, one PASS/FAIL line each. `ACCEPTANCE_ONLY=2,7`
//! runs a subset.

mod support;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentdoc::corpus::{build_vocabulary, encode_corpus, read_raw_corpus, Corpus, Document, RawDocument};
use sentdoc::encoder::{init_model_with, Architecture, EncoderKind, InitOptions, InitScheme, SentenceVector};
use sentdoc::eval::{
    average_word_embeddings, evaluate_aspects, generate_synthetic_corpus, generate_toy_corpus, SvmOptions,
};
use sentdoc::inference::{embed_document, embed_documents, write_embeddings};
use sentdoc::numcore::LossForm;
use sentdoc::objective::{length_adjust, length_adjust_strict, mean_vectors, Diagnostics};
use sentdoc::oracle::{oracle_dump, write_dump};
use sentdoc::trainer::{train, Checkpoint, Precision, StepReport, Trainer, TrainingConfig};
use sentdoc::validation::gradient_suite;
use sentdoc::Error;

type Outcome = (bool, String);

fn acceptance_init() -> InitOptions {
    InitOptions {
        scheme: InitScheme::He,
        embedding_bound: Some(0.5),
    }
}

fn corpus_from(raw: &[RawDocument]) -> Corpus {
    let tokenized: Vec<_> = raw.iter().map(RawDocument::tokenized).collect();
    let vocab = build_vocabulary(&tokenized, 1).unwrap();
    encode_corpus(raw, &vocab).unwrap()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let report = gradient_suite(0).unwrap();
    let elapsed = start.elapsed();
    let worst = report
        .entries
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let composite = report.entries.iter().find(|e| e.name == "encoder_and_loss").unwrap();
    (
        report.passed() && elapsed < Duration::from_secs(120),
        format!(
            "{} checks, max rel error {:.2e} ({}), composite min coords {}, {:.0?}",
            report.entries.len(),
            worst.max_rel_error,
            worst.name,
            composite.min_coords,
            elapsed
        ),
    )
}

const TOY_CORPUS: &str = "\
a\tw0 w1 w2 w3. w4 w5. w6 w7 w8 w0 w1. w9 w9 w2. w3 w5 w7.
b\tw8 w6 w4. w2 w0 w1 w3 w5 w7.
c\tw1 w9. w5 w5 w4 w8. w6 w0 w2.
";

fn oracle_equivalence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let raw = read_raw_corpus(TOY_CORPUS.as_bytes()).unwrap();
    let corpus = corpus_from(&raw);
    assert_eq!(corpus.vocab().len(), 12);
    let mut vocab_text = Vec::new();
    corpus.vocab().write(&mut vocab_text).unwrap();

    let config = TrainingConfig {
        r: 2,
        alpha: 0.7,
        epochs: 3,
        seed: 11,
        precision: Precision::F64,
        init: acceptance_init(),
        ..TrainingConfig::default()
    };
    let ck = train(&corpus, &config, &mut |_| {}).unwrap();
    let path = dir.path().join("toy.ckpt");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();

    let mut worst = (0.0f64, String::new());
    for (seed, form) in [(5, LossForm::Standard), (6, LossForm::Literal)] {
        let settings = TrainingConfig {
            loss_form: form,
            ..config.clone()
        }
        .loss_settings();
        let dump = oracle_dump(&corpus, &loaded.model.cast::<f64>(), &settings, 0, seed).unwrap();
        let mut text = Vec::new();
        write_dump(&mut text, &dump).unwrap();

        let net = support::parse_checkpoint(&std::fs::read(&path).unwrap());
        assert_eq!((net.vocab, net.dim_w, net.dim), (12, 100, 100));
        let vocab = support::parse_vocab(std::str::from_utf8(&vocab_text).unwrap());
        let docs = support::parse_corpus(TOY_CORPUS, &vocab);
        let parsed = support::Dump::parse(std::str::from_utf8(&text).unwrap());
        assert_eq!(parsed.refs("doc.0.negatives").len(), 2);
        let (diff, name) = support::compare(&net, &docs, &parsed);
        if diff > worst.0 || diff.is_nan() {
            worst = (diff, name);
        }
    }
    (
        worst.0 <= 1e-10,
        format!("max abs difference {:.2e} ({})", worst.0, worst.1),
    )
}

fn length_adjustment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut norm_err, mut cos_err) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.gen_range(2..8);
        let d = rng.gen_range(1..20);
        let vs: Vec<SentenceVector<f64>> = (0..n)
            .map(|_| SentenceVector((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()))
            .collect();
        let cv = mean_vectors(&vs).unwrap();
        let out = length_adjust(&cv, &Diagnostics::default());
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let target = vs.iter().map(|v| norm(&v.0)).sum::<f64>() / n as f64;
        norm_err = norm_err.max((norm(&out) - target).abs());
        let cos = cv.values.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>() / (norm(&cv.values) * norm(&out));
        cos_err = cos_err.max((cos - 1.0).abs());
    }
    let single = SentenceVector(vec![0.3, -1.25, 7.0]);
    let cv = mean_vectors(std::slice::from_ref(&single)).unwrap();
    let identity = length_adjust(&cv, &Diagnostics::default()) == single.0;

    let cancel = [SentenceVector(vec![1.0, 2.0]), SentenceVector(vec![-1.0, -2.0])];
    let cv = mean_vectors(&cancel).unwrap();
    let diag = Diagnostics::default();
    let passed_through = length_adjust(&cv, &diag) == cv.values && diag.degenerate_norms() == 1;
    let strict = matches!(length_adjust_strict(&cv), Err(Error::DegenerateNorm(_)));
    (
        norm_err <= 1e-9 && cos_err <= 1e-12 && identity && passed_through && strict,
        format!(
            "norm err {norm_err:.1e}, cosine err {cos_err:.1e}, single identity {identity}, degenerate passthrough {passed_through}, strict error {strict}"
        ),
    )
}

fn random_sentence(rng: &mut ChaCha8Rng, vocab: u32) -> Vec<u32> {
    (0..rng.gen_range(3..=12)).map(|_| rng.gen_range(2..vocab)).collect()
}

fn representation() -> Outcome {
    let vocab = 30u32;
    let arch = Architecture::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let init = acceptance_init();
    let model32 = init_model_with::<f32, _>(vocab as usize, &arch, &init, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let model64 = init_model_with::<f64, _>(vocab as usize, &arch, &init, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();

    let mut perm_err = 0.0f64;
    let mut deterministic = true;
    for _ in 0..20 {
        let sentences: Vec<Vec<u32>> = (0..rng.gen_range(2..7)).map(|_| random_sentence(&mut rng, vocab)).collect();
        let doc = Document {
            id: "d".into(),
            sentences: sentences.clone(),
        };
        let base = embed_document(&model32, &doc).unwrap();
        deterministic &= embed_document(&model32, &doc).unwrap() == base;
        let mut shuffled = sentences;
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let other = embed_document(
            &model32,
            &Document {
                id: "d".into(),
                sentences: shuffled,
            },
        )
        .unwrap();
        for (a, b) in base.iter().zip(&other) {
            perm_err = perm_err.max((a - b).abs() as f64);
        }
    }

    let mut sensitive = 0;
    for _ in 0..100 {
        let s = random_sentence(&mut rng, vocab);
        let mut r = s.clone();
        r.reverse();
        let one = |s: Vec<u32>| Document {
            id: "d".into(),
            sentences: vec![s],
        };
        let a = embed_document(&model64, &one(s)).unwrap();
        let b = embed_document(&model64, &one(r)).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if diff > 1e-9 {
            sensitive += 1;
        }
    }
    (
        perm_err <= 1e-6 && sensitive >= 99 && deterministic,
        format!("permutation L∞ {perm_err:.1e}, reversal changed {sensitive}/100, infer deterministic {deterministic}"),
    )
}

/// Per-epoch mean negative logit and every step's total loss.
struct OverfitRun {
    ranking: f64,
    losses: Vec<f64>,
    epoch_negative: Vec<f64>,
    elapsed: Duration,
}

fn overfit_run(form: LossForm) -> OverfitRun {
    let corpus = corpus_from(&generate_toy_corpus(7, 20, 5, 100).unwrap());
    let config = TrainingConfig {
        k: 1,
        r: 2,
        alpha: 0.7,
        learning_rate: 1e-3,
        epochs: 200,
        docs_per_step: 2,
        seed: 1,
        loss_form: form,
        init: acceptance_init(),
        ..TrainingConfig::default()
    };
    let start = Instant::now();
    let mut trainer = Trainer::<f32>::new(&corpus, config).unwrap();
    let mut losses = Vec::new();
    let mut epoch_negative = Vec::new();
    for _ in 0..200 {
        let mut negs = Vec::new();
        trainer
            .run_epoch(&mut |r: &StepReport| {
                losses.push(r.total);
                negs.push(r.mean_negative_logit.unwrap());
            })
            .unwrap();
        epoch_negative.push(negs.iter().sum::<f64>() / negs.len() as f64);
    }
    let ranking = trainer.ranking(99).unwrap().accuracy();
    OverfitRun {
        ranking,
        losses,
        epoch_negative,
        elapsed: start.elapsed(),
    }
}

fn overfit(run: &OverfitRun) -> Outcome {
    let first = median(&run.losses[..10]);
    let last = median(&run.losses[run.losses.len() - 10..]);
    (
        run.ranking >= 0.95 && last < first && run.elapsed < Duration::from_secs(180),
        format!(
            "ranking accuracy {:.3}, median loss first 10 steps {first:.4}, last 10 {last:.4}, {:.0?}",
            run.ranking, run.elapsed
        ),
    )
}

fn aspects() -> Outcome {
    let start = Instant::now();
    let synth = generate_synthetic_corpus(1, 2000, 2).unwrap();
    let corpus = synth.corpus().unwrap();
    let labels = synth.label_table();
    let config = TrainingConfig {
        r: 2,
        epochs: 5,
        docs_per_step: 4,
        seed: 1,
        init: acceptance_init(),
        ..TrainingConfig::default()
    };
    let ck = train(&corpus, &config, &mut |_| {}).unwrap();
    let vectors: Vec<(String, Vec<f64>)> = embed_documents(&ck.model, &corpus, EncoderKind::Context)
        .unwrap()
        .into_iter()
        .map(|(id, v)| (id, v.into_iter().map(f64::from).collect()))
        .collect();
    let baseline = average_word_embeddings(&ck.model, &corpus);
    let svm = SvmOptions {
        seed: 1,
        ..SvmOptions::default()
    };
    let model_eval = evaluate_aspects(&vectors, &labels, 0.5, &svm).unwrap();
    let base_eval = evaluate_aspects(&baseline, &labels, 0.5, &svm).unwrap();
    let mixed: std::collections::HashSet<String> = (0..synth.len())
        .filter(|&d| synth.is_order_dependent(d))
        .map(|d| synth.documents[d].id.clone())
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (m, b) in model_eval.iter().zip(&base_eval) {
        let m_mixed = m.subset_accuracy(|id| mixed.contains(id)).unwrap();
        let b_mixed = b.subset_accuracy(|id| mixed.contains(id)).unwrap();
        ok &= m.accuracy >= 0.85 && m_mixed - b_mixed >= 0.10;
        parts.push(format!(
            "{} {:.3} (baseline {:.3}), mixed {:.3} vs {:.3}",
            m.aspect, m.accuracy, b.accuracy, m_mixed, b_mixed
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(15 * 60);
    (ok, format!("{}, {elapsed:.0?}", parts.join("; ")))
}

fn pipeline(dir: &std::path::Path, tag: &str) -> (Vec<u8>, Vec<u8>) {
    let synth = generate_synthetic_corpus(9, 40, 2).unwrap();
    let tsv = dir.join(format!("{tag}.tsv"));
    synth.write_corpus(std::fs::File::create(&tsv).unwrap()).unwrap();
    let raw = read_raw_corpus(std::io::BufReader::new(std::fs::File::open(&tsv).unwrap())).unwrap();
    let corpus = corpus_from(&raw);
    let mut config = TrainingConfig {
        r: 2,
        epochs: 2,
        docs_per_step: 3,
        seed: 5,
        ..TrainingConfig::default()
    };
    config.arch.conv_channels = [16, 32, 32, 32];
    config.arch.hidden_dim = 64;
    let ck = train(&corpus, &config, &mut |_| {}).unwrap();
    let ck_path = dir.join(format!("{tag}.ckpt"));
    ck.save(&ck_path).unwrap();
    let emb_path = dir.join(format!("{tag}.emb"));
    let records = embed_documents(&ck.model, &corpus, EncoderKind::Context).unwrap();
    write_embeddings(std::fs::File::create(&emb_path).unwrap(), ck.model.arch.output_dim, &records).unwrap();
    (std::fs::read(ck_path).unwrap(), std::fs::read(emb_path).unwrap())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (ck_a, emb_a) = pipeline(dir.path(), "a");
    let (ck_b, emb_b) = pipeline(dir.path(), "b");
    let identical = ck_a == ck_b && emb_a == emb_b;

    let ck = Checkpoint::read(ck_a.as_slice()).unwrap();
    let bits = |c: &Checkpoint| -> Vec<u32> {
        let mut out: Vec<u32> = c.model.arrays().iter().flat_map(|a| a.data().iter().map(|x| x.to_bits())).collect();
        if let Some((m, v)) = &c.adam {
            out.extend(m.iter().chain(v).flat_map(|a| a.data().iter().map(|x| x.to_bits())));
        }
        out
    };
    let path = dir.path().join("again.ckpt");
    ck.save(&path).unwrap();
    let reloaded = Checkpoint::load(&path).unwrap();
    let round_trip = bits(&ck) == bits(&reloaded) && reloaded == ck && std::fs::read(&path).unwrap() == ck_a;

    let mut bad_magic = ck_a.clone();
    bad_magic[0] = b'X';
    let mut future = ck_a.clone();
    future[4] = 2;
    let truncated = &ck_a[..ck_a.len() - 3];
    let errors = matches!(Checkpoint::read(bad_magic.as_slice()), Err(Error::BadMagic))
        && matches!(Checkpoint::read(future.as_slice()), Err(Error::UnsupportedVersion(2)))
        && matches!(Checkpoint::read(truncated), Err(Error::Truncated(_)));
    (
        identical && round_trip && errors,
        format!(
            "byte-identical runs {identical}, 0-ulp round trip {round_trip}, distinct corruption errors {errors}"
        ),
    )
}

fn loss_forms(standard: &OverfitRun, literal: &OverfitRun) -> Outcome {
    let first = literal.epoch_negative[0];
    let last = *literal.epoch_negative.last().unwrap();
    let min_standard = standard.losses.iter().copied().fold(f64::INFINITY, f64::min);
    (
        last < first && min_standard >= 0.0,
        format!(
            "literal mean l_neg epoch 1 {first:.3}, epoch 200 {last:.3}; standard min step loss {min_standard:.4}"
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut failed = 0;
    let mut report = |n: usize, name: &str, (ok, detail): Outcome| {
        println!("{} criterion {n} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };
    if wanted(1) {
        report(1, "gradient suite", gradient_check());
    }
    if wanted(2) {
        report(2, "oracle equivalence", oracle_equivalence());
    }
    if wanted(3) {
        report(3, "length adjustment", length_adjustment());
    }
    if wanted(4) {
        report(4, "representation invariants", representation());
    }
    let standard = (wanted(5) || wanted(8)).then(|| overfit_run(LossForm::Standard));
    if wanted(5) {
        report(5, "overfit", overfit(standard.as_ref().unwrap()));
    }
    if wanted(6) {
        report(6, "aspect experiment", aspects());
    }
    if wanted(7) {
        report(7, "determinism and persistence", determinism());
    }
    if wanted(8) {
        let literal = overfit_run(LossForm::Literal);
        report(8, "loss forms", loss_forms(standard.as_ref().unwrap(), &literal));
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
