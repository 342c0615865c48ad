//! Document vectors from a trained model and the embedding file format.
//!
//! A document's vector is the length-adjusted mean of its context-encoder
//! sentence vectors with dropout off, the same vector the document loss
//! scores candidates against.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::rngs::mock::StepRng;

use crate::corpus::{Corpus, Document};
use crate::encoder::{encode_batch, EncoderKind, ModelParams};
use crate::error::{Error, Result};
use crate::numcore::{Mode, Real};
use crate::objective::{length_adjust, mean_vectors, Diagnostics};

const HEADER_PREFIX: &str = "#sentdoc-emb v1";

/// Vector of one document, encoded with `kind` (normally the context
/// encoder).
pub fn embed_document_with<T: Real>(model: &ModelParams<T>, doc: &Document, kind: EncoderKind) -> Result<Vec<T>> {
    if doc.is_empty() {
        return Err(Error::Empty("document"));
    }
    // Inference mode draws nothing from the rng.
    let mut unused = StepRng::new(0, 0);
    let vectors = encode_batch(model, kind, &doc.sentences, Mode::Infer, &mut unused)?;
    let mean = mean_vectors(&vectors)?;
    Ok(length_adjust(&mean, &Diagnostics::default()))
}

pub fn embed_document<T: Real>(model: &ModelParams<T>, doc: &Document) -> Result<Vec<T>> {
    embed_document_with(model, doc, EncoderKind::Context)
}

/// `(doc_id, vector)` for every document in corpus order.
pub fn embed_documents<T: Real>(
    model: &ModelParams<T>,
    corpus: &Corpus,
    kind: EncoderKind,
) -> Result<Vec<(String, Vec<T>)>> {
    corpus
        .documents()
        .iter()
        .map(|d| Ok((d.id.clone(), embed_document_with(model, d, kind)?)))
        .collect()
}

/// Writes the embedding file for `corpus` and returns the record count.
pub fn embed_corpus<T: Real>(model: &ModelParams<T>, corpus: &Corpus, out: &Path, kind: EncoderKind) -> Result<usize> {
    let records = embed_documents(model, corpus, kind)?;
    let file = std::fs::File::create(out)?;
    write_embeddings(std::io::BufWriter::new(file), model.arch.output_dim, &records)?;
    Ok(records.len())
}

/// Header line, then `doc_id<TAB>v1 v2 ...` with shortest round-trip floats.
pub fn write_embeddings<W: Write, T: Real>(mut w: W, dim: usize, records: &[(String, Vec<T>)]) -> Result<()> {
    writeln!(w, "{HEADER_PREFIX} dim={dim} count={}", records.len())?;
    let mut line = String::new();
    for (id, v) in records {
        if v.len() != dim {
            return Err(Error::shape("write_embeddings", format!("{id}: {} values, dim {dim}", v.len())));
        }
        if id.contains(['\t', '\n']) {
            return Err(Error::invalid(format!("document id {id:?} contains a tab or newline")));
        }
        line.clear();
        line.push_str(id);
        line.push('\t');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Contents of an embedding file.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    pub records: Vec<(String, Vec<f64>)>,
}

impl Embeddings {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.records.iter().find(|(d, _)| d == id).map(|(_, v)| v.as_slice())
    }
}

pub fn read_embeddings<R: BufRead>(r: R) -> Result<Embeddings> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(Error::Empty("embedding file"))??;
    let malformed = |line: usize, message: String| Error::Parse { line, message };
    let fields = header
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| malformed(1, format!("expected header starting with {HEADER_PREFIX:?}")))?;
    let mut dim = None;
    let mut count = None;
    for f in fields.split_whitespace() {
        match f.split_once('=') {
            Some(("dim", v)) => dim = v.parse().ok(),
            Some(("count", v)) => count = v.parse().ok(),
            _ => return Err(malformed(1, format!("unexpected header field {f:?}"))),
        }
    }
    let (dim, count): (usize, usize) = dim
        .zip(count)
        .ok_or_else(|| malformed(1, "header needs dim= and count=".into()))?;
    let mut records = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let n = i + 2;
        if line.is_empty() {
            continue;
        }
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| malformed(n, "expected doc_id<TAB>values".into()))?;
        let v: Vec<f64> = values
            .split(' ')
            .map(|x| x.parse().map_err(|_| malformed(n, format!("bad number {x:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != dim {
            return Err(malformed(n, format!("{} values, header says dim={dim}", v.len())));
        }
        records.push((id.to_string(), v));
    }
    if records.len() != count {
        return Err(Error::Malformed(format!(
            "header says count={count}, file has {} records",
            records.len()
        )));
    }
    Ok(Embeddings { dim, records })
}

pub fn load_embeddings(path: &Path) -> Result<Embeddings> {
    let file = std::fs::File::open(path)?;
    read_embeddings(std::io::BufReader::new(file))
}
