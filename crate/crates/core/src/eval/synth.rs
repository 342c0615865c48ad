use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use super::labels::LabelTable;
use super::svm::Label;
use crate::corpus::{build_vocabulary, encode_corpus, Corpus, RawDocument};
use crate::error::{Error, Result};
use crate::rng;

pub const ASPECT_WORDS: [&str; 4] = ["smell", "taste", "look", "feel"];
const FILLERS: [&str; 8] = ["the", "this", "beer", "really", "very", "quite", "overall", "honestly"];

/// Generated reviews with one sentence per aspect and a label per aspect.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub aspects: Vec<String>,
    pub documents: Vec<RawDocument>,
    /// `labels[doc][aspect]`
    pub labels: Vec<Vec<Label>>,
}

/// Each document holds one sentence per aspect in shuffled order. A
/// positive sentence reads `<aspect> is good`, a negative one
/// `not good <aspect>`, with 2 to 4 filler words before or after. Per
/// aspect exactly half the documents (rounded down) are positive.
///
/// When a document's aspects disagree, its pattern words are the same as
/// those of the document with every label flipped, so only the grouping of
/// words into sentences tells which aspect is which.
pub fn generate_synthetic_corpus(seed: u64, n_docs: usize, aspects: usize) -> Result<SyntheticCorpus> {
    if n_docs < 20 {
        return Err(Error::invalid(format!("need at least 20 documents, got {n_docs}")));
    }
    if !(1..=ASPECT_WORDS.len()).contains(&aspects) {
        return Err(Error::invalid(format!("aspects must be 1 to {}, got {aspects}", ASPECT_WORDS.len())));
    }
    let mut rng = rng::stream(seed, "synth", 0);
    let mut columns: Vec<Vec<Label>> = Vec::with_capacity(aspects);
    for _ in 0..aspects {
        let mut col: Vec<Label> = (0..n_docs)
            .map(|i| if i < n_docs / 2 { Label::Positive } else { Label::Negative })
            .collect();
        col.shuffle(&mut rng);
        columns.push(col);
    }
    let labels: Vec<Vec<Label>> = (0..n_docs).map(|d| columns.iter().map(|c| c[d]).collect()).collect();

    let documents = labels
        .iter()
        .enumerate()
        .map(|(d, doc_labels)| {
            let mut order: Vec<usize> = (0..aspects).collect();
            order.shuffle(&mut rng);
            let sentences = order
                .into_iter()
                .map(|a| sentence(ASPECT_WORDS[a], doc_labels[a], &mut rng))
                .collect();
            RawDocument {
                id: format!("syn{d:05}"),
                sentences,
            }
        })
        .collect();
    Ok(SyntheticCorpus {
        aspects: ASPECT_WORDS[..aspects].iter().map(|s| s.to_string()).collect(),
        documents,
        labels,
    })
}

fn sentence<R: Rng>(aspect: &str, label: Label, rng: &mut R) -> String {
    let core = match label {
        Label::Positive => [aspect, "is", "good"],
        Label::Negative => ["not", "good", aspect],
    };
    let mut before = Vec::new();
    let mut after = Vec::new();
    for _ in 0..rng.gen_range(2..=4) {
        let w = *FILLERS.choose(rng).expect("non-empty");
        if rng.gen_bool(0.5) {
            before.push(w);
        } else {
            after.push(w);
        }
    }
    before.into_iter().chain(core).chain(after).collect::<Vec<_>>().join(" ")
}

/// Unlabelled documents of 3 to 8 words per sentence, each word drawn
/// uniformly from `w0` to `w{vocab - 1}`.
pub fn generate_toy_corpus(seed: u64, n_docs: usize, sentences: usize, vocab: usize) -> Result<Vec<RawDocument>> {
    if n_docs == 0 || sentences == 0 || vocab == 0 {
        return Err(Error::invalid("toy corpus needs documents, sentences and words"));
    }
    let mut rng = rng::stream(seed, "toy", 0);
    Ok((0..n_docs)
        .map(|d| RawDocument {
            id: format!("t{d}"),
            sentences: (0..sentences)
                .map(|_| {
                    let len = rng.gen_range(3..=8);
                    (0..len)
                        .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect(),
        })
        .collect())
}

impl SyntheticCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents whose aspects carry different labels.
    pub fn is_order_dependent(&self, doc: usize) -> bool {
        self.labels[doc].windows(2).any(|w| w[0] != w[1])
    }

    /// Vocabulary over every token (no frequency cut) and the encoded corpus.
    pub fn corpus(&self) -> Result<Corpus> {
        let tokenized: Vec<_> = self.documents.iter().map(RawDocument::tokenized).collect();
        let vocab = build_vocabulary(&tokenized, 1)?;
        encode_corpus(&self.documents, &vocab)
    }

    pub fn label_table(&self) -> LabelTable {
        LabelTable {
            aspects: self.aspects.clone(),
            rows: self
                .documents
                .iter()
                .zip(&self.labels)
                .map(|(d, l)| (d.id.clone(), l.iter().copied().map(Some).collect()))
                .collect(),
        }
    }

    /// Corpus TSV: `doc_id<TAB>sentence. sentence.`
    pub fn write_corpus<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.documents {
            let text: Vec<String> = d.sentences.iter().map(|s| format!("{s}.")).collect();
            writeln!(w, "{}\t{}", d.id, text.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }
}
