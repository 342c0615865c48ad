//! Corpus ingestion: sentence splitting, tokenization, vocabulary, encoded
//! documents and negative-sentence sampling.

mod text;
mod vocab;

use std::io::BufRead;

use rand::Rng;

pub use text::{segment_sentences, tokenize};
pub use vocab::{build_vocabulary, Vocabulary, PAD, UNK};

use crate::error::{Error, Result};

/// Separator between pre-segmented sentences in a corpus line.
pub const UNIT_SEPARATOR: char = '\u{1f}';

/// One corpus record before tokenization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub sentences: Vec<String>,
}

impl RawDocument {
    pub fn tokenized(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| tokenize(s)).collect()
    }
}

/// Reads `doc_id<TAB>text` lines. Text containing the 0x1F unit separator
/// is taken as already split into sentences.
pub fn read_raw_corpus<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected doc_id<TAB>text".into(),
        })?;
        let sentences = if text.contains(UNIT_SEPARATOR) {
            text.split(UNIT_SEPARATOR)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        } else {
            segment_sentences(text)
        };
        docs.push(RawDocument {
            id: id.to_string(),
            sentences,
        });
    }
    Ok(docs)
}

pub type Sentence = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Position of a sentence inside a corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SentenceRef {
    pub doc: usize,
    pub sentence: usize,
}

/// Encoded documents plus a flat index over every sentence.
#[derive(Clone, Debug)]
pub struct Corpus {
    documents: Vec<Document>,
    vocab: Vocabulary,
    sentence_index: Vec<SentenceRef>,
    /// `doc_offsets[d]..doc_offsets[d + 1]` is document d's span of `sentence_index`.
    doc_offsets: Vec<usize>,
}

impl Corpus {
    /// Validates that every document and sentence is non-empty and every id
    /// fits the vocabulary.
    pub fn new(documents: Vec<Document>, vocab: Vocabulary) -> Result<Self> {
        let v = vocab.len();
        let mut sentence_index = Vec::new();
        let mut doc_offsets = vec![0];
        for (d, doc) in documents.iter().enumerate() {
            if doc.sentences.is_empty() {
                return Err(Error::invalid(format!("document {} has no sentences", doc.id)));
            }
            for (s, sent) in doc.sentences.iter().enumerate() {
                if sent.is_empty() {
                    return Err(Error::invalid(format!("document {} sentence {s} is empty", doc.id)));
                }
                if let Some(&bad) = sent.iter().find(|&&id| id as usize >= v) {
                    return Err(Error::IndexOutOfRange {
                        what: "vocabulary",
                        index: bad as usize,
                        size: v,
                    });
                }
                sentence_index.push(SentenceRef { doc: d, sentence: s });
            }
            doc_offsets.push(sentence_index.len());
        }
        Ok(Corpus {
            documents,
            vocab,
            sentence_index,
            doc_offsets,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, index: usize) -> &Document {
        &self.documents[index]
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn sentence_index(&self) -> &[SentenceRef] {
        &self.sentence_index
    }

    pub fn sentence(&self, r: SentenceRef) -> &[u32] {
        &self.documents[r.doc].sentences[r.sentence]
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_index.len()
    }

    /// Sentences that live outside `doc`.
    pub fn eligible_negatives(&self, doc: usize) -> usize {
        let own = self.doc_offsets[doc + 1] - self.doc_offsets[doc];
        self.sentence_index.len() - own
    }
}

/// Tokenizes and maps raw documents through `vocab`. Unknown tokens become
/// [`UNK`]; empty sentences and then empty documents are dropped.
pub fn encode_corpus(raw: &[RawDocument], vocab: &Vocabulary) -> Result<Corpus> {
    let mut documents = Vec::with_capacity(raw.len());
    let mut dropped = 0usize;
    for doc in raw {
        let sentences: Vec<Sentence> = doc
            .sentences
            .iter()
            .map(|s| tokenize(s).iter().map(|t| vocab.encode(t)).collect::<Sentence>())
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            dropped += 1;
            continue;
        }
        documents.push(Document {
            id: doc.id.clone(),
            sentences,
        });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} documents with no tokens");
    }
    Corpus::new(documents, vocab.clone())
}

/// `r` uniform draws, with replacement, from sentences outside `exclude_doc`.
pub fn sample_negatives<R: Rng + ?Sized>(
    corpus: &Corpus,
    exclude_doc: usize,
    r: usize,
    rng: &mut R,
) -> Result<Vec<SentenceRef>> {
    if r == 0 {
        return Ok(Vec::new());
    }
    if exclude_doc >= corpus.len() {
        return Err(Error::IndexOutOfRange {
            what: "corpus documents",
            index: exclude_doc,
            size: corpus.len(),
        });
    }
    let eligible = corpus.eligible_negatives(exclude_doc);
    if eligible == 0 {
        return Err(Error::NoEligibleNegatives(exclude_doc));
    }
    let (start, end) = (corpus.doc_offsets[exclude_doc], corpus.doc_offsets[exclude_doc + 1]);
    Ok((0..r)
        .map(|_| {
            let mut j = rng.gen_range(0..eligible);
            if j >= start {
                j += end - start;
            }
            corpus.sentence_index[j]
        })
        .collect())
}
