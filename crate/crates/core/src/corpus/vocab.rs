use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
const RESERVED: [&str; 2] = ["<pad>", "<unk>"];

/// Token ↔ id mapping. Ids 0 and 1 are the reserved padding and
/// unknown-token slots; surface tokens start at id 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
}

impl Vocabulary {
    /// Builds from `(token, count)` entries already in id order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut counts = vec![0, 0];
        let mut token_to_id = HashMap::with_capacity(entries.len());
        for (token, count) in entries {
            let id = id_to_token.len() as u32;
            if token.is_empty() || token.contains(['\t', '\n']) {
                return Err(Error::invalid(format!("unusable vocabulary token {token:?}")));
            }
            if token_to_id.insert(token.clone(), id).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {token:?}")));
            }
            id_to_token.push(token);
            counts.push(count);
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            counts,
        })
    }

    /// Size including the two reserved ids.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() <= RESERVED.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// Vocabulary id, or [`UNK`] for unseen tokens.
    pub fn encode(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    /// Surface tokens with their counts, in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.id_to_token[RESERVED.len()..]
            .iter()
            .zip(&self.counts[RESERVED.len()..])
            .map(|(t, &c)| (t.as_str(), c))
    }

    /// `token<TAB>count` lines in id order, starting at id 2.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (token, count) in self.entries() {
            writeln!(w, "{token}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: &str| Error::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let (token, count) = line.split_once('\t').ok_or_else(|| parse_err("expected token<TAB>count"))?;
            let count = count.parse().map_err(|_| parse_err("count is not an integer"))?;
            entries.push((token.to_string(), count));
        }
        Self::from_entries(entries)
    }
}

/// Assigns ids by descending frequency, ties broken lexicographically, for
/// tokens seen at least `min_count` times.
pub fn build_vocabulary(docs: &[Vec<Vec<String>>], min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for token in docs.iter().flatten().flatten() {
        *counts.entry(token.as_str()).or_insert(0) += 1;
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: &[&str]) -> Vec<Vec<String>> {
        vec![tokens.iter().map(|s| s.to_string()).collect()]
    }

    #[test]
    fn min_count_filters() {
        let v = build_vocabulary(&[doc(&["a", "b", "a", "a"])], 2).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), None);
        assert_eq!(v.encode("b"), UNK);
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocabulary(&[doc(&["b", "a", "b", "a"])], 1).unwrap();
        assert_eq!(v.id("a"), Some(2));
        assert_eq!(v.id("b"), Some(3));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocabulary(&[], 1), Err(Error::EmptyVocabulary)));
        assert!(matches!(
            build_vocabulary(&[doc(&["a"])], 2),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn reserved_names_are_not_keys() {
        let v = build_vocabulary(&[doc(&["pad", "unk"])], 1).unwrap();
        assert_eq!(v.id("<pad>"), None);
        assert_eq!(v.id("<unk>"), None);
        assert_eq!(v.token(PAD), Some("<pad>"));
    }

    #[test]
    fn file_round_trip() {
        let v = build_vocabulary(&[doc(&["x", "y", "y", "z", "z", "z"])], 1).unwrap();
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "z\t3\ny\t2\nx\t1\n");
        assert_eq!(Vocabulary::read(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn malformed_file_reports_line() {
        let err = Vocabulary::read("a\t1\nb\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
