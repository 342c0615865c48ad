use std::io::{BufRead, Write};

use super::svm::Label;
use crate::error::{Error, Result};

pub const POSITIVE_THRESHOLD: f64 = 4.5;
pub const NEGATIVE_THRESHOLD: f64 = 3.5;

/// `score ≥ pos` is positive, `score ≤ neg` negative, anything between is
/// excluded (`None`).
pub fn make_aspect_label_with(score: f64, pos: f64, neg: f64) -> Result<Option<Label>> {
    if !(0.0..=5.0).contains(&score) {
        return Err(Error::invalid(format!("score {score} not in [0, 5]")));
    }
    Ok(if score >= pos {
        Some(Label::Positive)
    } else if score <= neg {
        Some(Label::Negative)
    } else {
        None
    })
}

pub fn make_aspect_label(score: f64) -> Result<Option<Label>> {
    make_aspect_label_with(score, POSITIVE_THRESHOLD, NEGATIVE_THRESHOLD)
}

/// Per-review scores in `[0, 5]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AspectScores {
    pub appearance: f64,
    pub aroma: f64,
    pub palate: f64,
    pub taste: f64,
    pub overall: f64,
}

pub const SCORE_ASPECTS: [&str; 5] = ["appearance", "aroma", "palate", "taste", "overall"];

impl AspectScores {
    pub fn new(values: [f64; 5]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=5.0).contains(*v)) {
            return Err(Error::invalid(format!("score {v} not in [0, 5]")));
        }
        let [appearance, aroma, palate, taste, overall] = values;
        Ok(AspectScores {
            appearance,
            aroma,
            palate,
            taste,
            overall,
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.appearance, self.aroma, self.palate, self.taste, self.overall]
    }
}

/// Labels of several aspects per document; `None` marks an excluded entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTable {
    pub aspects: Vec<String>,
    pub rows: Vec<(String, Vec<Option<Label>>)>,
}

impl LabelTable {
    pub fn get(&self, doc_id: &str) -> Option<&[Option<Label>]> {
        self.rows.iter().find(|(d, _)| d == doc_id).map(|(_, l)| l.as_slice())
    }

    /// Label file: an optional `#aspects<TAB>name...` header followed by
    /// `doc_id<TAB>label...` lines with labels `+1`, `-1` or `0` (excluded).
    /// Without the header there is one aspect called `label`.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut aspects: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#aspects") {
                if !rows.is_empty() || aspects.is_some() {
                    return Err(Error::Parse {
                        line: n,
                        message: "#aspects header must come first".into(),
                    });
                }
                aspects = Some(rest.split('\t').filter(|s| !s.is_empty()).map(str::to_string).collect());
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let want = aspects.get_or_insert_with(|| vec!["label".to_string()]).len();
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let labels: Vec<Option<Label>> = fields
                .map(|f| match f.trim() {
                    "0" => Ok(None),
                    s => Label::parse(s).map(Some).ok_or_else(|| Error::Parse {
                        line: n,
                        message: format!("label {s:?} is not +1, -1 or 0"),
                    }),
                })
                .collect::<Result<_>>()?;
            if labels.len() != want {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected {want} labels, found {}", labels.len()),
                });
            }
            rows.push((id, labels));
        }
        Ok(LabelTable {
            aspects: aspects.unwrap_or_else(|| vec!["label".to_string()]),
            rows,
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        if !(self.aspects.len() == 1 && self.aspects[0] == "label") {
            writeln!(w, "#aspects\t{}", self.aspects.join("\t"))?;
        }
        for (id, labels) in &self.rows {
            write!(w, "{id}")?;
            for l in labels {
                write!(w, "\t{}", l.map_or("0", Label::as_str))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aspect-score file `doc_id<TAB>appearance<TAB>aroma<TAB>palate<TAB>taste<TAB>overall`,
    /// thresholded with [`make_aspect_label`].
    pub fn from_scores<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(err(format!("expected doc_id and 5 scores, found {} fields", fields.len())));
            }
            let mut values = [0.0; 5];
            for (v, f) in values.iter_mut().zip(&fields[1..]) {
                *v = f.trim().parse().map_err(|_| err(format!("bad score {f:?}")))?;
            }
            let scores = AspectScores::new(values).map_err(|e| err(e.to_string()))?;
            let labels = scores
                .values()
                .iter()
                .map(|&s| make_aspect_label(s))
                .collect::<Result<_>>()?;
            rows.push((fields[0].to_string(), labels));
        }
        Ok(LabelTable {
            aspects: SCORE_ASPECTS.iter().map(|s| s.to_string()).collect(),
            rows,
        })
    }
}
