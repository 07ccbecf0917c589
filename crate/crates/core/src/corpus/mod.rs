//! Posting corpora: JSONL ingestion, sentence segmentation and the
//! held-out evaluation month.

mod reader;
mod sentences;

pub use reader::{load_corpus, write_corpus, CorpusReader, LoadOptions, LoadStats};
pub use sentences::split_sentences;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single job posting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Calendar month tag, `YYYY-MM`.
    pub month: String,
    pub source: String,
}

/// One line of a corpus file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct DocumentRecord {
    pub id: String,
    pub text: String,
    pub month: String,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        month: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self> {
        let doc = Document {
            id: id.into(),
            text: text.into(),
            month: month.into(),
            source: source.into(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidInput("document id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::InvalidInput(format!(
                "document {:?} has empty text",
                self.id
            )));
        }
        validate_month(&self.month)
    }
}

/// A sentence segment of a document. `start`/`end` are character
/// (Unicode scalar) offsets into the document text, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Checks a `YYYY-MM` month tag.
pub fn validate_month(month: &str) -> Result<()> {
    let bad = || Error::InvalidMonth(month.to_string());
    let (year, mon) = month.split_once('-').ok_or_else(bad)?;
    if year.len() != 4 || mon.len() != 2 {
        return Err(bad());
    }
    if !year.bytes().all(|b| b.is_ascii_digit()) || !mon.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let m: u32 = mon.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&m) {
        return Err(bad());
    }
    Ok(())
}

/// Result of separating the held-out month from the rest of a corpus.
#[derive(Debug, Default)]
pub struct HoldoutSplit {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub warnings: Vec<String>,
}

/// Partitions `docs` into training documents and those tagged `holdout_month`.
pub fn holdout_split<I>(docs: I, holdout_month: &str) -> Result<HoldoutSplit>
where
    I: IntoIterator<Item = Document>,
{
    validate_month(holdout_month)?;
    let mut split = HoldoutSplit::default();
    for doc in docs {
        if is_holdout(&doc, holdout_month) {
            split.test.push(doc);
        } else {
            split.train.push(doc);
        }
    }
    if split.test.is_empty() {
        let msg = format!("holdout month {holdout_month} not present in corpus; test set is empty");
        tracing::warn!("{msg}");
        split.warnings.push(msg);
    }
    Ok(split)
}

#[inline]
pub fn is_holdout(doc: &Document, holdout_month: &str) -> bool {
    doc.month == holdout_month
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, month: &str) -> Document {
        Document::new(id, "Some text.", month, "test").unwrap()
    }

    #[test]
    fn month_validation() {
        assert!(validate_month("2023-11").is_ok());
        assert!(validate_month("2023-13").is_err());
        assert!(validate_month("2023-00").is_err());
        assert!(validate_month("23-11").is_err());
        assert!(validate_month("2023/11").is_err());
        assert!(validate_month("2023-1").is_err());
    }

    #[test]
    fn holdout_takes_exactly_the_month() {
        let docs = vec![doc("a", "2023-10"), doc("b", "2023-11"), doc("c", "2023-11")];
        let split = holdout_split(docs, "2023-11").unwrap();
        assert_eq!(split.train.len(), 1);
        assert_eq!(split.test.len(), 2);
        assert!(split.test.iter().all(|d| d.month == "2023-11"));
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn absent_holdout_month_warns() {
        let docs = vec![doc("a", "2023-10"), doc("b", "2023-11")];
        let split = holdout_split(docs, "2099-01").unwrap();
        assert_eq!(split.train.len(), 2);
        assert!(split.test.is_empty());
        assert_eq!(split.warnings.len(), 1);
    }

    #[test]
    fn ten_docs_three_in_holdout() {
        let docs: Vec<_> = (0..10)
            .map(|i| doc(&format!("d{i}"), if i % 3 == 1 { "2024-12" } else { "2024-06" }))
            .collect();
        let split = holdout_split(docs, "2024-12").unwrap();
        assert_eq!((split.train.len(), split.test.len()), (7, 3));
    }

    #[test]
    fn invalid_holdout_month_is_rejected() {
        assert!(holdout_split(Vec::new(), "2024-1").is_err());
    }

    #[test]
    fn empty_text_rejected() {
        assert!(Document::new("x", "   \n", "2024-01", "t").is_err());
    }
}
