//! Keyword dictionaries and multi-pattern candidate extraction.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use aho_corasick::{AhoCorasick, MatchKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{split_sentences, Document, Sentence};
use crate::error::{Error, Result};

/// Normalized keyword dictionary. Keywords are lowercase, trimmed, free of
/// `/` and parentheses, unique and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    keywords: Vec<String>,
    pub source_note: String,
}

impl KeywordSet {
    /// Normalizes raw dictionary entries: lowercase, split on `/`, drop
    /// parentheses, trim, collapse inner whitespace, dedupe, sort.
    pub fn from_raw<I, S>(raw: I, source_note: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for entry in raw {
            let lowered = entry.as_ref().to_lowercase();
            for part in lowered.split('/') {
                let cleaned: String = part.chars().filter(|c| !matches!(c, '(' | ')')).collect();
                let normalized = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
                if !normalized.is_empty() {
                    set.insert(normalized);
                }
            }
        }
        if set.is_empty() {
            return Err(Error::InvalidInput("keyword dictionary is empty".into()));
        }
        Ok(KeywordSet {
            keywords: set.into_iter().collect(),
            source_note: source_note.into(),
        })
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

/// Reads a dictionary file with one raw keyword per line.
pub fn load_keywords(path: impl AsRef<Path>) -> Result<KeywordSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))?;
    KeywordSet::from_raw(lines, path.display().to_string())
}

/// What counts as a keyword boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Whitespace or sentence start/end only.
    #[default]
    Strict,
    /// Any non-alphanumeric character also counts.
    Loose,
}

impl BoundaryMode {
    #[inline]
    pub fn is_boundary(self, c: char) -> bool {
        match self {
            BoundaryMode::Strict => c.is_whitespace(),
            BoundaryMode::Loose => !c.is_alphanumeric(),
        }
    }
}

/// Immutable multi-pattern automaton over a keyword set.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    automaton: AhoCorasick,
    keywords: Vec<String>,
    mode: BoundaryMode,
}

impl KeywordMatcher {
    pub fn new(keywords: &KeywordSet, mode: BoundaryMode) -> Result<Self> {
        let automaton = AhoCorasick::builder()
            .match_kind(MatchKind::Standard)
            .build(keywords.keywords())
            .map_err(|e| Error::InvalidInput(format!("cannot build keyword automaton: {e}")))?;
        Ok(KeywordMatcher {
            automaton,
            keywords: keywords.keywords().to_vec(),
            mode,
        })
    }

    /// Keywords found in `text`, each reported once, in dictionary order.
    pub fn match_text(&self, text: &str) -> Vec<String> {
        let lowered = text.to_lowercase();
        let mut hit = vec![false; self.keywords.len()];
        for m in self.automaton.find_overlapping_iter(&lowered) {
            let id = m.pattern().as_usize();
            if hit[id] {
                continue;
            }
            let before = lowered[..m.start()].chars().next_back();
            let after = lowered[m.end()..].chars().next();
            let ok = before.is_none_or(|c| self.mode.is_boundary(c))
                && after.is_none_or(|c| self.mode.is_boundary(c));
            if ok {
                hit[id] = true;
            }
        }
        hit.iter()
            .zip(&self.keywords)
            .filter(|(h, _)| **h)
            .map(|(_, k)| k.clone())
            .collect()
    }

    pub fn match_sentence(&self, sentence: &Sentence) -> Vec<String> {
        self.match_text(&sentence.text)
    }
}

/// Convenience wrapper building a strict-boundary matcher on the fly.
pub fn match_sentence(sentence: &Sentence, keywords: &KeywordSet) -> Result<Vec<String>> {
    Ok(KeywordMatcher::new(keywords, BoundaryMode::Strict)?.match_sentence(sentence))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Mined,
    Augmented,
}

/// A sentence selected as taxonomy evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSentence {
    pub id: String,
    pub sentence: Sentence,
    pub matched_keywords: Vec<String>,
    pub doc_match_count: usize,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_candidate_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_score: Option<f64>,
}

impl CandidateSentence {
    pub fn text(&self) -> &str {
        &self.sentence.text
    }

    /// Checks the origin-dependent invariants.
    pub fn validate(&self) -> Result<()> {
        match self.origin {
            Origin::Mined => {
                if self.matched_keywords.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "mined candidate {} has no keyword hits",
                        self.id
                    )));
                }
                if self.parent_candidate_id.is_some() {
                    return Err(Error::InvalidInput(format!(
                        "mined candidate {} has a parent",
                        self.id
                    )));
                }
                if self.doc_match_count == 0 {
                    return Err(Error::InvalidInput(format!(
                        "mined candidate {} has zero document matches",
                        self.id
                    )));
                }
            }
            Origin::Augmented => {
                if self.parent_candidate_id.is_none() {
                    return Err(Error::InvalidInput(format!(
                        "augmented candidate {} has no parent",
                        self.id
                    )));
                }
            }
        }
        if let Some(score) = self.class_score {
            if !(-1.0..=1.0).contains(&score) {
                return Err(Error::InvalidInput(format!(
                    "candidate {} score {score} outside [-1, 1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Stable candidate id derived from the document id and sentence index.
pub fn candidate_id(doc_id: &str, sentence_index: usize) -> String {
    let mut h = Sha256::new();
    h.update(doc_id.as_bytes());
    h.update([0u8]);
    h.update(sentence_index.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Extracts keyword-bearing sentences from documents with at least
/// `min_doc_matches` matching sentences. Output order is document order,
/// then sentence index.
pub fn mine_candidates(
    docs: &[Document],
    matcher: &KeywordMatcher,
    min_doc_matches: usize,
) -> Result<Vec<CandidateSentence>> {
    if min_doc_matches == 0 {
        return Err(Error::InvalidInput("min_doc_matches must be at least 1".into()));
    }
    let per_doc: Vec<Vec<CandidateSentence>> = docs
        .par_iter()
        .map(|doc| mine_document(doc, matcher, min_doc_matches))
        .collect();
    Ok(per_doc.into_iter().flatten().collect())
}

fn mine_document(
    doc: &Document,
    matcher: &KeywordMatcher,
    min_doc_matches: usize,
) -> Vec<CandidateSentence> {
    let hits: Vec<(Sentence, Vec<String>)> = split_sentences(doc)
        .into_iter()
        .filter_map(|s| {
            let kws = matcher.match_sentence(&s);
            (!kws.is_empty()).then_some((s, kws))
        })
        .collect();
    let count = hits.len();
    if count < min_doc_matches {
        return Vec::new();
    }
    hits.into_iter()
        .map(|(sentence, matched_keywords)| CandidateSentence {
            id: candidate_id(&sentence.doc_id, sentence.index),
            sentence,
            matched_keywords,
            doc_match_count: count,
            origin: Origin::Mined,
            parent_candidate_id: None,
            class_score: None,
        })
        .collect()
}

pub fn write_candidates(path: impl AsRef<Path>, candidates: &[CandidateSentence]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for c in candidates {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<CandidateSentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let c: CandidateSentence = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        c.validate().map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(c);
    }
    Ok(out)
}
