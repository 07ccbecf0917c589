use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences, Document, Sentence};
use crate::error::{Error, Result};
use crate::labeling::PromptTemplates;
use crate::providers::{dot, ChatClient, EmbeddingClient};
use crate::taxonomy::Taxonomy;

/// Similarity thresholds evaluated by default, strictest first.
pub const DEFAULT_TAUS: [f64; 4] = [0.9, 0.8, 0.7, 0.6];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub judge_a: u8,
    pub judge_b: u8,
}

impl LabeledSentence {
    pub fn lenient(&self) -> bool {
        self.judge_a == 1 || self.judge_b == 1
    }

    pub fn strict(&self) -> bool {
        self.judge_a == 1 && self.judge_b == 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTestSet {
    pub sentences: Vec<LabeledSentence>,
    /// Documents a judge could not label, recorded as all-negative.
    #[serde(default)]
    pub incidents: Vec<String>,
}

impl LabeledTestSet {
    pub fn lenient(&self) -> Vec<bool> {
        self.sentences.iter().map(LabeledSentence::lenient).collect()
    }

    pub fn strict(&self) -> Vec<bool> {
        self.sentences.iter().map(LabeledSentence::strict).collect()
    }

    pub fn texts(&self) -> Vec<String> {
        self.sentences.iter().map(|s| s.sentence.text.clone()).collect()
    }
}

pub fn write_labeled_test_set(path: impl AsRef<Path>, set: &LabeledTestSet) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in &set.sentences {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labeled_test_set(path: impl AsRef<Path>) -> Result<LabeledTestSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledSentence = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        if s.judge_a > 1 || s.judge_b > 1 {
            return Err(Error::Record {
                line: i + 1,
                message: "judge labels must be 0 or 1".into(),
            });
        }
        sentences.push(s);
    }
    Ok(LabeledTestSet { sentences, incidents: Vec::new() })
}

/// Integers inside the first bracketed list after the final
/// `Classification:` marker (or anywhere, without a marker).
pub fn parse_id_list(reply: &str) -> Option<Vec<usize>> {
    let tail = reply.rfind("Classification:").map_or(reply, |p| &reply[p..]);
    let open = tail.find('[')?;
    let close = open + tail[open..].find(']')?;
    Some(
        tail[open + 1..close]
            .split(|c: char| !c.is_ascii_digit())
            .filter_map(|t| t.parse().ok())
            .collect(),
    )
}

fn judge_document(sentences: &[Sentence], chat: &ChatClient, templates: &PromptTemplates) -> Result<Option<Vec<u8>>> {
    let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
    let prompt = templates.render_test_labeling(&texts);
    for attempt in 0..2 {
        let reply = chat.chat_complete(&prompt)?;
        if let Some(ids) = parse_id_list(&reply) {
            let mut labels = vec![0u8; sentences.len()];
            for id in ids {
                match id.checked_sub(1).and_then(|i| labels.get_mut(i)) {
                    Some(slot) => *slot = 1,
                    None => tracing::warn!(id, "judge returned an id outside the document"),
                }
            }
            return Ok(Some(labels));
        }
        if attempt == 0 {
            tracing::warn!(model = chat.config().model_id, "unparseable id list; asking again");
        }
    }
    Ok(None)
}

/// Splits each test document into sentences and has both judges flag the
/// domain-related ones. A judge that twice fails to return a list marks that
/// document all-negative and an incident is recorded.
pub fn label_test_sentences(
    test_docs: &[Document],
    judges: &[ChatClient],
    templates: &PromptTemplates,
) -> Result<LabeledTestSet> {
    if judges.len() != 2 || judges[0].config().model_id == judges[1].config().model_id {
        return Err(Error::Config("test labeling needs two distinct chat models".into()));
    }
    for j in judges {
        j.config().require_zero_temperature()?;
    }
    let threads = judges[0].config().max_in_flight;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let per_doc: Vec<(Vec<LabeledSentence>, Vec<String>)> = pool.install(|| {
        test_docs
            .par_iter()
            .map(|doc| -> Result<_> {
                let sentences = split_sentences(doc);
                if sentences.is_empty() {
                    return Ok((Vec::new(), Vec::new()));
                }
                let mut incidents = Vec::new();
                let mut votes = Vec::new();
                for j in judges {
                    match judge_document(&sentences, j, templates)? {
                        Some(v) => votes.push(v),
                        None => {
                            incidents.push(format!("{}: {} returned no id list", doc.id, j.config().model_id));
                            votes.push(vec![0; sentences.len()]);
                        }
                    }
                }
                let out = sentences
                    .into_iter()
                    .enumerate()
                    .map(|(i, sentence)| LabeledSentence {
                        sentence,
                        judge_a: votes[0][i],
                        judge_b: votes[1][i],
                    })
                    .collect();
                Ok((out, incidents))
            })
            .collect::<Result<_>>()
    })?;
    let mut set = LabeledTestSet::default();
    for (s, inc) in per_doc {
        set.sentences.extend(s);
        set.incidents.extend(inc);
    }
    for i in &set.incidents {
        tracing::warn!("{i}");
    }
    Ok(set)
}

/// Unweighted mean of per-class F1 over classes {0, 1}. A class with an
/// empty F1 denominator scores 0.
pub fn macro_f1(pred: &[bool], truth: &[bool]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    let f1 = |class: bool| {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    (f1(false) + f1(true)) / 2.0
}

/// Best provider-averaged similarity of each test sentence to any leaf and of
/// each leaf to any test sentence. Thresholding these gives predictions and
/// matched leaves for every τ.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    pub leaf_ids: Vec<String>,
    pub sentence_best: Vec<f64>,
    pub leaf_best: Vec<f64>,
}

impl SimilarityTable {
    pub fn compute(leaves: &[(String, String)], sentences: &[String], providers: &[&EmbeddingClient]) -> Result<Self> {
        if providers.is_empty() {
            return Err(Error::Config("coverage needs at least one embedding provider".into()));
        }
        let leaf_texts: Vec<String> = leaves.iter().map(|(_, t)| t.clone()).collect();
        let mut leaf_vecs = Vec::new();
        let mut sent_vecs = Vec::new();
        for p in providers {
            leaf_vecs.push(p.embed_texts(&leaf_texts)?);
            sent_vecs.push(p.embed_texts(sentences)?);
        }
        let np = providers.len() as f64;
        let nl = leaves.len();
        let (sentence_best, leaf_best) = (0..sentences.len())
            .into_par_iter()
            .fold(
                || (Vec::new(), vec![f64::NEG_INFINITY; nl]),
                |(mut rows, mut cols), i| {
                    let mut best = f64::NEG_INFINITY;
                    for (j, col) in cols.iter_mut().enumerate() {
                        let s: f64 = (0..providers.len())
                            .map(|p| dot(sent_vecs[p][i].values(), leaf_vecs[p][j].values()).clamp(-1.0, 1.0))
                            .sum::<f64>()
                            / np;
                        best = best.max(s);
                        *col = col.max(s);
                    }
                    rows.push((i, best));
                    (rows, cols)
                },
            )
            .reduce(
                || (Vec::new(), vec![f64::NEG_INFINITY; nl]),
                |(mut ra, ca), (rb, cb)| {
                    ra.extend(rb);
                    (ra, ca.iter().zip(&cb).map(|(a, b)| a.max(*b)).collect())
                },
            );
        let mut rows = sentence_best;
        rows.sort_by_key(|r| r.0);
        Ok(SimilarityTable {
            leaf_ids: leaves.iter().map(|(id, _)| id.clone()).collect(),
            sentence_best: rows.into_iter().map(|r| r.1).collect(),
            leaf_best,
        })
    }

    pub fn predictions(&self, tau: f64) -> Vec<bool> {
        self.sentence_best.iter().map(|&s| s > tau).collect()
    }

    pub fn matched_leaves(&self, tau: f64) -> Vec<String> {
        self.leaf_ids
            .iter()
            .zip(&self.leaf_best)
            .filter(|(_, &s)| s > tau)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn evaluate(&self, lts: &LabeledTestSet, tau: f64) -> TauResult {
        let pred = self.predictions(tau);
        TauResult {
            tau,
            lenient_f1: macro_f1(&pred, &lts.lenient()),
            strict_f1: macro_f1(&pred, &lts.strict()),
            matched_leaf_ids: self.matched_leaves(tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau: f64,
    pub lenient_f1: f64,
    pub strict_f1: f64,
    pub matched_leaf_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub results: Vec<TauResult>,
    pub best_strict_tau: f64,
    pub label_utilization: f64,
}

impl CoverageReport {
    pub fn at(&self, tau: f64) -> Option<&TauResult> {
        self.results.iter().find(|r| (r.tau - tau).abs() < 1e-12)
    }
}

fn leaves_of(t: &Taxonomy) -> Result<Vec<(String, String)>> {
    let leaves: Vec<_> = t.leaves().map(|n| (n.id.clone(), n.text.clone())).collect();
    if leaves.is_empty() {
        return Err(Error::InvalidInput("taxonomy has no leaves".into()));
    }
    Ok(leaves)
}

/// Macro-F1 against lenient and strict truth at one threshold, plus the
/// leaves matched by at least one sentence.
pub fn coverage_at(
    t: &Taxonomy,
    lts: &LabeledTestSet,
    tau: f64,
    providers: &[&EmbeddingClient],
) -> Result<TauResult> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau {tau} outside (0, 1)")));
    }
    let table = SimilarityTable::compute(&leaves_of(t)?, &lts.texts(), providers)?;
    Ok(table.evaluate(lts, tau))
}

/// Strict-F1 argmax over τ (ties to the larger τ) and the fraction of leaves
/// matched there.
pub fn utilization(leaf_count: usize, results: &[TauResult]) -> Result<(f64, f64)> {
    let best = results
        .iter()
        .max_by(|a, b| a.strict_f1.total_cmp(&b.strict_f1).then(a.tau.total_cmp(&b.tau)))
        .ok_or_else(|| Error::InvalidInput("no thresholds evaluated".into()))?;
    if leaf_count == 0 {
        return Err(Error::InvalidInput("taxonomy has no leaves".into()));
    }
    Ok((best.tau, best.matched_leaf_ids.len() as f64 / leaf_count as f64))
}

pub fn coverage_report(
    t: &Taxonomy,
    lts: &LabeledTestSet,
    taus: &[f64],
    providers: &[&EmbeddingClient],
) -> Result<CoverageReport> {
    let leaves = leaves_of(t)?;
    let table = SimilarityTable::compute(&leaves, &lts.texts(), providers)?;
    let results: Vec<TauResult> = taus.iter().map(|&tau| table.evaluate(lts, tau)).collect();
    let (best_strict_tau, label_utilization) = utilization(leaves.len(), &results)?;
    Ok(CoverageReport {
        results,
        best_strict_tau,
        label_utilization,
    })
}
