//! Class-relatedness scoring, percentile filtering and similarity-based
//! augmentation of the candidate pool.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::mining::{
    candidate_id, read_candidates, write_candidates, CandidateSentence, KeywordSet, Origin,
};
use crate::providers::{cosine_similarity, dot, EmbeddingClient, EmbeddingVector};

/// Percentile cut for filtering. Higher is stricter: `P75` keeps roughly the
/// top quarter of mined candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Percentile {
    P25,
    P50,
    P75,
}

impl Percentile {
    pub const ALL: [Percentile; 3] = [Percentile::P25, Percentile::P50, Percentile::P75];

    pub fn value(self) -> u8 {
        match self {
            Percentile::P25 => 25,
            Percentile::P50 => 50,
            Percentile::P75 => 75,
        }
    }
}

impl TryFrom<u8> for Percentile {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            25 => Ok(Percentile::P25),
            50 => Ok(Percentile::P50),
            75 => Ok(Percentile::P75),
            other => Err(format!("percentile must be 25, 50 or 75, got {other}")),
        }
    }
}

impl From<Percentile> for u8 {
    fn from(p: Percentile) -> u8 {
        p.value()
    }
}

impl fmt::Display for Percentile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Candidates with class scores and lineage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoredPool {
    pub candidates: Vec<CandidateSentence>,
    pub provider_ids: Vec<String>,
    /// Keyword vectors per provider; in-memory only.
    #[serde(skip)]
    pub keyword_embeddings: Vec<Vec<EmbeddingVector>>,
}

impl ScoredPool {
    pub fn mined(&self) -> impl Iterator<Item = &CandidateSentence> {
        self.candidates.iter().filter(|c| c.origin == Origin::Mined)
    }

    pub fn augmented(&self) -> impl Iterator<Item = &CandidateSentence> {
        self.candidates.iter().filter(|c| c.origin == Origin::Augmented)
    }

    /// Mined candidates carry scores in [-1, 1]; augmented candidates point
    /// at a mined candidate present in the pool.
    pub fn validate(&self) -> Result<()> {
        let ids: HashSet<&str> = self.mined().map(|c| c.id.as_str()).collect();
        for c in &self.candidates {
            c.validate()?;
            match c.origin {
                Origin::Mined if c.class_score.is_none() => {
                    return Err(Error::InvalidInput(format!("candidate {} is unscored", c.id)))
                }
                Origin::Augmented => {
                    let parent = c.parent_candidate_id.as_deref().unwrap_or_default();
                    if !ids.contains(parent) {
                        return Err(Error::InvalidInput(format!(
                            "augmented candidate {} has dangling parent {parent}",
                            c.id
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Mean-max class score of one text given its embedding under each provider
/// and the keyword embeddings under the same providers.
///
/// Per provider: `(mean(sims) + max(sims)) / 2`; the result is the mean over
/// providers.
pub fn class_score_from_embeddings(
    candidate: &[EmbeddingVector],
    keyword_embs: &[Vec<EmbeddingVector>],
) -> Result<f64> {
    if candidate.is_empty() || candidate.len() != keyword_embs.len() {
        return Err(Error::InvalidInput(format!(
            "need one candidate vector per provider ({} vs {})",
            candidate.len(),
            keyword_embs.len()
        )));
    }
    let mut total = 0.0;
    for (c, kws) in candidate.iter().zip(keyword_embs) {
        if kws.is_empty() {
            return Err(Error::InvalidInput("keyword set is empty".into()));
        }
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        for k in kws {
            let s = cosine_similarity(c, k)?;
            sum += s;
            max = max.max(s);
        }
        total += (sum / kws.len() as f64 + max) / 2.0;
    }
    Ok(total / candidate.len() as f64)
}

/// Embeds every keyword under every provider.
pub fn embed_keywords(
    keywords: &KeywordSet,
    providers: &[&EmbeddingClient],
) -> Result<Vec<Vec<EmbeddingVector>>> {
    if providers.is_empty() {
        return Err(Error::Config("at least one embedding provider is required".into()));
    }
    providers
        .iter()
        .map(|p| p.embed_texts(keywords.keywords()))
        .collect()
}

/// Class score of a single text.
pub fn class_score(
    candidate_text: &str,
    keyword_embs: &[Vec<EmbeddingVector>],
    providers: &[&EmbeddingClient],
) -> Result<f64> {
    let vecs = providers
        .iter()
        .map(|p| p.embed_one(candidate_text))
        .collect::<Result<Vec<_>>>()?;
    class_score_from_embeddings(&vecs, keyword_embs)
}

/// Scores all candidates against the keyword set.
pub fn score_candidates(
    mut candidates: Vec<CandidateSentence>,
    keywords: &KeywordSet,
    providers: &[&EmbeddingClient],
) -> Result<ScoredPool> {
    let keyword_embeddings = embed_keywords(keywords, providers)?;
    let texts: Vec<String> = candidates.iter().map(|c| c.text().to_string()).collect();
    let per_provider: Vec<Vec<EmbeddingVector>> = providers
        .iter()
        .map(|p| p.embed_texts(&texts))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = (0..candidates.len())
        .into_par_iter()
        .map(|i| {
            let vecs: Vec<EmbeddingVector> = per_provider.iter().map(|v| v[i].clone()).collect();
            class_score_from_embeddings(&vecs, &keyword_embeddings)
        })
        .collect::<Result<_>>()?;
    for (c, s) in candidates.iter_mut().zip(scores) {
        if c.origin == Origin::Mined {
            c.class_score = Some(s);
        }
    }
    Ok(ScoredPool {
        candidates,
        provider_ids: providers.iter().map(|p| p.model_id().to_string()).collect(),
        keyword_embeddings,
    })
}

/// Linear-interpolation percentile of ascending `sorted` values, `pct` in
/// [0, 100].
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = (sorted.len() - 1) as f64 * pct / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Keeps mined candidates scoring strictly above the `pct`-th percentile of
/// mined scores, then drops augmented candidates whose parent did not survive.
pub fn percentile_filter(pool: &ScoredPool, pct: Percentile) -> Result<ScoredPool> {
    let mut scores = Vec::new();
    for c in pool.mined() {
        scores.push(c.class_score.ok_or_else(|| {
            Error::InvalidInput(format!("candidate {} is unscored", c.id))
        })?);
    }
    if scores.is_empty() {
        tracing::warn!("percentile filter on an empty pool");
        return Ok(ScoredPool {
            candidates: Vec::new(),
            ..pool.clone()
        });
    }
    scores.sort_by(f64::total_cmp);
    let cut = percentile(&scores, pct.value() as f64);

    let kept: HashSet<&str> = pool
        .mined()
        .filter(|c| c.class_score.is_some_and(|s| s > cut))
        .map(|c| c.id.as_str())
        .collect();
    let candidates = pool
        .candidates
        .iter()
        .filter(|c| match c.origin {
            Origin::Mined => kept.contains(c.id.as_str()),
            Origin::Augmented => c
                .parent_candidate_id
                .as_deref()
                .is_some_and(|p| kept.contains(p)),
        })
        .cloned()
        .collect();
    Ok(ScoredPool {
        candidates,
        provider_ids: pool.provider_ids.clone(),
        keyword_embeddings: pool.keyword_embeddings.clone(),
    })
}

/// Nearest candidate by cosine; ties go to the lexicographically lower id.
pub(crate) fn nearest(
    query: &[f32],
    matrix: &[f32],
    dim: usize,
    ids: &[&str],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, row) in matrix.chunks_exact(dim).enumerate() {
        let s = dot(query, row);
        best = match best {
            None => Some((j, s)),
            Some((bj, bs)) if s > bs || (s == bs && ids[j] < ids[bj]) => Some((j, s)),
            keep => keep,
        };
    }
    best
}

/// Adds corpus sentences whose best cosine similarity to a mined candidate
/// exceeds `threshold`. The nearest candidate becomes the parent.
///
/// `train_sentences` must come from training documents only.
pub fn augment_candidates(
    pool: &ScoredPool,
    train_sentences: &[Sentence],
    threshold: f64,
    provider: &EmbeddingClient,
) -> Result<ScoredPool> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "augmentation threshold {threshold} outside (0, 1]"
        )));
    }
    let parents: Vec<&CandidateSentence> = pool.mined().collect();
    if parents.is_empty() {
        return Ok(pool.clone());
    }
    let mut seen_text: HashSet<&str> = pool.candidates.iter().map(|c| c.text()).collect();
    let seen_id: HashSet<&str> = pool.candidates.iter().map(|c| c.id.as_str()).collect();

    let mut fresh: Vec<&Sentence> = Vec::new();
    for s in train_sentences {
        if seen_text.insert(s.text.as_str())
            && !seen_id.contains(candidate_id(&s.doc_id, s.index).as_str())
        {
            fresh.push(s);
        }
    }
    if fresh.is_empty() {
        return Ok(pool.clone());
    }

    let parent_texts: Vec<String> = parents.iter().map(|c| c.text().to_string()).collect();
    let parent_vecs = provider.embed_texts(&parent_texts)?;
    let dim = parent_vecs[0].dim();
    let matrix: Vec<f32> = parent_vecs.iter().flat_map(|v| v.values().iter().copied()).collect();
    let parent_ids: Vec<&str> = parents.iter().map(|c| c.id.as_str()).collect();

    let fresh_texts: Vec<String> = fresh.iter().map(|s| s.text.clone()).collect();
    let fresh_vecs = provider.embed_texts(&fresh_texts)?;

    let hits: Vec<Option<usize>> = fresh_vecs
        .par_iter()
        .map(|v| {
            nearest(v.values(), &matrix, dim, &parent_ids)
                .filter(|&(_, s)| s > threshold)
                .map(|(j, _)| j)
        })
        .collect();

    let mut out = pool.clone();
    let mut added: HashMap<&str, usize> = HashMap::new();
    for (s, hit) in fresh.iter().zip(hits) {
        let Some(j) = hit else { continue };
        *added.entry(parent_ids[j]).or_default() += 1;
        out.candidates.push(CandidateSentence {
            id: candidate_id(&s.doc_id, s.index),
            sentence: (*s).clone(),
            matched_keywords: Vec::new(),
            doc_match_count: 0,
            origin: Origin::Augmented,
            parent_candidate_id: Some(parent_ids[j].to_string()),
            class_score: None,
        });
    }
    tracing::info!(
        "augmentation added {} candidates",
        out.candidates.len() - pool.candidates.len()
    );
    Ok(out)
}

/// Writes the pool as candidate JSONL; scores and lineage ride along.
pub fn write_pool(path: impl AsRef<Path>, pool: &ScoredPool) -> Result<()> {
    write_candidates(path, &pool.candidates)
}

/// Reads a pool written by [`write_pool`] and checks lineage.
pub fn read_pool(path: impl AsRef<Path>, provider_ids: Vec<String>) -> Result<ScoredPool> {
    let pool = ScoredPool {
        candidates: read_candidates(path)?,
        provider_ids,
        keyword_embeddings: Vec::new(),
    };
    pool.validate()?;
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ProviderConfig;

    fn unit(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(values.to_vec(), "t".into()).unwrap()
    }

    fn sentence(doc: &str, index: usize, text: &str) -> Sentence {
        Sentence {
            doc_id: doc.into(),
            index,
            text: text.into(),
            start: 0,
            end: text.chars().count(),
        }
    }

    fn mined(id: &str, score: f64) -> CandidateSentence {
        CandidateSentence {
            id: id.into(),
            sentence: sentence(id, 0, id),
            matched_keywords: vec!["k".into()],
            doc_match_count: 3,
            origin: Origin::Mined,
            parent_candidate_id: None,
            class_score: Some(score),
        }
    }

    fn augmented(id: &str, parent: &str) -> CandidateSentence {
        CandidateSentence {
            id: id.into(),
            sentence: sentence(id, 0, id),
            matched_keywords: Vec::new(),
            doc_match_count: 0,
            origin: Origin::Augmented,
            parent_candidate_id: Some(parent.into()),
            class_score: None,
        }
    }

    fn pool(candidates: Vec<CandidateSentence>) -> ScoredPool {
        ScoredPool {
            candidates,
            provider_ids: vec!["t".into()],
            keyword_embeddings: Vec::new(),
        }
    }

    #[test]
    fn identical_single_keyword_scores_one() {
        let v = unit(&[0.2, 0.5, 0.1]);
        let s = class_score_from_embeddings(std::slice::from_ref(&v), &[vec![v.clone()]]).unwrap();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mean_max_hand_value() {
        let c = unit(&[1.0, 0.0]);
        let kws = vec![unit(&[0.0, 1.0]), unit(&[1.0, 0.0])];
        let s = class_score_from_embeddings(&[c], &[kws]).unwrap();
        assert!((s - 0.75).abs() < 1e-9);
    }

    #[test]
    fn providers_are_averaged() {
        // Provider one: sims {0.8} -> 0.8; provider two: sims {0.6} -> 0.6.
        let c1 = unit(&[1.0, 0.0]);
        let k1 = unit(&[0.8, 0.6]);
        let c2 = unit(&[1.0, 0.0]);
        let k2 = unit(&[0.6, 0.8]);
        let s = class_score_from_embeddings(&[c1, c2], &[vec![k1], vec![k2]]).unwrap();
        assert!((s - 0.7).abs() < 1e-6);
    }

    #[test]
    fn score_requires_matching_provider_count() {
        let v = unit(&[1.0]);
        assert!(class_score_from_embeddings(std::slice::from_ref(&v), &[]).is_err());
        assert!(class_score_from_embeddings(&[v], &[vec![]]).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&xs, 75.0) - 75.25).abs() < 1e-12);
        assert!((percentile(&xs, 25.0) - 25.75).abs() < 1e-12);
        assert_eq!(percentile(&[3.0], 50.0), 3.0);
    }

    fn uniform_pool() -> ScoredPool {
        pool((1..=100).map(|i| mined(&format!("c{i:03}"), i as f64 / 100.0)).collect())
    }

    #[test]
    fn p75_keeps_top_quarter() {
        let out = percentile_filter(&uniform_pool(), Percentile::P75).unwrap();
        assert_eq!(out.candidates.len(), 25);
        let min = out.candidates.iter().map(|c| c.class_score.unwrap()).fold(1.0, f64::min);
        assert!((min - 0.76).abs() < 1e-12);
    }

    #[test]
    fn p25_keeps_three_quarters() {
        let out = percentile_filter(&uniform_pool(), Percentile::P25).unwrap();
        assert_eq!(out.candidates.len(), 75);
    }

    #[test]
    fn dropped_parent_takes_children() {
        let mut p = uniform_pool();
        p.candidates.push(augmented("a1", "c001"));
        p.candidates.push(augmented("a2", "c001"));
        p.candidates.push(augmented("a3", "c100"));
        let out = percentile_filter(&p, Percentile::P50).unwrap();
        let ids: Vec<_> = out.augmented().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["a3"]);
        out.validate().unwrap();
    }

    #[test]
    fn ties_at_cut_are_excluded() {
        let p = pool((0..4).map(|i| mined(&format!("c{i}"), 0.5)).collect());
        assert!(percentile_filter(&p, Percentile::P25).unwrap().candidates.is_empty());
    }

    #[test]
    fn empty_pool_filters_to_empty() {
        assert!(percentile_filter(&pool(Vec::new()), Percentile::P50)
            .unwrap()
            .candidates
            .is_empty());
    }

    #[test]
    fn unscored_candidate_is_an_error() {
        let mut c = mined("x", 0.0);
        c.class_score = None;
        assert!(percentile_filter(&pool(vec![c]), Percentile::P50).is_err());
    }

    fn mock() -> EmbeddingClient {
        EmbeddingClient::new(ProviderConfig::mock_embedding("mock")).unwrap()
    }

    fn text_candidate(doc: &str, text: &str) -> CandidateSentence {
        CandidateSentence {
            id: candidate_id(doc, 0),
            sentence: sentence(doc, 0, text),
            ..mined("unused", 0.5)
        }
    }

    #[test]
    fn identical_text_is_not_added() {
        let p = pool(vec![text_candidate("d1", "train deep learning models on gpus")]);
        let corpus = vec![sentence("d2", 0, "train deep learning models on gpus")];
        let out = augment_candidates(&p, &corpus, 0.9, &mock()).unwrap();
        assert_eq!(out.candidates.len(), 1);
    }

    #[test]
    fn near_duplicate_is_added_with_parent() {
        let base = "train and deploy deep learning models on large gpu clusters for vision";
        let near = "train and deploy deep learning models on large gpu clusters for speech";
        let far = "operate a forklift in the warehouse safely";
        let client = mock();
        let sim = cosine(&client, base, near);
        assert!(sim > 0.9 && sim < 1.0, "constructed similarity {sim}");
        let p = pool(vec![text_candidate("d1", base)]);
        let corpus = vec![sentence("d2", 0, near), sentence("d2", 1, far)];
        let out = augment_candidates(&p, &corpus, 0.9, &client).unwrap();
        let aug: Vec<_> = out.augmented().collect();
        assert_eq!(aug.len(), 1);
        assert_eq!(aug[0].text(), near);
        assert_eq!(aug[0].parent_candidate_id.as_deref(), Some(candidate_id("d1", 0).as_str()));
        out.validate().unwrap();
    }

    fn cosine(client: &EmbeddingClient, a: &str, b: &str) -> f64 {
        crate::providers::cosine_similarity(&client.embed_one(a).unwrap(), &client.embed_one(b).unwrap())
            .unwrap()
    }

    #[test]
    fn threshold_one_adds_nothing() {
        let base = "train deep learning models";
        let p = pool(vec![text_candidate("d1", base)]);
        let corpus = vec![sentence("d2", 0, "Train deep learning models!")];
        let out = augment_candidates(&p, &corpus, 1.0, &mock()).unwrap();
        assert_eq!(out.candidates.len(), 1);
    }

    #[test]
    fn each_sentence_added_once() {
        let base = "train and deploy deep learning models on large gpu clusters for vision";
        let near = "train and deploy deep learning models on large gpu clusters for speech";
        let p = pool(vec![text_candidate("d1", base)]);
        let corpus = vec![sentence("d2", 0, near), sentence("d3", 0, near)];
        let out = augment_candidates(&p, &corpus, 0.9, &mock()).unwrap();
        assert_eq!(out.augmented().count(), 1);
    }

    #[test]
    fn nearest_breaks_ties_by_id() {
        let matrix = [1.0f32, 0.0, 1.0, 0.0];
        assert_eq!(nearest(&[1.0, 0.0], &matrix, 2, &["b", "a"]).unwrap().0, 1);
        assert_eq!(nearest(&[1.0, 0.0], &matrix, 2, &["a", "b"]).unwrap().0, 0);
    }

    #[test]
    fn bad_threshold_rejected() {
        assert!(augment_candidates(&pool(vec![]), &[], 0.0, &mock()).is_err());
        assert!(augment_candidates(&pool(vec![]), &[], 1.5, &mock()).is_err());
    }

    #[test]
    fn pool_jsonl_round_trip() {
        let mut p = uniform_pool();
        p.candidates.push(augmented("a1", "c050"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        write_pool(&path, &p).unwrap();
        let back = read_pool(&path, p.provider_ids.clone()).unwrap();
        assert_eq!(back.candidates, p.candidates);
    }

    #[test]
    fn read_pool_rejects_dangling_parent() {
        let p = pool(vec![mined("c1", 0.3), augmented("a1", "missing")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        write_pool(&path, &p).unwrap();
        assert!(read_pool(&path, Vec::new()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pool() -> impl Strategy<Value = ScoredPool> {
            (
                prop::collection::vec(-100i32..=100, 1..60),
                prop::collection::vec(any::<prop::sample::Index>(), 0..40),
            )
                .prop_map(|(scores, kids)| {
                    let mut cs: Vec<_> = scores
                        .iter()
                        .enumerate()
                        .map(|(i, &s)| mined(&format!("m{i:03}"), s as f64 / 100.0))
                        .collect();
                    let n = cs.len();
                    for (k, ix) in kids.iter().enumerate() {
                        cs.push(augmented(&format!("a{k:03}"), &format!("m{:03}", ix.index(n))));
                    }
                    pool(cs)
                })
        }

        fn ids(p: &ScoredPool) -> HashSet<String> {
            p.candidates.iter().map(|c| c.id.clone()).collect()
        }

        fn arb_unit(dim: usize) -> impl Strategy<Value = EmbeddingVector> {
            prop::collection::vec(-1.0f32..1.0, dim)
                .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
                .prop_map(|v| unit(&v))
        }

        proptest! {
            #[test]
            fn survivors_are_nested(p in arb_pool()) {
                let s75 = ids(&percentile_filter(&p, Percentile::P75).unwrap());
                let s50 = ids(&percentile_filter(&p, Percentile::P50).unwrap());
                let s25 = ids(&percentile_filter(&p, Percentile::P25).unwrap());
                prop_assert!(s75.is_subset(&s50));
                prop_assert!(s50.is_subset(&s25));
            }

            #[test]
            fn cascade_leaves_no_dangling_parent(p in arb_pool(), pct in prop::sample::select(Percentile::ALL.to_vec())) {
                let out = percentile_filter(&p, pct).unwrap();
                prop_assert!(out.validate().is_ok());
                let kept: HashSet<&str> = out.mined().map(|c| c.id.as_str()).collect();
                // Every child of a surviving parent survives.
                for c in p.augmented() {
                    let parent = c.parent_candidate_id.as_deref().unwrap();
                    prop_assert_eq!(kept.contains(parent), out.candidates.iter().any(|o| o.id == c.id));
                }
            }

            #[test]
            fn score_is_keyword_order_invariant(
                (c, kws, perm) in (1usize..6).prop_flat_map(|n| (
                    arb_unit(8),
                    prop::collection::vec(arb_unit(8), n),
                    Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                ))
            ) {
                let a = class_score_from_embeddings(std::slice::from_ref(&c), std::slice::from_ref(&kws)).unwrap();
                let shuffled: Vec<_> = perm.iter().map(|&i| kws[i].clone()).collect();
                let b = class_score_from_embeddings(&[c], &[shuffled]).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn duplicate_keyword_matches_brute_force(
                (c, kws, dup) in (1usize..6).prop_flat_map(|n| (
                    arb_unit(8),
                    prop::collection::vec(arb_unit(8), n),
                    0..n,
                ))
            ) {
                let mut with_dup = kws.clone();
                with_dup.push(kws[dup].clone());
                let sims: Vec<f64> = with_dup
                    .iter()
                    .map(|k| {
                        let num: f64 = c.values().iter().zip(k.values()).map(|(x, y)| *x as f64 * *y as f64).sum();
                        let n = |v: &EmbeddingVector| v.values().iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                        (num / (n(&c) * n(k))).clamp(-1.0, 1.0)
                    })
                    .collect();
                let mean = sims.iter().sum::<f64>() / sims.len() as f64;
                let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let got = class_score_from_embeddings(&[c], &[with_dup]).unwrap();
                prop_assert!((got - (mean + max) / 2.0).abs() < 1e-9);
            }
        }
    }
}
