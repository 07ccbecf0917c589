//! Deterministic offline providers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::mining::{BoundaryMode, KeywordMatcher, KeywordSet};
use crate::text::{parse_py_str, tokens, STOPWORDS};

pub const MOCK_EMBEDDING_DIM: usize = 64;

/// Token-count embedding: each token owns a pseudo-random direction seeded
/// by its hash; a text embeds to the count-weighted sum of its tokens'
/// directions (normalization happens in the client).
#[derive(Debug, Clone, Default)]
pub struct MockEmbedder;

impl MockEmbedder {
    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in tokens(text) {
            *counts.entry(t).or_default() += 1;
        }
        let mut acc = vec![0.0f64; MOCK_EMBEDDING_DIM];
        if counts.is_empty() {
            // Token-free text (punctuation only) still gets a stable direction.
            add_direction(&mut acc, &format!("\u{0}{text}"), 1.0);
        }
        let mut sorted: Vec<_> = counts.into_iter().collect();
        sorted.sort();
        for (token, count) in sorted {
            add_direction(&mut acc, &token, count as f64);
        }
        acc.into_iter().map(|v| v as f32).collect()
    }
}

fn add_direction(acc: &mut [f64], token: &str, weight: f64) {
    let digest = Sha256::digest(token.as_bytes());
    let seed: [u8; 32] = digest.into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    for slot in acc.iter_mut() {
        let v: f64 = rng.random_range(-1.0..1.0);
        *slot += weight * v;
    }
}

/// Canned chat model. Recognizes the three prompt shapes the pipeline sends:
///
/// * statement summarization (labeling, aggregation): answers
///   `Output:::\nDescription: ` followed by the five most frequent
///   non-stopword tokens of the statement block;
/// * sentence classification: flags ids whose sentence contains one of
///   `keywords` (loose boundaries);
/// * taxonomy judging: returns hash-derived integer scores in 1..=5.
#[derive(Debug, Clone)]
pub struct MockChat {
    matcher: Option<KeywordMatcher>,
}

impl MockChat {
    pub fn new(keywords: &[String]) -> Self {
        let matcher = KeywordSet::from_raw(keywords, "mock")
            .ok()
            .and_then(|k| KeywordMatcher::new(&k, BoundaryMode::Loose).ok());
        MockChat { matcher }
    }

    pub fn complete(&self, prompt: &str) -> String {
        if prompt.contains("Taxonomy Evaluation Metrics") {
            return judge_reply(prompt);
        }
        if let Some(pos) = prompt.rfind("texts:") {
            return self.classify_reply(&prompt[pos + "texts:".len()..]);
        }
        format!("Output:::\nDescription: {}", summarize(statement_block(prompt)))
    }

    fn classify_reply(&self, block: &str) -> String {
        let block = block.split("Output:::").next().unwrap_or(block);
        let mut ids = Vec::new();
        for line in block.lines() {
            let line = line.trim_start_matches(|c: char| c == '{' || c.is_whitespace());
            let Some((id, rest)) = line.split_once(':') else { continue };
            let Ok(id) = id.trim().parse::<u64>() else { continue };
            let Some(text) = parse_py_str(rest.trim_start()) else { continue };
            let hit = self
                .matcher
                .as_ref()
                .is_some_and(|m| !m.match_text(&text).is_empty());
            if hit {
                ids.push(id.to_string());
            }
        }
        format!("Output:::\nClassification: [{}]", ids.join(", "))
    }
}

fn statement_block(prompt: &str) -> &str {
    let start = prompt
        .rfind("statements:")
        .map(|p| p + "statements:".len())
        .unwrap_or(0);
    let rest = &prompt[start..];
    rest.split("Output:::").next().unwrap_or(rest)
}

/// The five most frequent non-stopword tokens, ties broken by first
/// appearance.
fn summarize(block: &str) -> String {
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for (pos, t) in tokens(block).into_iter().enumerate() {
        if STOPWORDS.contains(&t.as_str()) || t.len() < 2 {
            continue;
        }
        counts.entry(t).or_insert((0, pos)).0 += 1;
    }
    let mut ranked: Vec<_> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    let words: Vec<_> = ranked.into_iter().take(5).map(|(t, _)| t).collect();
    if words.is_empty() {
        "general skills".to_string()
    } else {
        words.join(" ")
    }
}

const JUDGE_CRITERIA: &[(&str, &[&str])] = &[
    ("Clarity", &["Precision", "Unambiguity", "Consistency", "Accessibility"]),
    (
        "Hierarchical Coherence",
        &["Gradational Specificity", "Parent-Child Coherence", "Consistency"],
    ),
    ("Orthogonality", &["Distinctiveness", "Non-overlap"]),
    ("Completeness", &["Domain Coverage", "Depth", "Balance"]),
];

fn judge_reply(prompt: &str) -> String {
    let mut out = serde_json::Map::new();
    for (category, criteria) in JUDGE_CRITERIA {
        let mut inner = serde_json::Map::new();
        for criterion in *criteria {
            let mut h = Sha256::new();
            h.update(prompt.as_bytes());
            h.update(category.as_bytes());
            h.update(criterion.as_bytes());
            let score = 1 + h.finalize()[0] % 5;
            inner.insert(criterion.to_string(), score.into());
        }
        out.insert(category.to_string(), inner.into());
    }
    format!("```json\n{}\n```", serde_json::Value::Object(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_deterministic() {
        let m = MockEmbedder;
        assert_eq!(m.embed("abc"), m.embed("abc"));
        assert_eq!(m.embed("abc").len(), MOCK_EMBEDDING_DIM);
        assert_ne!(m.embed("abc"), m.embed("abd"));
    }

    #[test]
    fn embedding_ignores_case_and_punctuation() {
        let m = MockEmbedder;
        assert_eq!(m.embed("Build models."), m.embed("build MODELS"));
    }

    #[test]
    fn punctuation_only_text_gets_a_vector() {
        let v = MockEmbedder.embed("...");
        assert!(v.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn summarizes_statement_block() {
        let prompt = "Here are examples.\nstatements: ['ignored ignored']\n\nOutput:::\nDescription: x\n\n\
                      Now here are the actual statements.\n\nstatements: ['basic computer skills', \
                      'basic computer software skills', 'computer skills']\n\nOutput:::\nDescription:";
        let reply = MockChat::new(&[]).complete(prompt);
        assert_eq!(reply, "Output:::\nDescription: computer skills basic software");
    }

    #[test]
    fn classifies_by_keywords() {
        let chat = MockChat::new(&["machine learning".to_string(), "nlp".to_string()]);
        let prompt = "texts: {1: 'We use machine learning.',\n 2: 'Drive a forklift.',\n 3: \"NLP isn't easy\"}\n\nOutput:::\nClassification:";
        assert_eq!(chat.complete(prompt), "Output:::\nClassification: [1, 3]");
    }

    #[test]
    fn judge_reply_is_json_in_range() {
        let reply = judge_reply("Taxonomy Evaluation Metrics {}");
        let body = reply.trim_start_matches("```json\n").trim_end_matches("\n```");
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        for (cat, crits) in JUDGE_CRITERIA {
            for c in *crits {
                let s = v[cat][c].as_u64().unwrap();
                assert!((1..=5).contains(&s));
            }
        }
    }
}
