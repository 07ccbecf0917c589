//! Cluster labeling through a chat model and consolidation of near-duplicate
//! labels.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{sq_dist, PointSet};
use crate::error::{Error, Result};
use crate::providers::{dot, ChatClient, EmbeddingClient};
use crate::text::{py_repr_list, py_repr_str};

/// Statements sent per cluster when labeling.
pub const MAX_PROMPT_MEMBERS: usize = 30;

const LEAF: &str = include_str!("../prompts/leaf.txt");
const AGGREGATION: &str = include_str!("../prompts/aggregation.txt");
const JUDGE: &str = include_str!("../prompts/judge.txt");
const TEST_LABELING: &str = include_str!("../prompts/test_labeling.txt");

/// Prompt templates. Placeholders are substituted verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub leaf: String,
    pub aggregation: String,
    pub judge: String,
    pub test_labeling: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            leaf: LEAF.into(),
            aggregation: AGGREGATION.into(),
            judge: JUDGE.into(),
            test_labeling: TEST_LABELING.into(),
        }
    }
}

impl PromptTemplates {
    /// Built-in templates, overridden by any of `leaf.txt`, `aggregation.txt`,
    /// `judge.txt`, `test_labeling.txt` present in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut t = Self::default();
        for (name, slot) in [
            ("leaf.txt", &mut t.leaf),
            ("aggregation.txt", &mut t.aggregation),
            ("judge.txt", &mut t.judge),
            ("test_labeling.txt", &mut t.test_labeling),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(t)
    }

    pub fn render_leaf<S: AsRef<str>>(&self, statements: &[S]) -> String {
        fill(&self.leaf, "{CANDIDATES}", &py_repr_list(statements))
    }

    pub fn render_aggregation<S: AsRef<str>>(&self, labels: &[S]) -> String {
        fill(&self.aggregation, "{LABELS}", &py_repr_list(labels))
    }

    pub fn render_judge(&self, taxonomy_json: &str) -> String {
        fill(&self.judge, "{TAXONOMY JSON STRING}", taxonomy_json)
    }

    /// `texts` are numbered from 1 in the rendered dictionary.
    pub fn render_test_labeling<S: AsRef<str>>(&self, texts: &[S]) -> String {
        let body: Vec<String> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}: {}", i + 1, py_repr_str(t.as_ref())))
            .collect();
        let dict = format!("{{{}}}", body.join(",\n "));
        fill(&self.test_labeling, "{DICTIONARY OF MAPPED JOB POSTING SENTENCES}", &dict)
    }
}

fn fill(template: &str, placeholder: &str, value: &str) -> String {
    template.trim_end().replacen(placeholder, value, 1)
}

/// Strips list markers and wrapping quotes; collapses whitespace.
pub fn sanitize_label(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let before = s;
        s = s.trim_start_matches(['-', '*', '•', '+', '>', '#']).trim_start();
        let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 && s[digits..].starts_with(['.', ')']) {
            s = s[digits + 1..].trim_start();
        }
        for q in ['"', '\'', '`', '“', '”'] {
            s = s.strip_prefix(q).unwrap_or(s);
            s = s.strip_suffix(q).unwrap_or(s);
        }
        s = s.trim();
        if s == before {
            break;
        }
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text after the final `Description:` marker, first non-empty line,
/// sanitized. `None` when the marker is absent.
pub fn extract_description(completion: &str) -> Option<String> {
    let pos = completion.rfind("Description:")?;
    let rest = &completion[pos + "Description:".len()..];
    let line = rest.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    Some(sanitize_label(line))
}

fn ask_description(prompt: &str, chat: &ChatClient) -> Result<String> {
    for attempt in 0..2 {
        let reply = chat.chat_complete(prompt)?;
        match extract_description(&reply) {
            Some(text) if !text.is_empty() => return Ok(text),
            Some(_) => {
                return Err(Error::Parse(format!("empty description in completion: {reply:?}")))
            }
            None if attempt == 0 => tracing::warn!("no Description marker; asking again"),
            None => {
                return Err(Error::Parse(format!("no Description marker in completion: {reply:?}")))
            }
        }
    }
    unreachable!()
}

/// One-sentence label for a group of statements.
pub fn label_cluster<S: AsRef<str>>(
    member_texts: &[S],
    chat: &ChatClient,
    templates: &PromptTemplates,
) -> Result<String> {
    if member_texts.is_empty() {
        return Err(Error::InvalidInput("cannot label an empty cluster".into()));
    }
    ask_description(&templates.render_leaf(member_texts), chat)
}

/// Labels many groups concurrently, bounded by the chat client's
/// `max_in_flight`. Output order follows input order.
pub fn label_clusters(
    groups: &[Vec<String>],
    chat: &ChatClient,
    templates: &PromptTemplates,
) -> Result<Vec<String>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(chat.config().max_in_flight)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        groups
            .par_iter()
            .map(|g| label_cluster(g, chat, templates))
            .collect()
    })
}

/// Up to `limit` member indices nearest to `centroid`, in member order.
/// Ties in distance go to the earlier member.
pub fn representatives(points: &PointSet, members: &[usize], centroid: &[f64], limit: usize) -> Vec<usize> {
    if members.len() <= limit {
        return members.to_vec();
    }
    let mut ranked: Vec<(usize, f64)> = members
        .iter()
        .enumerate()
        .map(|(pos, &i)| (pos, sq_dist(points.row(i), centroid)))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = ranked[..limit].iter().map(|r| r.0).collect();
    keep.sort_unstable();
    keep.into_iter().map(|pos| members[pos]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub id: String,
    pub cluster_id: i32,
    pub text: String,
    pub member_ids: Vec<String>,
    /// Ids of the directly generated labels merged into this one.
    #[serde(default)]
    pub consolidated_from: Vec<String>,
}

impl ClusterLabel {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() || self.text.contains('\n') {
            return Err(Error::InvalidInput(format!("label {} must be one non-empty line", self.id)));
        }
        if self.member_ids.is_empty() {
            return Err(Error::InvalidInput(format!("label {} has no members", self.id)));
        }
        Ok(())
    }

    fn origins(&self) -> Vec<String> {
        if self.consolidated_from.is_empty() {
            vec![self.id.clone()]
        } else {
            self.consolidated_from.clone()
        }
    }
}

/// Connected components of the graph with an edge wherever cosine similarity
/// exceeds `threshold`. Components are ordered by their smallest index and
/// list members ascending.
pub fn similarity_components(vectors: &[&[f32]], threshold: f64) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if dot(vectors[i], vectors[j]) > threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn merge_pass(
    labels: Vec<ClusterLabel>,
    threshold: f64,
    embed: &EmbeddingClient,
    chat: &ChatClient,
    templates: &PromptTemplates,
) -> Result<(Vec<ClusterLabel>, bool)> {
    let texts: Vec<String> = labels.iter().map(|l| l.text.clone()).collect();
    let vecs = embed.embed_texts(&texts)?;
    let views: Vec<&[f32]> = vecs.iter().map(|v| v.values()).collect();
    let components = similarity_components(&views, threshold);
    if components.len() == labels.len() {
        return Ok((labels, false));
    }
    let mut out = Vec::with_capacity(components.len());
    for comp in components {
        if comp.len() == 1 {
            out.push(labels[comp[0]].clone());
            continue;
        }
        let texts: Vec<&str> = comp.iter().map(|&i| labels[i].text.as_str()).collect();
        let text = ask_description(&templates.render_aggregation(&texts), chat)?;
        let mut members = Vec::new();
        let mut seen = BTreeSet::new();
        let mut origins = Vec::new();
        for &i in &comp {
            for m in &labels[i].member_ids {
                if seen.insert(m.clone()) {
                    members.push(m.clone());
                }
            }
            origins.extend(labels[i].origins());
        }
        out.push(ClusterLabel {
            id: format!("merged:{}", origins[0]),
            cluster_id: comp.iter().map(|&i| labels[i].cluster_id).min().unwrap_or_default(),
            text,
            member_ids: members,
            consolidated_from: origins,
        });
    }
    Ok((out, true))
}

/// Replaces every set of mutually similar labels with one aggregated label.
/// After the first merge the new texts are checked once more; a second merge
/// is applied if needed and the process stops.
pub fn consolidate_labels(
    labels: Vec<ClusterLabel>,
    threshold: f64,
    embed: &EmbeddingClient,
    chat: &ChatClient,
    templates: &PromptTemplates,
) -> Result<Vec<ClusterLabel>> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("no labels to consolidate".into()));
    }
    let (first, merged) = merge_pass(labels, threshold, embed, chat, templates)?;
    if !merged {
        return Ok(first);
    }
    let (second, again) = merge_pass(first, threshold, embed, chat, templates)?;
    if again {
        tracing::info!("consolidation re-check merged further labels");
    }
    Ok(second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{
        cosine_similarity, Backend, ProviderConfig, ProviderKind, Transport, TransportError,
    };
    use serde_json::{json, Value};
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    /// Replies with queued completions in order, recording prompts.
    struct Replies {
        queue: Mutex<Vec<String>>,
        prompts: Mutex<Vec<String>>,
    }

    impl Transport for Replies {
        fn post_json(&self, _: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<Value, TransportError> {
            self.prompts
                .lock()
                .unwrap()
                .push(body["messages"][0]["content"].as_str().unwrap().to_string());
            let reply = self.queue.lock().unwrap().remove(0);
            Ok(json!({"choices": [{"message": {"content": reply}}]}))
        }
    }

    fn scripted(replies: &[&str]) -> (ChatClient, Arc<Replies>) {
        let t = Arc::new(Replies {
            queue: Mutex::new(replies.iter().map(|s| s.to_string()).collect()),
            prompts: Mutex::new(Vec::new()),
        });
        let config = ProviderConfig {
            kind: ProviderKind::Chat,
            backend: Backend::OpenAi,
            endpoint: "http://localhost:1/v1".into(),
            ..ProviderConfig::mock_chat("scripted")
        };
        (ChatClient::with_transport(config, t.clone()).unwrap(), t)
    }

    fn mock_chat() -> ChatClient {
        ChatClient::new(ProviderConfig::mock_chat("mock")).unwrap()
    }

    fn mock_embed() -> EmbeddingClient {
        EmbeddingClient::new(ProviderConfig::mock_embedding("mock")).unwrap()
    }

    fn label(id: &str, text: &str, members: &[&str]) -> ClusterLabel {
        ClusterLabel {
            id: id.into(),
            cluster_id: id.len() as i32,
            text: text.into(),
            member_ids: members.iter().map(|s| s.to_string()).collect(),
            consolidated_from: Vec::new(),
        }
    }

    #[test]
    fn extracts_after_final_marker() {
        assert_eq!(
            extract_description("Output:::\nDescription: Develop ML pipelines.").as_deref(),
            Some("Develop ML pipelines.")
        );
        assert_eq!(
            extract_description("Description: a\nOutput:::\nDescription:\n  - \"Build models.\"\nmore").as_deref(),
            Some("Build models.")
        );
        assert_eq!(extract_description("no marker here"), None);
    }

    #[test]
    fn in_context_example_answer_parses() {
        let t = PromptTemplates::default();
        let marker = "Output:::\nDescription: Develop or apply data mining and machine learning algorithms.";
        assert!(t.leaf.contains(marker));
        assert_eq!(
            extract_description(marker).as_deref(),
            Some("Develop or apply data mining and machine learning algorithms.")
        );
    }

    #[test]
    fn sanitation_strips_markers_and_quotes() {
        assert_eq!(sanitize_label("  1. 'Use   SQL'  "), "Use SQL");
        assert_eq!(sanitize_label("• - \"Deploy models\""), "Deploy models");
        assert_eq!(sanitize_label("Plain text."), "Plain text.");
    }

    #[test]
    fn templates_render_placeholders() {
        let t = PromptTemplates::default();
        let leaf = t.render_leaf(&["a", "it's"]);
        assert!(leaf.contains("statements: ['a',\n  \"it's\"]\n\nOutput:::\nDescription:"));
        assert!(!leaf.contains("{CANDIDATES}"));
        let agg = t.render_aggregation(&["x"]);
        assert!(agg.contains("statements: ['x']"));
        let judge = t.render_judge("{\"root\": 1}");
        assert!(judge.contains("Below is the taxonomy:\n            {\"root\": 1}"));
        let test = t.render_test_labeling(&["first", "second"]);
        assert!(test.contains("texts: {1: 'first',\n 2: 'second'}"));
    }

    #[test]
    fn templates_load_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("leaf.txt"), "S={CANDIDATES}").unwrap();
        let t = PromptTemplates::load_dir(dir.path()).unwrap();
        assert_eq!(t.render_leaf(&["q"]), "S=['q']");
        assert_eq!(t.judge, PromptTemplates::default().judge);
    }

    #[test]
    fn missing_marker_is_asked_twice_then_fails() {
        let (chat, t) = scripted(&["nope", "still nope"]);
        assert!(matches!(label_cluster(&["a"], &chat, &PromptTemplates::default()), Err(Error::Parse(_))));
        assert_eq!(t.prompts.lock().unwrap().len(), 2);
    }

    #[test]
    fn reask_recovers() {
        let (chat, _) = scripted(&["garbled", "Output:::\nDescription: Fine."]);
        assert_eq!(label_cluster(&["a"], &chat, &PromptTemplates::default()).unwrap(), "Fine.");
    }

    #[test]
    fn empty_description_is_an_error() {
        let (chat, _) = scripted(&["Output:::\nDescription:   "]);
        assert!(label_cluster(&["a"], &chat, &PromptTemplates::default()).is_err());
    }

    #[test]
    fn mock_labels_are_frequent_tokens() {
        let members = [
            "• basic computer skills.",
            "basic computer software skills.",
            "be able to perform basic computer skills.",
        ];
        let t = PromptTemplates::default();
        let a = label_cluster(&members, &mock_chat(), &t).unwrap();
        let b = label_cluster(&members, &mock_chat(), &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, "basic computer skills software able");
    }

    #[test]
    fn concurrent_labeling_keeps_order() {
        let groups: Vec<Vec<String>> = (0..12).map(|i| vec![format!("topic{i} topic{i} work")]).collect();
        let out = label_clusters(&groups, &mock_chat(), &PromptTemplates::default()).unwrap();
        for (i, l) in out.iter().enumerate() {
            assert!(l.starts_with(&format!("topic{i}")));
        }
    }

    #[test]
    fn representatives_are_nearest_centroid() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let ids = (0..40).map(|i| i.to_string()).collect();
        let ps = PointSet::new(ids, &rows).unwrap();
        let members: Vec<usize> = (0..40).collect();
        let reps = representatives(&ps, &members, &[0.0], 30);
        assert_eq!(reps, (0..30).collect::<Vec<_>>());
        assert_eq!(representatives(&ps, &members[..5], &[0.0], 30), members[..5]);
    }

    #[test]
    fn components_are_transitive() {
        let a = [1.0f32, 0.0];
        let b = [0.98f32, 0.198_997_5];
        let c = [0.9f32, 0.435_889_9];
        // a~b 0.98, b~c ~0.969, a~c 0.90
        let comps = similarity_components(&[&a, &b, &c], 0.95);
        assert_eq!(comps, vec![vec![0, 1, 2]]);
        let comps = similarity_components(&[&a, &c], 0.95);
        assert_eq!(comps, vec![vec![0], vec![1]]);
    }

    #[test]
    fn dissimilar_labels_pass_through() {
        let labels = vec![
            label("a", "deploy neural networks", &["1"]),
            label("b", "forklift warehouse safety", &["2"]),
        ];
        let out = consolidate_labels(labels.clone(), 0.95, &mock_embed(), &mock_chat(), &PromptTemplates::default())
            .unwrap();
        assert_eq!(out, labels);
    }

    #[test]
    fn near_duplicates_merge_and_keep_members() {
        let a = "build train tune and deploy deep learning models for computer vision speech text ranking on large gpu clusters with python";
        let b = "build train tune and deploy deep learning models for computer vision speech text ranking on large gpu clusters with python daily";
        let c = "operate forklifts safely in the warehouse";
        let embed = mock_embed();
        let sim = cosine_similarity(&embed.embed_one(a).unwrap(), &embed.embed_one(b).unwrap()).unwrap();
        assert!(sim > 0.95, "constructed similarity {sim}");
        let labels = vec![label("A", a, &["1", "2"]), label("B", b, &["2", "3"]), label("C", c, &["4"])];
        let out = consolidate_labels(labels, 0.95, &embed, &mock_chat(), &PromptTemplates::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].member_ids, ["1", "2", "3"]);
        assert_eq!(out[0].consolidated_from, ["A", "B"]);
        assert_eq!(out[1].id, "C");
        out.iter().for_each(|l| l.validate().unwrap());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(consolidate_labels(Vec::new(), 0.95, &mock_embed(), &mock_chat(), &PromptTemplates::default())
            .is_err());
    }
}
