//! Iterative level-by-level taxonomy construction.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::clustering::{
    cluster_density, reduce_dimensions, soft_assign, ClusterAssignment, Membership, PointSet,
};
use crate::error::{Error, Result};
use crate::experiments::RunConfig;
use crate::labeling::{
    consolidate_labels, label_clusters, representatives, ClusterLabel, PromptTemplates,
    MAX_PROMPT_MEMBERS,
};
use crate::providers::{ChatClient, EmbeddingClient};
use crate::selection::ScoredPool;

pub use io::{load_taxonomy, save_taxonomy, taxonomy_from_json, taxonomy_to_json, SCHEMA};

pub const ROOT_ID: &str = "root";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: String,
    /// 0 for leaves; the root sits one above the top built level.
    pub level: usize,
    pub text: String,
    pub children: Vec<String>,
    /// Candidate ids; leaves only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub member_candidate_ids: Vec<String>,
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Hand-written or externally produced taxonomy.
    #[default]
    Unrecorded,
    /// The last level produced fewer labels than `min_labels`.
    MinLabels,
    MaxLevels,
    /// The next level found no clusters.
    LevelFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub inputs: usize,
    pub clusters: usize,
    /// Noise points before any soft assignment.
    pub noise: usize,
    pub soft_assigned: usize,
    pub labels_out: usize,
    /// Inputs left without a parent at this level and pruned from the tree.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orphans: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BuildLog {
    pub levels: Vec<LevelStats>,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    pub nodes: BTreeMap<String, TaxonomyNode>,
    pub root_id: String,
    /// Built levels, not counting the root.
    pub levels: usize,
    pub config_fingerprint: String,
    pub build_log: BuildLog,
}

impl Taxonomy {
    pub fn root(&self) -> &TaxonomyNode {
        &self.nodes[&self.root_id]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values().filter(|n| n.level == 0)
    }

    pub fn level_nodes(&self, level: usize) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values().filter(move |n| n.level == level && n.id != self.root_id)
    }

    /// Checks links, levels, reachability and leaf membership.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Taxonomy { path: "nodes".into(), message: m });
        let Some(root) = self.nodes.get(&self.root_id) else {
            return bad(format!("root {} missing", self.root_id));
        };
        if root.parent.is_some() {
            return bad("root has a parent".into());
        }
        if root.level != self.levels {
            return bad(format!("root level {} but {} levels built", root.level, self.levels));
        }
        for (key, n) in &self.nodes {
            if key != &n.id {
                return bad(format!("index key {key} holds node {}", n.id));
            }
            if n.id != self.root_id {
                let Some(p) = n.parent.as_ref().and_then(|p| self.nodes.get(p)) else {
                    return bad(format!("node {} has a missing parent", n.id));
                };
                if !p.children.contains(&n.id) {
                    return bad(format!("parent {} does not list child {}", p.id, n.id));
                }
            }
            for c in &n.children {
                let Some(child) = self.nodes.get(c) else {
                    return bad(format!("node {} lists missing child {c}", n.id));
                };
                if child.parent.as_deref() != Some(n.id.as_str()) {
                    return bad(format!("child {c} does not point back to {}", n.id));
                }
                if child.level + 1 != n.level {
                    return bad(format!("level jump between {} and {c}", n.id));
                }
            }
            if n.level == 0 && n.member_candidate_ids.is_empty() {
                return bad(format!("leaf {} has no members", n.id));
            }
        }
        // Reachability; the level rule already rules out cycles among linked
        // nodes, this catches detached ones.
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root_id.as_str()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return bad(format!("node {id} reached twice"));
            }
            stack.extend(self.nodes[id].children.iter().map(String::as_str));
        }
        if seen.len() != self.nodes.len() {
            return bad(format!("{} node(s) unreachable from root", self.nodes.len() - seen.len()));
        }
        let mut members = BTreeSet::new();
        for leaf in self.leaves() {
            for m in &leaf.member_candidate_ids {
                if !members.insert(m) {
                    return bad(format!("candidate {m} appears under more than one leaf"));
                }
            }
        }
        Ok(())
    }

    /// Nested `{label, children}` view fed to the judge prompt.
    pub fn judge_view(&self) -> serde_json::Value {
        fn walk(t: &Taxonomy, id: &str) -> serde_json::Value {
            let n = &t.nodes[id];
            let mut obj = serde_json::Map::new();
            obj.insert("label".into(), n.text.clone().into());
            if !n.children.is_empty() {
                let kids: Vec<_> = n.children.iter().map(|c| walk(t, c)).collect();
                obj.insert("children".into(), kids.into());
            }
            obj.into()
        }
        walk(self, &self.root_id)
    }
}

/// Stage clients used while building levels.
pub struct BuildContext<'a> {
    pub cfg: &'a RunConfig,
    pub embed: &'a EmbeddingClient,
    pub chat: &'a ChatClient,
    pub templates: &'a PromptTemplates,
}

/// Output of one level: labels plus the clustering that produced them.
#[derive(Debug, Clone)]
pub struct LevelOutput {
    pub labels: Vec<ClusterLabel>,
    pub points: PointSet,
    pub assignment: ClusterAssignment,
    /// Cluster assignment before soft reassignment.
    pub core_assignment: ClusterAssignment,
    /// Input ids left in noise.
    pub noise_ids: Vec<String>,
}

/// Embed, reduce, cluster, optionally soft-assign, label and consolidate.
pub fn build_level(inputs: &[(String, String)], level: usize, ctx: &BuildContext<'_>) -> Result<LevelOutput> {
    let t = &ctx.cfg.thresholds;
    if inputs.len() < 2 {
        return Err(Error::NoClusters { level, inputs: inputs.len() });
    }
    let texts: Vec<String> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let vecs = ctx.embed.embed_texts(&texts)?;
    let rows: Vec<Vec<f64>> = vecs
        .iter()
        .map(|v| v.values().iter().map(|&x| x as f64).collect())
        .collect();
    let ids: Vec<String> = inputs.iter().map(|(id, _)| id.clone()).collect();
    let raw = PointSet::new(ids, &rows)?;
    let points = reduce_dimensions(&raw, t.target_dim)?;
    let core_assignment = cluster_density(&points, t.min_cluster_size)?;
    if core_assignment.n_clusters() == 0 {
        return Err(Error::NoClusters { level, inputs: inputs.len() });
    }
    let assignment = if ctx.cfg.soft_clustering {
        soft_assign(&points, &core_assignment)
    } else {
        core_assignment.clone()
    };

    let members = assignment.members();
    let groups: Vec<Vec<String>> = members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            representatives(&points, m, &assignment.centroids[c], MAX_PROMPT_MEMBERS)
                .into_iter()
                .map(|i| texts[i].clone())
                .collect()
        })
        .collect();
    let texts_out = label_clusters(&groups, ctx.chat, ctx.templates)?;
    let labels: Vec<ClusterLabel> = texts_out
        .into_iter()
        .zip(&members)
        .enumerate()
        .map(|(c, (text, m))| ClusterLabel {
            id: format!("c{c}"),
            cluster_id: c as i32,
            text,
            member_ids: m.iter().map(|&i| points.ids[i].clone()).collect(),
            consolidated_from: Vec::new(),
        })
        .collect();
    let labels = consolidate_labels(labels, t.consolidation, ctx.embed, ctx.chat, ctx.templates)?;
    let noise_ids = assignment
        .membership
        .iter()
        .enumerate()
        .filter(|(_, m)| **m == Membership::Noise)
        .map(|(i, _)| points.ids[i].clone())
        .collect();
    Ok(LevelOutput {
        labels,
        points,
        assignment,
        core_assignment,
        noise_ids,
    })
}

/// A taxonomy together with each level's clustering, for silhouette.
#[derive(Debug, Clone)]
pub struct TaxonomyBuild {
    pub taxonomy: Taxonomy,
    pub level_points: Vec<(PointSet, ClusterAssignment)>,
}

pub fn node_id(level: usize, index: usize) -> String {
    format!("L{level}-{index}")
}

/// Builds levels until fewer than `min_labels` labels come out, `max_levels`
/// is reached, or a level finds no clusters; then attaches the root.
pub fn build_taxonomy(pool: &ScoredPool, ctx: &BuildContext<'_>) -> Result<TaxonomyBuild> {
    let cfg = ctx.cfg;
    cfg.validate()?;
    if pool.candidates.is_empty() {
        return Err(Error::InvalidInput("cannot build a taxonomy from an empty pool".into()));
    }
    let t = &cfg.thresholds;
    let mut nodes: BTreeMap<String, TaxonomyNode> = BTreeMap::new();
    let mut stats = Vec::new();
    let mut level_points = Vec::new();
    let mut inputs: Vec<(String, String)> = pool
        .candidates
        .iter()
        .map(|c| (c.id.clone(), c.text().to_string()))
        .collect();
    let mut level = 0;
    let stop_reason = loop {
        let out = match build_level(&inputs, level, ctx) {
            Ok(out) => out,
            Err(Error::NoClusters { .. }) if level > 0 => break StopReason::LevelFailure,
            Err(e) => return Err(e),
        };
        let ids: Vec<String> = (0..out.labels.len()).map(|i| node_id(level, i)).collect();
        for (id, label) in ids.iter().zip(&out.labels) {
            let mut node = TaxonomyNode {
                id: id.clone(),
                level,
                text: label.text.clone(),
                children: Vec::new(),
                member_candidate_ids: Vec::new(),
                parent: None,
            };
            if level == 0 {
                node.member_candidate_ids = label.member_ids.clone();
            } else {
                node.children = label.member_ids.clone();
                for child in &label.member_ids {
                    nodes.get_mut(child).expect("input node exists").parent = Some(id.clone());
                }
            }
            nodes.insert(id.clone(), node);
        }
        stats.push(LevelStats {
            level,
            inputs: inputs.len(),
            clusters: out.core_assignment.n_clusters(),
            noise: out.core_assignment.noise_count(),
            soft_assigned: out.core_assignment.noise_count() - out.assignment.noise_count(),
            labels_out: out.labels.len(),
            orphans: if level > 0 { out.noise_ids.clone() } else { Vec::new() },
        });
        level_points.push((out.points, out.assignment));
        level += 1;
        if out.labels.len() < t.min_labels {
            break StopReason::MinLabels;
        }
        if level == t.max_levels {
            break StopReason::MaxLevels;
        }
        inputs = ids.into_iter().zip(out.labels.into_iter().map(|l| l.text)).collect();
    };

    let levels = level;
    let top: Vec<String> = nodes
        .values()
        .filter(|n| n.level == levels - 1)
        .map(|n| n.id.clone())
        .collect();
    for id in &top {
        nodes.get_mut(id).unwrap().parent = Some(ROOT_ID.to_string());
    }
    nodes.insert(
        ROOT_ID.to_string(),
        TaxonomyNode {
            id: ROOT_ID.to_string(),
            level: levels,
            text: cfg.domain.clone(),
            children: top,
            member_candidate_ids: Vec::new(),
            parent: None,
        },
    );
    prune_orphans(&mut nodes);

    for pair in stats.windows(2) {
        if pair[1].labels_out > pair[0].labels_out {
            return Err(Error::InvalidInput(format!(
                "label count grew from level {} to {}",
                pair[0].level, pair[1].level
            )));
        }
        if pair[1].labels_out == pair[0].labels_out {
            tracing::warn!(level = pair[1].level, "label count did not decrease");
        }
    }
    let mut notes = vec![
        "stage order: mine, score, augment, filter".to_string(),
        "reducer: principal components".to_string(),
    ];
    if cfg.soft_clustering {
        notes.push("noise reassigned to nearest centroid".into());
    }
    let taxonomy = Taxonomy {
        nodes,
        root_id: ROOT_ID.to_string(),
        levels,
        config_fingerprint: cfg.fingerprint(),
        build_log: BuildLog {
            levels: stats,
            stop_reason,
            notes,
        },
    };
    taxonomy.validate()?;
    Ok(TaxonomyBuild { taxonomy, level_points })
}

/// Removes non-root nodes without a parent, with their subtrees.
fn prune_orphans(nodes: &mut BTreeMap<String, TaxonomyNode>) {
    let orphans: Vec<String> = nodes
        .values()
        .filter(|n| n.parent.is_none() && n.id != ROOT_ID)
        .map(|n| n.id.clone())
        .collect();
    let mut stack = orphans;
    let mut removed: HashMap<String, usize> = HashMap::new();
    while let Some(id) = stack.pop() {
        if let Some(n) = nodes.remove(&id) {
            stack.extend(n.children);
            *removed.entry(format!("L{}", n.level)).or_default() += 1;
        }
    }
    if !removed.is_empty() {
        tracing::info!(?removed, "pruned unparented nodes");
    }
}
