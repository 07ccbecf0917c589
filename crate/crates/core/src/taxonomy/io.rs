//! `taxonomy/v1` JSON: a nested tree plus a flat id index.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BuildLog, Taxonomy, TaxonomyNode, ROOT_ID};
use crate::error::{Error, Result};

pub const SCHEMA: &str = "taxonomy/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TreeNode {
    id: String,
    level: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    member_candidate_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<TreeNode>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    schema: String,
    #[serde(default = "default_root")]
    root_id: String,
    #[serde(default)]
    levels: Option<usize>,
    #[serde(default)]
    config_fingerprint: String,
    #[serde(default)]
    build_log: BuildLog,
    #[serde(default)]
    tree: Option<TreeNode>,
    #[serde(default)]
    nodes: Option<BTreeMap<String, TaxonomyNode>>,
}

fn default_root() -> String {
    ROOT_ID.to_string()
}

fn nest(t: &Taxonomy, id: &str) -> TreeNode {
    let n = &t.nodes[id];
    TreeNode {
        id: n.id.clone(),
        level: n.level,
        text: n.text.clone(),
        member_candidate_ids: n.member_candidate_ids.clone(),
        children: n.children.iter().map(|c| nest(t, c)).collect(),
    }
}

fn flatten(tree: &TreeNode, parent: Option<&str>, out: &mut BTreeMap<String, TaxonomyNode>) -> Result<()> {
    let node = TaxonomyNode {
        id: tree.id.clone(),
        level: tree.level,
        text: tree.text.clone(),
        children: tree.children.iter().map(|c| c.id.clone()).collect(),
        member_candidate_ids: tree.member_candidate_ids.clone(),
        parent: parent.map(String::from),
    };
    if out.insert(tree.id.clone(), node).is_some() {
        return Err(Error::Taxonomy {
            path: "tree".into(),
            message: format!("duplicate node id {}", tree.id),
        });
    }
    for c in &tree.children {
        flatten(c, Some(&tree.id), out)?;
    }
    Ok(())
}

pub fn taxonomy_to_json(t: &Taxonomy) -> Result<String> {
    let file = TaxonomyFile {
        schema: SCHEMA.to_string(),
        root_id: t.root_id.clone(),
        levels: Some(t.levels),
        config_fingerprint: t.config_fingerprint.clone(),
        build_log: t.build_log.clone(),
        tree: Some(nest(t, &t.root_id)),
        nodes: Some(t.nodes.clone()),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

/// Parses and validates. Either `tree` or `nodes` may be omitted; when both
/// are present they must agree.
pub fn taxonomy_from_json(text: &str) -> Result<Taxonomy> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: TaxonomyFile = serde_path_to_error::deserialize(de).map_err(|e| Error::Taxonomy {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if file.schema != SCHEMA {
        return Err(Error::Taxonomy {
            path: "schema".into(),
            message: format!("expected {SCHEMA}, found {}", file.schema),
        });
    }
    let nodes = match (&file.tree, file.nodes) {
        (None, None) => {
            return Err(Error::Taxonomy {
                path: ".".into(),
                message: "neither tree nor nodes present".into(),
            })
        }
        (Some(tree), None) => {
            let mut out = BTreeMap::new();
            flatten(tree, None, &mut out)?;
            out
        }
        (_, Some(nodes)) => nodes,
    };
    let levels = match file.levels {
        Some(l) => l,
        None => nodes.get(&file.root_id).map(|r| r.level).unwrap_or_default(),
    };
    let t = Taxonomy {
        nodes,
        root_id: file.root_id,
        levels,
        config_fingerprint: file.config_fingerprint,
        build_log: file.build_log,
    };
    t.validate()?;
    if let Some(tree) = file.tree {
        if tree != nest(&t, &t.root_id) {
            return Err(Error::Taxonomy {
                path: "tree".into(),
                message: "nested tree disagrees with the node index".into(),
            });
        }
    }
    Ok(t)
}

pub fn save_taxonomy(t: &Taxonomy, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, taxonomy_to_json(t)?).map_err(|e| Error::io(path, e))
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    taxonomy_from_json(&text)
}
