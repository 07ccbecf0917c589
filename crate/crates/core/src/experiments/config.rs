use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::providers::{ChatClient, EmbeddingClient, ProviderConfig};
use crate::selection::Percentile;

/// Fixed numeric settings of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub augmentation: f64,
    pub consolidation: f64,
    pub min_cluster_size: usize,
    pub min_labels: usize,
    pub max_levels: usize,
    pub target_dim: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            augmentation: 0.9,
            consolidation: 0.95,
            min_cluster_size: 5,
            min_labels: 10,
            max_levels: 5,
            target_dim: 10,
        }
    }
}

/// Which model serves which stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRoster {
    /// Ensemble averaged for class scoring.
    pub scoring: Vec<ProviderConfig>,
    pub augmentation: ProviderConfig,
    /// Embeds clustering inputs and labels for consolidation.
    pub clustering: ProviderConfig,
    pub labeling: ProviderConfig,
    pub judge: ProviderConfig,
    /// Exactly two chat models that label the test set.
    pub test_labelers: Vec<ProviderConfig>,
    /// Ensemble averaged for coverage matching.
    pub coverage: Vec<ProviderConfig>,
}

impl ProviderRoster {
    /// Offline roster; the test labelers flag sentences containing `keywords`.
    pub fn mock(keywords: &[String]) -> Self {
        let embed = ProviderConfig::mock_embedding("mock-embed");
        let labeler = |id: &str| ProviderConfig {
            mock_keywords: keywords.to_vec(),
            ..ProviderConfig::mock_chat(id)
        };
        ProviderRoster {
            scoring: vec![embed.clone()],
            augmentation: embed.clone(),
            clustering: embed.clone(),
            labeling: ProviderConfig::mock_chat("mock-chat"),
            judge: ProviderConfig::mock_chat("mock-judge"),
            test_labelers: vec![labeler("mock-labeler-a"), labeler("mock-labeler-b")],
            coverage: vec![embed],
        }
    }

    pub fn validate(&self) -> Result<()> {
        use crate::providers::ProviderKind::{Chat, Embedding};
        let check = |p: &ProviderConfig, kind, role: &str| {
            p.validate()?;
            if p.kind != kind {
                return Err(Error::Config(format!("{role} provider {} has the wrong kind", p.model_id)));
            }
            Ok(())
        };
        if self.scoring.is_empty() || self.coverage.is_empty() {
            return Err(Error::Config("scoring and coverage need at least one embedding provider".into()));
        }
        for p in self.scoring.iter().chain(&self.coverage) {
            check(p, Embedding, "ensemble")?;
        }
        check(&self.augmentation, Embedding, "augmentation")?;
        check(&self.clustering, Embedding, "clustering")?;
        check(&self.labeling, Chat, "labeling")?;
        check(&self.judge, Chat, "judge")?;
        if self.test_labelers.len() != 2 {
            return Err(Error::Config("exactly two test labelers are required".into()));
        }
        if self.test_labelers[0].model_id == self.test_labelers[1].model_id {
            return Err(Error::Config("test labelers must be distinct models".into()));
        }
        for p in &self.test_labelers {
            check(p, Chat, "test labeler")?;
        }
        Ok(())
    }

    pub fn connect(&self, cache_dir: Option<&Path>) -> Result<Clients> {
        self.validate()?;
        let embed = |p: &ProviderConfig| -> Result<EmbeddingClient> {
            let c = EmbeddingClient::new(p.clone())?;
            match cache_dir {
                Some(dir) => c.with_cache_dir(dir),
                None => Ok(c),
            }
        };
        Ok(Clients {
            scoring: self.scoring.iter().map(embed).collect::<Result<_>>()?,
            augmentation: embed(&self.augmentation)?,
            clustering: embed(&self.clustering)?,
            labeling: ChatClient::new(self.labeling.clone())?,
            judge: ChatClient::new(self.judge.clone())?,
            test_labelers: self
                .test_labelers
                .iter()
                .map(|p| ChatClient::new(p.clone()))
                .collect::<Result<_>>()?,
            coverage: self.coverage.iter().map(embed).collect::<Result<_>>()?,
        })
    }
}

/// Live clients for a roster.
pub struct Clients {
    pub scoring: Vec<EmbeddingClient>,
    pub augmentation: EmbeddingClient,
    pub clustering: EmbeddingClient,
    pub labeling: ChatClient,
    pub judge: ChatClient,
    pub test_labelers: Vec<ChatClient>,
    pub coverage: Vec<EmbeddingClient>,
}

impl Clients {
    pub fn scoring_refs(&self) -> Vec<&EmbeddingClient> {
        self.scoring.iter().collect()
    }

    pub fn coverage_refs(&self) -> Vec<&EmbeddingClient> {
        self.coverage.iter().collect()
    }
}

fn default_domain() -> String {
    "AI Skills Taxonomy".into()
}

/// One point of the experimental grid plus everything needed to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub augmentation: bool,
    pub percentile: Percentile,
    pub soft_clustering: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub providers: ProviderRoster,
    #[serde(default)]
    pub seed: u64,
    /// Label of the synthetic root node.
    #[serde(default = "default_domain")]
    pub domain: String,
}

impl RunConfig {
    pub fn new(augmentation: bool, percentile: Percentile, soft_clustering: bool, providers: ProviderRoster) -> Self {
        RunConfig {
            augmentation,
            percentile,
            soft_clustering,
            thresholds: Thresholds::default(),
            providers,
            seed: 0,
            domain: default_domain(),
        }
    }

    /// Hex SHA-256 of the canonical (key-sorted) JSON encoding.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("RunConfig serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Short `aug/soft/pct` tag, e.g. `Y/N/75`.
    pub fn tag(&self) -> String {
        let yn = |b: bool| if b { "Y" } else { "N" };
        format!("{}/{}/{}", yn(self.augmentation), yn(self.soft_clustering), self.percentile)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if !(t.augmentation > 0.0 && t.augmentation <= 1.0) {
            return Err(Error::Config("augmentation threshold must be in (0, 1]".into()));
        }
        if !(t.consolidation > 0.0 && t.consolidation <= 1.0) {
            return Err(Error::Config("consolidation threshold must be in (0, 1]".into()));
        }
        if t.min_cluster_size < 2 || t.max_levels == 0 || t.target_dim == 0 {
            return Err(Error::Config(
                "min_cluster_size >= 2, max_levels >= 1 and target_dim >= 1 are required".into(),
            ));
        }
        self.providers.validate()
    }
}

/// The full 2 × 3 × 2 factor grid over a shared base configuration, ordered
/// augmentation, then soft clustering, then percentile.
pub fn full_grid(base: &RunConfig) -> Vec<RunConfig> {
    let mut out = Vec::with_capacity(12);
    for augmentation in [false, true] {
        for soft_clustering in [false, true] {
            for percentile in Percentile::ALL {
                out.push(RunConfig {
                    augmentation,
                    soft_clustering,
                    percentile,
                    ..base.clone()
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn base() -> RunConfig {
        RunConfig::new(false, Percentile::P50, false, ProviderRoster::mock(&["nlp".into()]))
    }

    #[test]
    fn grid_has_twelve_distinct_cells() {
        let grid = full_grid(&base());
        assert_eq!(grid.len(), 12);
        let prints: HashSet<String> = grid.iter().map(RunConfig::fingerprint).collect();
        assert_eq!(prints.len(), 12);
        let tags: HashSet<String> = grid.iter().map(RunConfig::tag).collect();
        assert!(tags.contains("Y/N/75"));
    }

    #[test]
    fn fingerprint_is_stable_across_round_trip() {
        let c = base();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string_pretty(&c).unwrap()).unwrap();
        assert_eq!(c.fingerprint(), back.fingerprint());
        let mut d = c.clone();
        d.seed = 9;
        assert_ne!(c.fingerprint(), d.fingerprint());
    }

    #[test]
    fn percentile_serializes_as_integer() {
        let v = serde_json::to_value(base()).unwrap();
        assert_eq!(v["percentile"], 50);
        let bad = serde_json::to_string(&base()).unwrap().replace("\"percentile\":50", "\"percentile\":60");
        assert!(serde_json::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn roster_validation() {
        let mut r = ProviderRoster::mock(&[]);
        r.validate().unwrap();
        r.test_labelers.pop();
        assert!(r.validate().is_err());
        let mut r = ProviderRoster::mock(&[]);
        r.labeling = ProviderConfig::mock_embedding("x");
        assert!(r.validate().is_err());
        let mut r = ProviderRoster::mock(&[]);
        r.test_labelers[1].model_id = r.test_labelers[0].model_id.clone();
        assert!(r.validate().is_err());
    }

    #[test]
    fn thresholds_validated() {
        let mut c = base();
        c.thresholds.augmentation = 0.0;
        assert!(c.validate().is_err());
        let mut c = base();
        c.thresholds.min_cluster_size = 1;
        assert!(c.validate().is_err());
        base().validate().unwrap();
    }
}
