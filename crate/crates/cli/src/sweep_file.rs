//! Sweep configuration file: data paths plus the shared settings every grid
//! point inherits.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skilltax::experiments::{full_grid, ProviderRoster, RunConfig, Thresholds};
use skilltax::selection::Percentile;

/// One grid point. Omitted from the file means the full 2 x 2 x 3 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPoint {
    pub augmentation: bool,
    pub soft_clustering: bool,
    pub percentile: Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub corpus: PathBuf,
    pub keywords: PathBuf,
    pub holdout_month: String,
    #[serde(default = "default_min_doc_matches")]
    pub min_doc_matches: usize,
    /// Mock providers when absent.
    #[serde(default)]
    pub providers: Option<ProviderRoster>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub grid: Option<Vec<GridPoint>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

fn default_min_doc_matches() -> usize {
    3
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("sweep-output")
}

fn default_jobs() -> usize {
    1
}

impl SweepFile {
    /// Reads the file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut f: SweepFile =
            serde_json::from_str(&text).with_context(|| format!("parsing sweep config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut f.corpus, &mut f.keywords, &mut f.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for p in [&mut f.cache_dir, &mut f.prompts_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if f.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        Ok(f)
    }

    /// Expands the grid over a roster (the file's own, or `mock` when none).
    pub fn configs(&self, mock: impl FnOnce() -> ProviderRoster) -> Vec<RunConfig> {
        let roster = self.providers.clone().unwrap_or_else(mock);
        let mut base = RunConfig::new(false, Percentile::P50, false, roster);
        base.thresholds = self.thresholds.clone();
        base.seed = self.seed;
        if let Some(d) = &self.domain {
            base.domain = d.clone();
        }
        match &self.grid {
            None => full_grid(&base),
            Some(points) => points
                .iter()
                .map(|p| RunConfig {
                    augmentation: p.augmentation,
                    soft_clustering: p.soft_clustering,
                    percentile: p.percentile,
                    ..base.clone()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("sweep.json");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_file_expands_to_full_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"corpus": "c.jsonl", "keywords": "k.txt", "holdout_month": "2024-06"}"#);
        let f = SweepFile::load(&p).unwrap();
        assert_eq!(f.corpus, dir.path().join("c.jsonl"));
        assert_eq!(f.min_doc_matches, 3);
        let grid = f.configs(|| ProviderRoster::mock(&[]));
        assert_eq!(grid.len(), 12);
        assert!(grid.iter().all(|c| c.thresholds == Thresholds::default()));
    }

    #[test]
    fn explicit_grid_is_kept_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"corpus": "/abs/c.jsonl", "keywords": "k.txt", "holdout_month": "2024-06", "seed": 4,
                "grid": [{"augmentation": true, "soft_clustering": false, "percentile": 75},
                         {"augmentation": false, "soft_clustering": true, "percentile": 25}]}"#,
        );
        let f = SweepFile::load(&p).unwrap();
        assert_eq!(f.corpus, PathBuf::from("/abs/c.jsonl"));
        let grid = f.configs(|| ProviderRoster::mock(&[]));
        let tags: Vec<String> = grid.iter().map(|c| c.tag()).collect();
        assert_eq!(tags, ["Y/N/75", "N/Y/25"]);
        assert!(grid.iter().all(|c| c.seed == 4));
    }

    #[test]
    fn unknown_fields_and_zero_jobs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"corpus": "c", "keywords": "k", "holdout_month": "2024-06", "colour": 1}"#);
        assert!(SweepFile::load(&p).is_err());
        let p = write(dir.path(), r#"{"corpus": "c", "keywords": "k", "holdout_month": "2024-06", "jobs": 0}"#);
        assert!(SweepFile::load(&p).is_err());
    }
}
