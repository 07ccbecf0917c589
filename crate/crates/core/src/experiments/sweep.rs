//! Sequential (or bounded-parallel) evaluation of a configuration grid with a
//! resumable results ledger.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::anova::Cell;
use super::config::{Clients, RunConfig};
use crate::corpus::{holdout_split, split_sentences, Document, Sentence};
use crate::error::{Error, Result};
use crate::evaluation::{
    coverage_report, judge_taxonomy, label_test_sentences, silhouette_mean, CoverageReport, JudgeScores, LabeledTestSet,
    DEFAULT_TAUS,
};
use crate::mining::{mine_candidates, BoundaryMode, KeywordMatcher, KeywordSet};
use crate::labeling::PromptTemplates;
use crate::selection::{augment_candidates, percentile_filter, score_candidates, Percentile, ScoredPool};
use crate::taxonomy::{build_taxonomy, save_taxonomy, BuildContext, TaxonomyBuild};

/// First line of every results file.
pub const RESULTS_HEADER: &str = "# results/v1";

/// Metric columns usable as ANOVA responses, in file order.
pub const METRIC_COLUMNS: [&str; 14] = [
    "silhouette",
    "clarity",
    "coherence",
    "orthogonality",
    "completeness",
    "lenient_0.9",
    "lenient_0.8",
    "lenient_0.7",
    "lenient_0.6",
    "strict_0.9",
    "strict_0.8",
    "strict_0.7",
    "strict_0.6",
    "best_util",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One results row. Metric fields are empty for failed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub fingerprint: String,
    pub aug: bool,
    pub soft: bool,
    pub pct: Percentile,
    pub status: RowStatus,
    pub error: Option<String>,
    pub levels: Option<usize>,
    pub leaves: Option<usize>,
    pub silhouette: Option<f64>,
    pub clarity: Option<f64>,
    pub coherence: Option<f64>,
    pub orthogonality: Option<f64>,
    pub completeness: Option<f64>,
    #[serde(rename = "lenient_0.9")]
    pub lenient_09: Option<f64>,
    #[serde(rename = "lenient_0.8")]
    pub lenient_08: Option<f64>,
    #[serde(rename = "lenient_0.7")]
    pub lenient_07: Option<f64>,
    #[serde(rename = "lenient_0.6")]
    pub lenient_06: Option<f64>,
    #[serde(rename = "strict_0.9")]
    pub strict_09: Option<f64>,
    #[serde(rename = "strict_0.8")]
    pub strict_08: Option<f64>,
    #[serde(rename = "strict_0.7")]
    pub strict_07: Option<f64>,
    #[serde(rename = "strict_0.6")]
    pub strict_06: Option<f64>,
    pub best_tau: Option<f64>,
    pub best_util: Option<f64>,
}

impl SweepResult {
    fn blank(cfg: &RunConfig, status: RowStatus, error: Option<String>) -> Self {
        SweepResult {
            fingerprint: cfg.fingerprint(),
            aug: cfg.augmentation,
            soft: cfg.soft_clustering,
            pct: cfg.percentile,
            status,
            error,
            levels: None,
            leaves: None,
            silhouette: None,
            clarity: None,
            coherence: None,
            orthogonality: None,
            completeness: None,
            lenient_09: None,
            lenient_08: None,
            lenient_07: None,
            lenient_06: None,
            strict_09: None,
            strict_08: None,
            strict_07: None,
            strict_06: None,
            best_tau: None,
            best_util: None,
        }
    }

    pub fn failed(cfg: &RunConfig, error: &Error) -> Self {
        Self::blank(cfg, RowStatus::Failed, Some(error.to_string()))
    }

    /// Assembles a row from an evaluated build.
    pub fn from_evaluation(cfg: &RunConfig, eval: &ConfigEvaluation) -> Self {
        let mut row = Self::blank(cfg, RowStatus::Ok, None);
        let t = &eval.build.taxonomy;
        row.levels = Some(t.levels);
        row.leaves = Some(t.leaves().count());
        row.silhouette = eval.silhouette;
        let [c, h, o, m] = eval.judge.category_averages();
        (row.clarity, row.coherence, row.orthogonality, row.completeness) = (Some(c), Some(h), Some(o), Some(m));
        let at = |tau: f64| eval.coverage.at(tau);
        row.lenient_09 = at(0.9).map(|r| r.lenient_f1);
        row.lenient_08 = at(0.8).map(|r| r.lenient_f1);
        row.lenient_07 = at(0.7).map(|r| r.lenient_f1);
        row.lenient_06 = at(0.6).map(|r| r.lenient_f1);
        row.strict_09 = at(0.9).map(|r| r.strict_f1);
        row.strict_08 = at(0.8).map(|r| r.strict_f1);
        row.strict_07 = at(0.7).map(|r| r.strict_f1);
        row.strict_06 = at(0.6).map(|r| r.strict_f1);
        row.best_tau = Some(eval.coverage.best_strict_tau);
        row.best_util = Some(eval.coverage.label_utilization);
        row
    }

    /// Value of a [`METRIC_COLUMNS`] entry.
    pub fn metric(&self, column: &str) -> Result<Option<f64>> {
        Ok(match column {
            "silhouette" => self.silhouette,
            "clarity" => self.clarity,
            "coherence" => self.coherence,
            "orthogonality" => self.orthogonality,
            "completeness" => self.completeness,
            "lenient_0.9" => self.lenient_09,
            "lenient_0.8" => self.lenient_08,
            "lenient_0.7" => self.lenient_07,
            "lenient_0.6" => self.lenient_06,
            "strict_0.9" => self.strict_09,
            "strict_0.8" => self.strict_08,
            "strict_0.7" => self.strict_07,
            "strict_0.6" => self.strict_06,
            "best_util" => self.best_util,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown metric column {other:?}; expected one of {}",
                    METRIC_COLUMNS.join(", ")
                )))
            }
        })
    }

    pub fn tag(&self) -> String {
        let yn = |b: bool| if b { "Y" } else { "N" };
        format!("{}/{}/{}", yn(self.aug), yn(self.soft), self.pct)
    }
}

/// Writes rows under the versioned header; floats keep full precision.
pub fn write_results(path: impl AsRef<Path>, rows: &[SweepResult]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("csv.tmp");
    let mut file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    writeln!(file, "{RESULTS_HEADER}").map_err(|e| Error::io(&tmp, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| Error::InvalidInput(format!("{}: {e}", tmp.display())))?;
    }
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<SweepResult>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(&file).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_end() != RESULTS_HEADER {
        return Err(Error::InvalidInput(format!(
            "{}: expected first line {RESULTS_HEADER:?}",
            path.display()
        )));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Record {
                line: i + 3,
                message: e.to_string(),
            })
        })
        .collect()
}

/// The 12 ANOVA cells for one metric column. Failed rows and missing values
/// are errors; a grid needs every cell.
pub fn anova_cells(rows: &[SweepResult], column: &str) -> Result<Vec<Cell>> {
    rows.iter()
        .map(|r| {
            let value = r.metric(column)?.filter(|_| r.status == RowStatus::Ok).ok_or_else(|| {
                Error::InvalidInput(format!("row {} has no {column} value", r.tag()))
            })?;
            Ok(Cell {
                augmentation: r.aug,
                soft_clustering: r.soft,
                percentile: r.pct,
                value,
            })
        })
        .collect()
}

/// Shared inputs: the scored mined pool, training sentences for
/// augmentation, and the judged test set.
pub struct SweepInputs<'a> {
    pub pool: &'a ScoredPool,
    pub train_sentences: &'a [Sentence],
    pub test_set: &'a LabeledTestSet,
    pub clients: &'a Clients,
    pub templates: &'a PromptTemplates,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Results ledger; rows already `ok` for a fingerprint are skipped.
    pub results_path: Option<PathBuf>,
    /// Directory for `<fingerprint>.json` taxonomies.
    pub taxonomy_dir: Option<PathBuf>,
    /// Configs evaluated concurrently; 0 and 1 both mean sequential.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// One row per grid entry, in grid order.
    pub rows: Vec<SweepResult>,
    /// Configs built in this call.
    pub executed: usize,
}

/// Owned sweep inputs derived from a corpus.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub pool: ScoredPool,
    pub train_sentences: Vec<Sentence>,
    pub test_set: LabeledTestSet,
}

impl PreparedInputs {
    pub fn inputs<'a>(&'a self, clients: &'a Clients, templates: &'a PromptTemplates) -> SweepInputs<'a> {
        SweepInputs {
            pool: &self.pool,
            train_sentences: &self.train_sentences,
            test_set: &self.test_set,
            clients,
            templates,
        }
    }
}

/// Holdout split, mining and scoring of the training documents, and judge
/// labeling of the held-out month.
pub fn prepare_inputs(
    docs: Vec<Document>,
    keywords: &KeywordSet,
    holdout_month: &str,
    min_doc_matches: usize,
    clients: &Clients,
    templates: &PromptTemplates,
) -> Result<PreparedInputs> {
    let split = holdout_split(docs, holdout_month)?;
    let matcher = KeywordMatcher::new(keywords, BoundaryMode::Strict)?;
    let mined = mine_candidates(&split.train, &matcher, min_doc_matches)?;
    tracing::info!(train = split.train.len(), test = split.test.len(), mined = mined.len(), "corpus prepared");
    let pool = score_candidates(mined, keywords, &clients.scoring_refs())?;
    let train_sentences = split.train.iter().flat_map(split_sentences).collect();
    let test_set = label_test_sentences(&split.test, &clients.test_labelers, templates)?;
    Ok(PreparedInputs {
        pool,
        train_sentences,
        test_set,
    })
}

/// A built taxonomy with every metric the results table reports.
#[derive(Debug, Clone)]
pub struct ConfigEvaluation {
    pub build: TaxonomyBuild,
    pub silhouette: Option<f64>,
    pub judge: JudgeScores,
    pub coverage: CoverageReport,
}

/// Augments the mined pool once per distinct threshold.
struct AugmentCache<'a> {
    inputs: &'a SweepInputs<'a>,
    pools: Mutex<HashMap<u64, Arc<ScoredPool>>>,
}

impl AugmentCache<'_> {
    fn get(&self, threshold: f64) -> Result<Arc<ScoredPool>> {
        let key = threshold.to_bits();
        if let Some(p) = self.pools.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let pool = Arc::new(augment_candidates(
            self.inputs.pool,
            self.inputs.train_sentences,
            threshold,
            &self.inputs.clients.augmentation,
        )?);
        self.pools.lock().expect("cache lock").insert(key, pool.clone());
        Ok(pool)
    }
}

/// Filters, builds and evaluates one configuration on an already
/// (optionally) augmented pool.
pub fn evaluate_config(pool: &ScoredPool, cfg: &RunConfig, inputs: &SweepInputs<'_>) -> Result<ConfigEvaluation> {
    let filtered = percentile_filter(pool, cfg.percentile)?;
    let ctx = BuildContext {
        cfg,
        embed: &inputs.clients.clustering,
        chat: &inputs.clients.labeling,
        templates: inputs.templates,
    };
    let build = build_taxonomy(&filtered, &ctx)?;
    let silhouette = match silhouette_mean(&build.level_points) {
        Ok(s) => Some(s),
        Err(Error::NoValidLevel) => None,
        Err(e) => return Err(e),
    };
    let judge = judge_taxonomy(&build.taxonomy, &inputs.clients.judge, inputs.templates)?;
    let coverage = coverage_report(
        &build.taxonomy,
        inputs.test_set,
        &DEFAULT_TAUS,
        &inputs.clients.coverage_refs(),
    )?;
    Ok(ConfigEvaluation {
        build,
        silhouette,
        judge,
        coverage,
    })
}

fn run_one(cfg: &RunConfig, inputs: &SweepInputs<'_>, cache: &AugmentCache<'_>, opts: &SweepOptions) -> SweepResult {
    let attempt = || -> Result<SweepResult> {
        cfg.validate()?;
        let pool = if cfg.augmentation {
            cache.get(cfg.thresholds.augmentation)?
        } else {
            Arc::new(inputs.pool.clone())
        };
        let eval = evaluate_config(&pool, cfg, inputs)?;
        if let Some(dir) = &opts.taxonomy_dir {
            save_taxonomy(&eval.build.taxonomy, dir.join(format!("{}.json", cfg.fingerprint())))?;
        }
        Ok(SweepResult::from_evaluation(cfg, &eval))
    };
    match attempt() {
        Ok(row) => row,
        Err(e) => {
            tracing::error!(config = %cfg.tag(), error = %e, "configuration failed");
            SweepResult::failed(cfg, &e)
        }
    }
}

/// Runs every configuration in `grid`, skipping those already recorded as
/// `ok` in the results ledger. A failed configuration yields a failed row
/// and the sweep continues.
///
/// All configurations must share the provider roster `inputs.clients` was
/// connected from.
pub fn run_sweep(inputs: &SweepInputs<'_>, grid: &[RunConfig], opts: &SweepOptions) -> Result<SweepOutcome> {
    let Some(first) = grid.first() else {
        return Err(Error::InvalidInput("sweep grid is empty".into()));
    };
    if grid.iter().any(|c| c.providers != first.providers) {
        return Err(Error::Config("all sweep configurations must share one provider roster".into()));
    }
    let mut done: BTreeMap<String, SweepResult> = BTreeMap::new();
    if let Some(path) = &opts.results_path {
        if path.exists() {
            for row in read_results(path)? {
                done.insert(row.fingerprint.clone(), row);
            }
        }
    }
    if let Some(dir) = &opts.taxonomy_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let pending: Vec<&RunConfig> = grid
        .iter()
        .filter(|c| done.get(&c.fingerprint()).is_none_or(|r| r.status != RowStatus::Ok))
        .collect();
    tracing::info!(total = grid.len(), pending = pending.len(), "sweep starting");

    let cache = AugmentCache {
        inputs,
        pools: Mutex::new(HashMap::new()),
    };
    let ledger = Mutex::new(done);
    let record = |row: SweepResult| -> Result<()> {
        let mut ledger = ledger.lock().expect("ledger lock");
        ledger.insert(row.fingerprint.clone(), row);
        if let Some(path) = &opts.results_path {
            let rows: Vec<SweepResult> = ledger.values().cloned().collect();
            write_results(path, &rows)?;
        }
        Ok(())
    };
    if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| pending.par_iter().try_for_each(|cfg| record(run_one(cfg, inputs, &cache, opts))))?;
    } else {
        for cfg in &pending {
            tracing::info!(config = %cfg.tag(), "building");
            record(run_one(cfg, inputs, &cache, opts))?;
        }
    }

    let ledger = ledger.into_inner().expect("ledger lock");
    let rows = grid
        .iter()
        .map(|c| ledger.get(&c.fingerprint()).cloned().expect("every config recorded"))
        .collect();
    Ok(SweepOutcome {
        rows,
        executed: pending.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(aug: bool, pct: Percentile, v: f64) -> SweepResult {
        let mut r = SweepResult {
            fingerprint: format!("f{aug}{pct}"),
            aug,
            soft: false,
            pct,
            status: RowStatus::Ok,
            error: None,
            levels: Some(2),
            leaves: Some(7),
            silhouette: Some(v),
            clarity: None,
            coherence: None,
            orthogonality: None,
            completeness: None,
            lenient_09: None,
            lenient_08: None,
            lenient_07: None,
            lenient_06: None,
            strict_09: None,
            strict_08: Some(1.0 / 3.0),
            strict_07: None,
            strict_06: None,
            best_tau: Some(0.8),
            best_util: None,
        };
        r.clarity = Some(v * 2.0);
        r
    }

    #[test]
    fn results_round_trip_with_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let mut failed = row(true, Percentile::P75, 0.0);
        failed.status = RowStatus::Failed;
        failed.error = Some("level 0: no clusters, among 3".into());
        let rows = vec![row(false, Percentile::P25, 0.123456789012345), failed];
        write_results(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# results/v1\nfingerprint,aug,soft,pct,status"));
        assert_eq!(read_results(&path).unwrap(), rows);
    }

    #[test]
    fn unversioned_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "fingerprint,aug\n").unwrap();
        assert!(read_results(&path).is_err());
    }

    #[test]
    fn metric_lookup() {
        let r = row(false, Percentile::P50, 0.5);
        assert_eq!(r.metric("silhouette").unwrap(), Some(0.5));
        assert_eq!(r.metric("clarity").unwrap(), Some(1.0));
        assert_eq!(r.metric("best_util").unwrap(), None);
        assert!(r.metric("nope").is_err());
        for c in METRIC_COLUMNS {
            assert!(r.metric(c).is_ok());
        }
        assert_eq!(r.tag(), "N/N/50");
    }
}
