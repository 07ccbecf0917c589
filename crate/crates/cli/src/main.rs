mod sweep_file;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use skilltax::clustering::{cluster_density, reduce_dimensions, soft_assign, ClusterAssignment, PointSet};
use skilltax::corpus::{holdout_split, load_corpus, split_sentences, write_corpus, Document, LoadOptions};
use skilltax::evaluation::{
    coverage_report, judge_taxonomy, label_test_sentences, read_labeled_test_set, silhouette_mean,
    write_labeled_test_set, DEFAULT_TAUS,
};
use skilltax::experiments::{
    anova_cells, emit_report, factorial_anova, fmt3, prepare_inputs, read_results, run_sweep, AnovaResult, Clients,
    ProviderRoster, RunConfig, SweepOptions, METRIC_COLUMNS,
};
use skilltax::labeling::PromptTemplates;
use skilltax::mining::{load_keywords, mine_candidates, read_candidates, write_candidates, BoundaryMode, KeywordMatcher};
use skilltax::selection::{augment_candidates, percentile_filter, read_pool, score_candidates, write_pool, Percentile};
use skilltax::synthetic::{generate, SyntheticConfig};
use skilltax::taxonomy::{build_taxonomy, load_taxonomy, save_taxonomy, BuildContext};
use tracing_subscriber::EnvFilter;

use sweep_file::SweepFile;

/// Skill taxonomies from job-posting corpora.
#[derive(Parser)]
#[command(name = "skilltax", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Provider roster JSON. Deterministic offline mocks when omitted.
    #[arg(long, global = true)]
    providers: Option<PathBuf>,
    /// Persistent embedding cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn on(self) -> bool {
        matches!(self, OnOff::On)
    }
}

fn parse_pct(s: &str) -> Result<Percentile, String> {
    let n: u8 = s.parse().map_err(|_| format!("{s} is not 25, 50 or 75"))?;
    Percentile::try_from(n).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Corpus checks and the holdout split.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Generate a seeded synthetic corpus and keyword list.
    Synthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        keywords_out: PathBuf,
        #[arg(long, default_value_t = 500)]
        documents: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Extract keyword-bearing sentences.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_doc_matches: usize,
        /// Treat punctuation as a keyword boundary.
        #[arg(long)]
        loose_boundaries: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach class scores to mined candidates.
    Score {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep candidates above a class-score percentile.
    Filter {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_parser = parse_pct)]
        pct: Percentile,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add near-duplicate training sentences to a scored pool.
    Augment {
        #[arg(long)]
        pool: PathBuf,
        /// Training documents (holdout month already removed).
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a pool once and write the assignment.
    Cluster {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_size: usize,
        #[arg(long, value_enum, default_value = "off")]
        soft: OnOff,
        #[arg(long, default_value_t = 10)]
        target_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a taxonomy from a scored pool.
    Build(BuildArgs),
    /// Evaluate a taxonomy.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run a configuration grid end to end.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Main-effects ANOVA over a results file.
    Anova {
        /// Results column; repeat for several. All metric columns when omitted.
        #[arg(long)]
        metric: Vec<String>,
        #[arg(long)]
        results: PathBuf,
        /// Also write results.csv and results.md with the ANOVA section here.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Report record counts and schema errors.
    Validate {
        path: PathBuf,
        /// Drop repeated ids instead of reporting them.
        #[arg(long)]
        dedupe: bool,
    },
    /// Separate one month from the rest.
    Split {
        path: PathBuf,
        #[arg(long)]
        holdout: String,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    /// Scored pool of mined candidates.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, value_enum, default_value = "off")]
    aug: OnOff,
    /// Training documents; required with `--aug on`.
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    aug_threshold: f64,
    #[arg(long, value_parser = parse_pct, default_value = "50")]
    pct: Percentile,
    #[arg(long, value_enum, default_value = "off")]
    soft: OnOff,
    #[arg(long, default_value_t = 10)]
    min_labels: usize,
    #[arg(long, default_value_t = 5)]
    max_levels: usize,
    #[arg(long, default_value_t = 5)]
    min_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-level points and assignments, for `eval silhouette`.
    #[arg(long)]
    levels_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Have both test labelers flag domain sentences in held-out documents.
    Label {
        #[arg(long)]
        corpus: PathBuf,
        /// Keyword list the mock labelers flag on.
        #[arg(long)]
        keywords: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lenient and strict macro-F1 and label utilization.
    Coverage {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        test_set: PathBuf,
        /// Thresholds; 0.6 0.7 0.8 0.9 when omitted.
        #[arg(long, num_args = 1..)]
        tau: Vec<f64>,
    },
    /// LLM judge scores.
    Judge {
        #[arg(long)]
        taxonomy: PathBuf,
    },
    /// Mean silhouette over the levels written by `build --levels-out`.
    Silhouette {
        #[arg(long)]
        levels: PathBuf,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    run(cli.command, &cli.global)
}

fn read_docs(path: &Path) -> Result<Vec<Document>> {
    let opts = LoadOptions {
        fail_fast: true,
        dedupe: false,
    };
    load_corpus(path, &path.display().to_string(), opts)?
        .collect::<skilltax::Result<Vec<_>>>()
        .with_context(|| format!("reading corpus {}", path.display()))
}

fn roster(g: &Global, keywords: &[String]) -> Result<ProviderRoster> {
    match &g.providers {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing roster {}", p.display()))
        }
        None => Ok(ProviderRoster::mock(keywords)),
    }
}

fn connect(g: &Global, keywords: &[String]) -> Result<(ProviderRoster, Clients)> {
    let r = roster(g, keywords)?;
    let clients = r.connect(g.cache_dir.as_deref())?;
    Ok((r, clients))
}

fn templates(dir: Option<&Path>) -> Result<PromptTemplates> {
    Ok(match dir {
        Some(d) => PromptTemplates::load_dir(d)?,
        None => PromptTemplates::default(),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn scoring_ids(r: &ProviderRoster) -> Vec<String> {
    r.scoring.iter().map(|p| p.model_id.clone()).collect()
}

fn run(command: Command, g: &Global) -> Result<()> {
    match command {
        Command::Corpus(CorpusCmd::Validate { path, dedupe }) => {
            let opts = LoadOptions { fail_fast: false, dedupe };
            let mut reader = load_corpus(&path, &path.display().to_string(), opts)?;
            for doc in reader.by_ref() {
                doc?;
            }
            let stats = reader.into_stats();
            println!("documents: {}", stats.documents);
            println!("blank lines: {}", stats.blank_lines);
            println!("duplicates dropped: {}", stats.duplicates_dropped);
            println!("errors: {}", stats.errors.len());
            for e in &stats.errors {
                println!("  {e}");
            }
            if !stats.errors.is_empty() {
                bail!("{} invalid record(s)", stats.errors.len());
            }
        }
        Command::Corpus(CorpusCmd::Split { path, holdout, train_out, test_out }) => {
            let split = holdout_split(read_docs(&path)?, &holdout)?;
            let n_train = write_corpus(&train_out, &split.train)?;
            let n_test = write_corpus(&test_out, &split.test)?;
            println!("train: {n_train}, test: {n_test}");
        }
        Command::Synthetic { out, keywords_out, documents, seed } => {
            let corpus = generate(&SyntheticConfig { documents, seed, ..Default::default() });
            write_corpus(&out, &corpus.documents)?;
            std::fs::write(&keywords_out, corpus.keywords.join("\n") + "\n")
                .with_context(|| format!("writing {}", keywords_out.display()))?;
            println!("{} documents, holdout month {}", corpus.documents.len(), corpus.holdout_month);
        }
        Command::Mine { corpus, keywords, min_doc_matches, loose_boundaries, out } => {
            let kw = load_keywords(&keywords)?;
            let mode = if loose_boundaries { BoundaryMode::Loose } else { BoundaryMode::Strict };
            let matcher = KeywordMatcher::new(&kw, mode)?;
            let mined = mine_candidates(&read_docs(&corpus)?, &matcher, min_doc_matches)?;
            write_candidates(&out, &mined)?;
            println!("{} candidates", mined.len());
        }
        Command::Score { candidates, keywords, out } => {
            let kw = load_keywords(&keywords)?;
            let (_, clients) = connect(g, kw.keywords())?;
            let pool = score_candidates(read_candidates(&candidates)?, &kw, &clients.scoring_refs())?;
            write_pool(&out, &pool)?;
            println!("{} candidates scored", pool.candidates.len());
        }
        Command::Filter { pool, pct, out } => {
            let r = roster(g, &[])?;
            let filtered = percentile_filter(&read_pool(&pool, scoring_ids(&r))?, pct)?;
            write_pool(&out, &filtered)?;
            println!("{} candidates kept", filtered.candidates.len());
        }
        Command::Augment { pool, corpus, threshold, out } => {
            let (r, clients) = connect(g, &[])?;
            let pool = read_pool(&pool, scoring_ids(&r))?;
            let sentences: Vec<_> = read_docs(&corpus)?.iter().flat_map(split_sentences).collect();
            let augmented = augment_candidates(&pool, &sentences, threshold, &clients.augmentation)?;
            write_pool(&out, &augmented)?;
            println!("{} candidates", augmented.candidates.len());
        }
        Command::Cluster { pool, min_size, soft, target_dim, out } => {
            let (r, clients) = connect(g, &[])?;
            let pool = read_pool(&pool, scoring_ids(&r))?;
            let texts: Vec<String> = pool.candidates.iter().map(|c| c.text().to_string()).collect();
            let rows: Vec<Vec<f64>> = clients
                .clustering
                .embed_texts(&texts)?
                .iter()
                .map(|v| v.values().iter().map(|&x| x as f64).collect())
                .collect();
            let ids = pool.candidates.iter().map(|c| c.id.clone()).collect();
            let points = reduce_dimensions(&PointSet::new(ids, &rows)?, target_dim)?;
            let mut a = cluster_density(&points, min_size)?;
            if soft.on() {
                a = soft_assign(&points, &a);
            }
            write_json(&out, &a.to_artifact(&points))?;
            println!("{} clusters, {} noise points", a.n_clusters(), a.noise_count());
        }
        Command::Build(args) => build(args, g)?,
        Command::Eval(cmd) => eval(cmd, g)?,
        Command::Sweep { config } => sweep(&config, g)?,
        Command::Anova { metric, results, report_dir } => {
            let rows = read_results(&results)?;
            let metrics: Vec<String> = if metric.is_empty() {
                METRIC_COLUMNS.iter().map(|s| s.to_string()).collect()
            } else {
                metric
            };
            let mut out = Vec::new();
            for m in &metrics {
                out.push(factorial_anova(&anova_cells(&rows, m)?, m)?);
            }
            print_anova(&out);
            if let Some(dir) = report_dir {
                let files = emit_report(&rows, &out, &dir)?;
                println!("wrote {} and {}", files.csv.display(), files.markdown.display());
            }
        }
    }
    Ok(())
}

fn print_anova(results: &[AnovaResult]) {
    println!("metric\tfactor\tdf\tF\tp\teta_sq");
    for a in results {
        for e in &a.effects {
            println!(
                "{}\t{}\t{}, {}\t{}\t{}\t{}",
                a.metric,
                e.factor.name(),
                e.df,
                a.df_error,
                fmt3(Some(e.f)),
                if e.p < 1e-4 { "<0.0001".to_string() } else { format!("{:.4}", e.p) },
                fmt3(Some(e.eta_sq))
            );
        }
        if a.degenerate {
            println!("{}\t(zero variance)", a.metric);
        }
    }
}

fn build(args: BuildArgs, g: &Global) -> Result<()> {
    let (r, clients) = connect(g, &[])?;
    let templates = templates(g.prompts.as_deref())?;
    let mut cfg = RunConfig::new(args.aug.on(), args.pct, args.soft.on(), r);
    cfg.thresholds.augmentation = args.aug_threshold;
    cfg.thresholds.min_labels = args.min_labels;
    cfg.thresholds.max_levels = args.max_levels;
    cfg.thresholds.min_cluster_size = args.min_size;
    cfg.seed = args.seed;
    let mut pool = read_pool(&args.pool, scoring_ids(&cfg.providers))?;
    if cfg.augmentation {
        let Some(train) = &args.train_corpus else {
            bail!("--aug on needs --train-corpus");
        };
        let sentences: Vec<_> = read_docs(train)?.iter().flat_map(split_sentences).collect();
        pool = augment_candidates(&pool, &sentences, cfg.thresholds.augmentation, &clients.augmentation)?;
    }
    let filtered = percentile_filter(&pool, cfg.percentile)?;
    let ctx = BuildContext {
        cfg: &cfg,
        embed: &clients.clustering,
        chat: &clients.labeling,
        templates: &templates,
    };
    let built = build_taxonomy(&filtered, &ctx)?;
    save_taxonomy(&built.taxonomy, &args.out)?;
    if let Some(path) = &args.levels_out {
        write_json(path, &built.level_points)?;
    }
    let t = &built.taxonomy;
    println!(
        "{} levels, {} leaves, stop: {:?}, fingerprint {}",
        t.levels,
        t.leaves().count(),
        t.build_log.stop_reason,
        t.config_fingerprint
    );
    Ok(())
}

fn eval(cmd: EvalCmd, g: &Global) -> Result<()> {
    match cmd {
        EvalCmd::Label { corpus, keywords, out } => {
            let kw = match keywords {
                Some(p) => load_keywords(&p)?.keywords().to_vec(),
                None => Vec::new(),
            };
            let (_, clients) = connect(g, &kw)?;
            let set = label_test_sentences(&read_docs(&corpus)?, &clients.test_labelers, &templates(g.prompts.as_deref())?)?;
            write_labeled_test_set(&out, &set)?;
            let lenient = set.lenient().iter().filter(|&&x| x).count();
            let strict = set.strict().iter().filter(|&&x| x).count();
            println!(
                "{} sentences, {lenient} lenient positives, {strict} strict positives, {} incidents",
                set.sentences.len(),
                set.incidents.len()
            );
        }
        EvalCmd::Coverage { taxonomy, test_set, tau } => {
            let (_, clients) = connect(g, &[])?;
            let taus = if tau.is_empty() { DEFAULT_TAUS.to_vec() } else { tau };
            let report = coverage_report(
                &load_taxonomy(&taxonomy)?,
                &read_labeled_test_set(&test_set)?,
                &taus,
                &clients.coverage_refs(),
            )?;
            print_json(&report)?;
        }
        EvalCmd::Judge { taxonomy } => {
            let (_, clients) = connect(g, &[])?;
            let t = load_taxonomy(&taxonomy)?;
            let scores = judge_taxonomy(&t, &clients.judge, &templates(g.prompts.as_deref())?)?;
            let [clarity, coherence, orthogonality, completeness] = scores.category_averages();
            print_json(&serde_json::json!({
                "scores": scores,
                "clarity": clarity,
                "coherence": coherence,
                "orthogonality": orthogonality,
                "completeness": completeness,
            }))?;
        }
        EvalCmd::Silhouette { levels } => {
            let text = std::fs::read_to_string(&levels).with_context(|| format!("reading {}", levels.display()))?;
            let per_level: Vec<(PointSet, ClusterAssignment)> = serde_json::from_str(&text)?;
            println!("{}", silhouette_mean(&per_level)?);
        }
    }
    Ok(())
}

fn sweep(config: &Path, g: &Global) -> Result<()> {
    let file = SweepFile::load(config)?;
    let keywords = load_keywords(&file.keywords)?;
    let fallback = roster(g, keywords.keywords())?;
    let grid = file.configs(|| fallback);
    let roster = &grid.first().context("empty grid")?.providers;
    let cache_dir = file.cache_dir.as_deref().or(g.cache_dir.as_deref());
    let clients = roster.connect(cache_dir)?;
    let templates = templates(file.prompts_dir.as_deref().or(g.prompts.as_deref()))?;
    let prepared = prepare_inputs(
        read_docs(&file.corpus)?,
        &keywords,
        &file.holdout_month,
        file.min_doc_matches,
        &clients,
        &templates,
    )?;
    std::fs::create_dir_all(&file.output_dir).with_context(|| format!("creating {}", file.output_dir.display()))?;
    let opts = SweepOptions {
        results_path: Some(file.output_dir.join("results.csv")),
        taxonomy_dir: Some(file.output_dir.join("taxonomies")),
        jobs: file.jobs,
    };
    let outcome = run_sweep(&prepared.inputs(&clients, &templates), &grid, &opts)?;
    let failed = outcome.rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} rows ({} executed, {failed} failed)", outcome.rows.len(), outcome.executed);

    let mut anova = Vec::new();
    for column in METRIC_COLUMNS {
        match anova_cells(&outcome.rows, column).and_then(|c| factorial_anova(&c, column)) {
            Ok(a) => anova.push(a),
            Err(e) => tracing::warn!("no ANOVA for {column}: {e}"),
        }
    }
    let files = emit_report(&outcome.rows, &anova, &file.output_dir)?;
    println!("wrote {} and {}", files.csv.display(), files.markdown.display());
    Ok(())
}
