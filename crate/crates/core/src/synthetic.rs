//! Seeded posting corpus with planted skill themes, for offline end-to-end
//! runs against the mock providers.
//!
//! Themes come in two families. Every keyword sentence carries its family's
//! three marker words, its theme keyword and its sub-skill's four words,
//! so leaf clusters form per sub-skill and leaf labels regroup per family
//! one level up. Each AI document also carries a paraphrase of one of
//! its keyword sentences with the keyword hyphenated: identical tokens, no
//! boundary match, so only augmentation can pick it up.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub keyword: String,
    pub family: usize,
    pub subskills: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub documents: usize,
    /// Fraction of documents that carry at least three keyword sentences.
    pub ai_fraction: f64,
    pub seed: u64,
    /// Months cycle through `2024-01 ..= 2024-{months}`; the last is held out.
    pub months: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            documents: 500,
            ai_fraction: 0.8,
            seed: 7,
            months: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    /// Planted keywords followed by distractors that never occur.
    pub keywords: Vec<String>,
    pub themes: Vec<Theme>,
    pub holdout_month: String,
}

const FAMILIES: [[&str; 3]; 2] = [["data", "analytics", "insights"], ["autonomous", "robotics", "machines"]];

const THEMES: [(&str, usize, [[&str; 4]; 2]); 10] = [
    ("machine learning", 0, [["classifier", "training", "features", "regression"], ["hyperparameter", "tuning", "crossvalidation", "benchmarks"]]),
    ("deep learning", 0, [["convolutional", "layers", "backpropagation", "gpus"], ["transformer", "attention", "pretraining", "checkpoints"]]),
    ("natural language", 0, [["tokenization", "corpora", "parsing", "syntax"], ["sentiment", "summarization", "translation", "chatbots"]]),
    ("predictive modeling", 0, [["forecasting", "timeseries", "seasonality", "demand"], ["churn", "propensity", "scoring", "segmentation"]]),
    ("recommender systems", 0, [["collaborative", "filtering", "ranking", "personalization"], ["embeddings", "retrieval", "similarity", "catalog"]]),
    ("computer vision", 1, [["detection", "segmentation", "imagery", "cameras"], ["lidar", "pointcloud", "calibration", "depth"]]),
    ("reinforcement learning", 1, [["policy", "reward", "simulation", "agents"], ["exploration", "bandit", "qlearning", "environment"]]),
    ("motion planning", 1, [["trajectory", "pathfinding", "obstacles", "kinematics"], ["localization", "mapping", "slam", "odometry"]]),
    ("sensor fusion", 1, [["kalman", "filters", "imu", "radar"], ["telemetry", "signals", "noise", "estimation"]]),
    ("robot perception", 1, [["grasping", "manipulation", "tactile", "grippers"], ["navigation", "drones", "swarm", "control"]]),
];

const DISTRACTORS: [&str; 10] = [
    "genetic algorithms",
    "expert systems",
    "knowledge graphs",
    "fuzzy logic",
    "speech synthesis",
    "anomaly detection",
    "federated learning",
    "large language models",
    "graph neural networks",
    "ai ethics",
];

const LEADS: [&str; 8] = ["Develop", "Design", "Apply", "Build", "Maintain", "Evaluate", "Implement", "Improve"];

const FILLERS: [&str; 12] = [
    "daily", "across", "teams", "projects", "solutions", "production", "clients", "pipelines", "products",
    "workflows", "platforms", "programs",
];

const GENERIC: [&str; 24] = [
    "Applicants must hold a valid commercial driver license",
    "The position offers competitive pay and paid holidays",
    "Lift up to fifty pounds and stand for long shifts",
    "Greet customers and process payments at the register",
    "Maintain accurate inventory records in the warehouse",
    "Schedule patient appointments and verify insurance coverage",
    "Prepare monthly payroll reports for the finance office",
    "Clean and sanitize kitchen equipment after every shift",
    "Operate forklifts and pallet jacks safely",
    "Answer phones and route calls to the right department",
    "Coordinate deliveries with regional distribution centers",
    "Weekend availability is required for this role",
    "Train new hires on store opening procedures",
    "Inspect vehicles before each route and log defects",
    "Support the nursing staff with patient intake",
    "Manage vendor invoices and reconcile statements",
    "Assist teachers with classroom activities and supervision",
    "Install drywall and finish interior surfaces",
    "Respond to tenant maintenance requests promptly",
    "A high school diploma or equivalent is preferred",
    "Benefits include health insurance and a retirement plan",
    "Monitor building security cameras during night shifts",
    "Stock shelves and rotate perishable goods",
    "Communicate clearly with supervisors and coworkers",
];

fn themes() -> Vec<Theme> {
    THEMES
        .iter()
        .map(|(kw, family, subs)| Theme {
            keyword: kw.to_string(),
            family: *family,
            subskills: subs.iter().map(|s| s.iter().map(|w| w.to_string()).collect()).collect(),
        })
        .collect()
}

/// Keyword sentence for one sub-skill. Returns the text plus the same text
/// with the keyword hyphenated.
///
/// Zero to four filler words vary the length, which spreads class scores
/// within every sub-skill so percentile cuts thin all of them alike.
fn skill_sentence(theme: &Theme, sub: usize, rng: &mut ChaCha8Rng) -> (String, String) {
    let [f1, f2, f3] = FAMILIES[theme.family];
    let mut words: Vec<&str> = theme.subskills[sub].iter().map(String::as_str).collect();
    words.shuffle(rng);
    let lead = LEADS.choose(rng).expect("non-empty");
    let n_fill = rng.random_range(0..=4);
    let fillers: Vec<&str> = FILLERS.choose_multiple(rng, n_fill).copied().collect();
    let tail = if fillers.is_empty() { String::new() } else { format!(" {}", fillers.join(" ")) };
    let build = |kw: &str| {
        format!(
            "{lead} {f1} {f2} {f3} {} {kw} {} {} {}{tail}.",
            words[0], words[1], words[2], words[3]
        )
    };
    (build(&theme.keyword), build(&theme.keyword.replace(' ', "-")))
}

fn generic_sentence(rng: &mut ChaCha8Rng) -> String {
    format!("{}.", GENERIC.choose(rng).expect("non-empty"))
}

/// Deterministic for a given config.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    assert!(cfg.months >= 2 && cfg.months <= 12, "months must be in 2..=12");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let themes = themes();
    let n_ai = (cfg.documents as f64 * cfg.ai_fraction).round() as usize;
    let mut documents = Vec::with_capacity(cfg.documents);
    for i in 0..cfg.documents {
        let mut sentences = Vec::new();
        if i < n_ai {
            let theme = &themes[i % themes.len()];
            let k = rng.random_range(4..=8);
            let mut paraphrase = None;
            for j in 0..k {
                let sub = rng.random_range(0..theme.subskills.len());
                let (text, hyphenated) = skill_sentence(theme, sub, &mut rng);
                if j == 0 {
                    paraphrase = Some(hyphenated);
                }
                sentences.push(text);
            }
            sentences.extend(paraphrase);
            for _ in 0..rng.random_range(1..=3) {
                sentences.push(generic_sentence(&mut rng));
            }
        } else {
            for _ in 0..rng.random_range(3..=6) {
                sentences.push(generic_sentence(&mut rng));
            }
            // Stray mentions below the mining threshold.
            if rng.random_bool(0.3) {
                let theme = themes.choose(&mut rng).expect("non-empty");
                let sub = rng.random_range(0..theme.subskills.len());
                sentences.push(skill_sentence(theme, sub, &mut rng).0);
            }
        }
        sentences.shuffle(&mut rng);
        let month = format!("2024-{:02}", 1 + (i as u32 % cfg.months));
        documents.push(
            Document::new(format!("doc-{i:04}"), sentences.join(" "), month, "synthetic")
                .expect("generated document is valid"),
        );
    }
    let mut keywords: Vec<String> = themes.iter().map(|t| t.keyword.clone()).collect();
    keywords.extend(DISTRACTORS.iter().map(|s| s.to_string()));
    SyntheticCorpus {
        documents,
        keywords,
        themes,
        holdout_month: format!("2024-{:02}", cfg.months),
    }
}
