//! Main-effects factorial ANOVA over the balanced 2 × 2 × 3 grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::Percentile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Augmentation,
    SoftClustering,
    Percentile,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Augmentation, Factor::SoftClustering, Factor::Percentile];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Augmentation => "augmentation",
            Factor::SoftClustering => "soft_clustering",
            Factor::Percentile => "percentile",
        }
    }
}

/// One observation of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub augmentation: bool,
    pub soft_clustering: bool,
    pub percentile: Percentile,
    pub value: f64,
}

impl Cell {
    fn level(&self, f: Factor) -> u8 {
        match f {
            Factor::Augmentation => self.augmentation as u8,
            Factor::SoftClustering => self.soft_clustering as u8,
            Factor::Percentile => self.percentile.value(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEffect {
    pub factor: Factor,
    pub df: usize,
    pub ss: f64,
    pub f: f64,
    pub p: f64,
    pub eta_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub metric: String,
    pub effects: Vec<FactorEffect>,
    pub df_error: usize,
    pub ss_error: f64,
    pub ss_total: f64,
    pub grand_mean: f64,
    /// Set when the values have zero variance; every F is then 0 and p 1.
    pub degenerate: bool,
}

impl AnovaResult {
    pub fn effect(&self, f: Factor) -> &FactorEffect {
        self.effects.iter().find(|e| e.factor == f).expect("all factors present")
    }
}

/// Upper tail P(F > f) of the F(df1, df2) distribution.
pub fn f_upper_tail(f: f64, df1: usize, df2: usize) -> f64 {
    assert!(df1 >= 1 && df2 >= 1, "degrees of freedom must be positive");
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let (d1, d2) = (df1 as f64, df2 as f64);
    let x = d2 / (d2 + d1 * f);
    statrs::function::beta::beta_reg(d2 / 2.0, d1 / 2.0, x).clamp(0.0, 1.0)
}

/// Main effects of augmentation, soft clustering and percentile on one metric.
/// Requires exactly one observation per cell of the 12-cell grid.
pub fn factorial_anova(cells: &[Cell], metric: &str) -> Result<AnovaResult> {
    let mut seen = BTreeMap::new();
    for c in cells {
        if !c.value.is_finite() {
            return Err(Error::InvalidInput(format!("{metric}: non-finite value")));
        }
        if seen.insert((c.augmentation, c.soft_clustering, c.percentile), c.value).is_some() {
            return Err(Error::InvalidInput(format!("{metric}: duplicate cell")));
        }
    }
    if seen.len() != 12 {
        return Err(Error::InvalidInput(format!("{metric}: need 12 cells, got {}", seen.len())));
    }
    let n = cells.len() as f64;
    let grand_mean = cells.iter().map(|c| c.value).sum::<f64>() / n;
    let ss_total: f64 = cells.iter().map(|c| (c.value - grand_mean).powi(2)).sum();

    let mut sums = Vec::new();
    for f in Factor::ALL {
        let mut levels: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
        for c in cells {
            let e = levels.entry(c.level(f)).or_default();
            e.0 += c.value;
            e.1 += 1;
        }
        let ss: f64 = levels
            .values()
            .map(|&(s, k)| k as f64 * (s / k as f64 - grand_mean).powi(2))
            .sum();
        sums.push((f, levels.len() - 1, ss));
    }
    let df_error = cells.len() - 1 - sums.iter().map(|s| s.1).sum::<usize>();
    let mut ss_error = (ss_total - sums.iter().map(|s| s.2).sum::<f64>()).max(0.0);
    // Residuals at rounding level mean an exact additive fit.
    if ss_error <= 1e-12 * ss_total {
        ss_error = 0.0;
    }
    let degenerate = ss_total <= f64::EPSILON * grand_mean.abs().max(1.0) * n;
    let ms_error = ss_error / df_error as f64;

    let effects = sums
        .into_iter()
        .map(|(factor, df, ss)| {
            if degenerate {
                return FactorEffect { factor, df, ss, f: 0.0, p: 1.0, eta_sq: 0.0 };
            }
            let f = if ms_error > 0.0 { (ss / df as f64) / ms_error } else { f64::INFINITY };
            FactorEffect {
                factor,
                df,
                ss,
                f,
                p: f_upper_tail(f, df, df_error),
                eta_sq: ss / ss_total,
            }
        })
        .collect();
    if degenerate {
        tracing::warn!(metric, "zero variance; ANOVA is degenerate");
    }
    Ok(AnovaResult {
        metric: metric.to_string(),
        effects,
        df_error,
        ss_error,
        ss_total,
        grand_mean,
        degenerate,
    })
}
