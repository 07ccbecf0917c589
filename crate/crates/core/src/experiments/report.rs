//! Results tables: machine CSV plus a markdown rendering with column maxima
//! in bold.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::anova::AnovaResult;
use super::sweep::{write_results, RowStatus, SweepResult, METRIC_COLUMNS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub markdown: PathBuf,
}

/// Three decimals; NaN and missing render as `-`.
pub fn fmt3(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3}"),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.to_string(),
        _ => "-".to_string(),
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Per-column maximum over ok rows, compared at display precision so that
/// every cell that prints as the maximum is bolded.
fn column_max(rows: &[SweepResult], column: &str) -> Option<String> {
    rows.iter()
        .filter(|r| r.status == RowStatus::Ok)
        .filter_map(|r| r.metric(column).ok().flatten())
        .filter(|v| v.is_finite())
        .max_by(f64::total_cmp)
        .map(|m| fmt3(Some(m)))
}

/// Renders the markdown table (and the ANOVA section when `anova` is
/// non-empty).
pub fn render_markdown(rows: &[SweepResult], anova: &[AnovaResult]) -> String {
    let mut out = String::from("# Results\n\n");
    let _ = write!(out, "| Aug | Soft | Pct | Status |");
    for c in METRIC_COLUMNS {
        let _ = write!(out, " {c} |");
    }
    out.push('\n');
    out.push_str("|---|---|---|---|");
    for _ in METRIC_COLUMNS {
        out.push_str("---:|");
    }
    out.push('\n');
    let maxima: Vec<Option<String>> = METRIC_COLUMNS.iter().map(|c| column_max(rows, c)).collect();
    let yn = |b: bool| if b { "Y" } else { "N" };
    for r in rows {
        let status = match r.status {
            RowStatus::Ok => "ok",
            RowStatus::Failed => "failed",
        };
        let _ = write!(out, "| {} | {} | {} | {} |", yn(r.aug), yn(r.soft), r.pct, status);
        for (c, max) in METRIC_COLUMNS.iter().zip(&maxima) {
            let cell = fmt3(r.metric(c).expect("known column"));
            if r.status == RowStatus::Ok && max.as_deref() == Some(cell.as_str()) {
                let _ = write!(out, " **{cell}** |");
            } else {
                let _ = write!(out, " {cell} |");
            }
        }
        out.push('\n');
    }
    if !anova.is_empty() {
        out.push_str("\n## ANOVA (main effects)\n\n");
        out.push_str("| Metric | Factor | df | F | p | eta_sq |\n|---|---|---:|---:|---:|---:|\n");
        for a in anova {
            for e in &a.effects {
                let _ = writeln!(
                    out,
                    "| {} | {} | {}, {} | {} | {} | {} |",
                    a.metric,
                    e.factor.name(),
                    e.df,
                    a.df_error,
                    fmt3(Some(e.f)),
                    fmt_p(e.p),
                    fmt3(Some(e.eta_sq)),
                );
            }
            if a.degenerate {
                let _ = writeln!(out, "| {} | (zero variance) | | | | |", a.metric);
            }
        }
    }
    out
}

/// Writes `results.csv` and `results.md` into `dir`.
pub fn emit_report(rows: &[SweepResult], anova: &[AnovaResult], dir: impl AsRef<Path>) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        csv: dir.join("results.csv"),
        markdown: dir.join("results.md"),
    };
    write_results(&files.csv, rows)?;
    std::fs::write(&files.markdown, render_markdown(rows, anova)).map_err(|e| Error::io(&files.markdown, e))?;
    Ok(files)
}
