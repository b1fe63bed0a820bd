//! Analysis artifacts: the per-concept CSV table, the top-N diff report,
//! SVG charts, and the run manifest. All outputs are byte-deterministic for
//! fixed inputs.

mod svg;

pub use svg::{
    emit_tv_chart, emit_within_across_chart, render_tv_chart, render_within_across_chart,
};

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::StyleComparison;

/// Provenance and scale of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub run_seed: u64,
    pub model_ids: Vec<String>,
    pub concepts_original: usize,
    pub concepts_retained: usize,
    pub eliminated_labels: Vec<String>,
    pub identify_cells: usize,
    pub attribute_cells: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Rounds to `digits` significant digits and prints the shortest
/// representation, so 1.0 prints as "1" and 20/3 as "6.66667".
pub fn format_significant(x: f64, digits: u32) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - exponent);
    let rounded = (x * scale).round() / scale;
    format!("{rounded}")
}

fn format_p_value(p: f64) -> String {
    if p < 1e-12 {
        "<1e-12".into()
    } else {
        format_significant(p, 6)
    }
}

fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// Renders the per-concept comparison table. Rows are sorted by model id,
/// then concept label. Numeric fields carry six significant digits;
/// p-values below 1e-12 print as "<1e-12".
pub fn render_concept_table(comparisons: &[StyleComparison]) -> Result<String> {
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for c in comparisons {
        if !seen.insert((c.concept_id.clone(), c.model_id.clone())) {
            return Err(Error::Validation(format!(
                "duplicate comparison row for ({}, {})",
                c.concept_id, c.model_id
            )));
        }
    }
    let mut rows: Vec<&StyleComparison> = comparisons.iter().collect();
    rows.sort_by(|a, b| {
        a.model_id
            .cmp(&b.model_id)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.concept_id.cmp(&b.concept_id))
    });

    let mut out = String::from(
        "concept,category,model,tv,chi2,df,p_value,k_effective,n_functional,n_decorative\n",
    );
    for c in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&c.label),
            c.category,
            csv_field(&c.model_id),
            format_significant(c.tv, 6),
            format_significant(c.chi2, 6),
            c.df,
            format_p_value(c.p_value),
            c.k_effective,
            c.n_functional,
            c.n_decorative,
        ));
    }
    Ok(out)
}

pub fn emit_concept_table(comparisons: &[StyleComparison], path: &Path) -> Result<()> {
    let table = render_concept_table(comparisons)?;
    fs::write(path, table).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopNEntry {
    concept: String,
    concept_id: String,
    model: String,
    top_functional: Vec<(String, u64)>,
    top_decorative: Vec<(String, u64)>,
    only_functional: Vec<String>,
    only_decorative: Vec<String>,
    stable: bool,
}

/// Renders the top-N report: per (concept, model) the full ranked top-N for
/// each style, the two difference sets, and a stability flag, plus a count
/// of differing concepts per model.
pub fn render_top_n_report(comparisons: &[StyleComparison]) -> Result<String> {
    let mut rows: Vec<&StyleComparison> = comparisons.iter().collect();
    rows.sort_by(|a, b| {
        a.model_id
            .cmp(&b.model_id)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| a.concept_id.cmp(&b.concept_id))
    });
    let entries: Vec<TopNEntry> = rows
        .iter()
        .map(|c| TopNEntry {
            concept: c.label.clone(),
            concept_id: c.concept_id.clone(),
            model: c.model_id.clone(),
            top_functional: c.top_functional.clone(),
            top_decorative: c.top_decorative.clone(),
            only_functional: c.top_n_diff.only_functional.clone(),
            only_decorative: c.top_n_diff.only_decorative.clone(),
            stable: c.top_n_diff.is_stable(),
        })
        .collect();

    let mut differing: std::collections::BTreeMap<String, usize> = Default::default();
    let mut totals: std::collections::BTreeMap<String, usize> = Default::default();
    for entry in &entries {
        *totals.entry(entry.model.clone()).or_default() += 1;
        if !entry.stable {
            *differing.entry(entry.model.clone()).or_default() += 1;
        }
    }
    let summary: Vec<serde_json::Value> = totals
        .iter()
        .map(|(model, total)| {
            serde_json::json!({
                "model": model,
                "concepts": total,
                "differing": differing.get(model).copied().unwrap_or(0),
            })
        })
        .collect();

    let doc = serde_json::json!({
        "summary": summary,
        "entries": entries,
    });
    serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Validation(format!("top-n report serialization: {e}")))
}

pub fn emit_top_n_report(comparisons: &[StyleComparison], path: &Path) -> Result<()> {
    let text = render_top_n_report(comparisons)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
