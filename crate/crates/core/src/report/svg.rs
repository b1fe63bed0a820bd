//! SVG bar charts, assembled by string building so tests can assert on the
//! emitted elements and the bytes stay deterministic.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::{StyleComparison, WithinAcrossTv};
use crate::stimulus::Category;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 110.0;

const COLOR_DOG: &str = "#1f77b4";
const COLOR_CAT: &str = "#ff7f0e";
const COLOR_AXIS: &str = "#333333";
const COLOR_GRID: &str = "#dddddd";

const COLOR_WITHIN_FUNCTIONAL: &str = "#66c2a5";
const COLOR_WITHIN_DECORATIVE: &str = "#fc8d62";
const COLOR_ACROSS: &str = "#8da0cb";

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn chart_frame(title: &str, y_label: &str) -> String {
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    svg.push_str(&format!(
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    ));
    svg.push_str(&format!(
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-family="sans-serif" font-size="16" fill="{COLOR_AXIS}">{}</text>"#,
        WIDTH / 2.0,
        escape_xml(title)
    ));
    // Y axis with ticks at 0, 0.25, ..., 1 (TV is always in [0, 1]).
    for i in 0..=4 {
        let value = i as f64 / 4.0;
        let y = MARGIN_TOP + plot_h - value * plot_h;
        svg.push_str(&format!(
            r#"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{COLOR_GRID}" stroke-width="1"/>"#,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11" fill="{COLOR_AXIS}">{value:.2}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{:.2}" stroke="{COLOR_AXIS}" stroke-width="1.5"/>"#,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        r#"<line x1="{MARGIN_LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{COLOR_AXIS}" stroke-width="1.5"/>"#,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" fill="{COLOR_AXIS}" transform="rotate(-90 16 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape_xml(y_label)
    ));
    svg
}

/// One bar per concept in alphabetical label order, dog bars blue and cat
/// bars orange, y axis TV in [0, 1].
pub fn render_tv_chart(comparisons: &[StyleComparison], model_id: &str) -> String {
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut rows: Vec<&StyleComparison> = comparisons
        .iter()
        .filter(|c| c.model_id == model_id)
        .collect();
    rows.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then_with(|| a.concept_id.cmp(&b.concept_id))
    });

    let mut svg = chart_frame(
        &format!("TV distance between styles per concept ({model_id})"),
        "TV distance",
    );
    if !rows.is_empty() {
        let slot = plot_w / rows.len() as f64;
        let bar_w = (slot * 0.7).min(48.0);
        for (i, row) in rows.iter().enumerate() {
            let x = MARGIN_LEFT + slot * i as f64 + (slot - bar_w) / 2.0;
            let h = row.tv.clamp(0.0, 1.0) * plot_h;
            let y = MARGIN_TOP + plot_h - h;
            let fill = match row.category {
                Category::Dog => COLOR_DOG,
                Category::Cat => COLOR_CAT,
            };
            svg.push_str(&format!(
                r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{fill}"/>"#
            ));
            let label_x = MARGIN_LEFT + slot * i as f64 + slot / 2.0;
            let label_y = MARGIN_TOP + plot_h + 12.0;
            svg.push_str(&format!(
                r#"<text x="{label_x:.2}" y="{label_y:.2}" text-anchor="end" font-family="sans-serif" font-size="10" fill="{COLOR_AXIS}" transform="rotate(-55 {label_x:.2} {label_y:.2})">{}</text>"#,
                escape_xml(&row.label)
            ));
        }
    }
    svg.push_str("</svg>");
    svg
}

pub fn emit_tv_chart(comparisons: &[StyleComparison], model_id: &str, path: &Path) -> Result<()> {
    fs::write(path, render_tv_chart(comparisons, model_id)).map_err(|e| Error::io(path, e))
}

/// Grouped bars per model: within-functional, within-decorative, and
/// across-style average pairwise TV, with a legend.
pub fn render_within_across_chart(triples: &[(String, WithinAcrossTv)]) -> String {
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let mut rows: Vec<&(String, WithinAcrossTv)> = triples.iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let mut svg = chart_frame(
        "Average pairwise TV distance within and across styles",
        "average TV",
    );
    let legend = [
        ("within functional", COLOR_WITHIN_FUNCTIONAL),
        ("within decorative", COLOR_WITHIN_DECORATIVE),
        ("across styles", COLOR_ACROSS),
    ];
    for (i, (name, color)) in legend.iter().enumerate() {
        let x = MARGIN_LEFT + 12.0 + i as f64 * 170.0;
        svg.push_str(&format!(
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            MARGIN_TOP - 16.0
        ));
        svg.push_str(&format!(
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{COLOR_AXIS}">{name}</text>"#,
            x + 16.0,
            MARGIN_TOP - 6.0
        ));
    }
    if !rows.is_empty() {
        let slot = plot_w / rows.len() as f64;
        let bar_w = (slot * 0.2).min(42.0);
        for (i, (model, tv)) in rows.iter().enumerate() {
            let values = [
                (tv.within_functional, COLOR_WITHIN_FUNCTIONAL),
                (tv.within_decorative, COLOR_WITHIN_DECORATIVE),
                (tv.across, COLOR_ACROSS),
            ];
            let group_w = bar_w * 3.0 + 8.0;
            let base_x = MARGIN_LEFT + slot * i as f64 + (slot - group_w) / 2.0;
            for (j, (value, color)) in values.iter().enumerate() {
                let x = base_x + j as f64 * (bar_w + 4.0);
                let h = value.clamp(0.0, 1.0) * plot_h;
                let y = MARGIN_TOP + plot_h - h;
                svg.push_str(&format!(
                    r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}"/>"#
                ));
            }
            svg.push_str(&format!(
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" fill="{COLOR_AXIS}">{}</text>"#,
                MARGIN_LEFT + slot * i as f64 + slot / 2.0,
                MARGIN_TOP + plot_h + 18.0,
                escape_xml(model)
            ));
        }
    }
    svg.push_str("</svg>");
    svg
}

pub fn emit_within_across_chart(triples: &[(String, WithinAcrossTv)], path: &Path) -> Result<()> {
    fs::write(path, render_within_across_chart(triples)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::TopNDiff;

    fn comparison(label: &str, category: Category, tv: f64) -> StyleComparison {
        StyleComparison {
            concept_id: label.to_lowercase(),
            label: label.to_string(),
            category,
            model_id: "m".into(),
            tv,
            chi2: 0.0,
            df: 1,
            p_value: 1.0,
            k_effective: 2,
            n_functional: 10,
            n_decorative: 10,
            low_expected_warning: false,
            top_functional: Vec::new(),
            top_decorative: Vec::new(),
            top_n_diff: TopNDiff::default(),
        }
    }

    fn bars(svg: &str) -> Vec<&str> {
        svg.match_indices("<rect class=\"bar\"")
            .map(|(i, _)| {
                let end = svg[i..].find("/>").map(|e| i + e).unwrap_or(svg.len());
                &svg[i..end]
            })
            .collect()
    }

    #[test]
    fn one_bar_per_concept_with_category_colors() {
        let rows = vec![
            comparison("Bengal", Category::Cat, 0.3),
            comparison("Pug", Category::Dog, 0.5),
        ];
        let svg = render_tv_chart(&rows, "m");
        let bars = bars(&svg);
        assert_eq!(bars.len(), 2);
        assert!(bars[0].contains(COLOR_CAT));
        assert!(bars[1].contains(COLOR_DOG));
    }

    #[test]
    fn bars_span_the_full_axis_range() {
        let rows = vec![
            comparison("A", Category::Cat, 0.0),
            comparison("B", Category::Dog, 1.0),
        ];
        let svg = render_tv_chart(&rows, "m");
        let bars = bars(&svg);
        assert!(bars[0].contains(r#"height="0.00""#));
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        assert!(bars[1].contains(&format!(r#"height="{plot_h:.2}""#)));
    }

    #[test]
    fn empty_chart_keeps_axes_only() {
        let svg = render_tv_chart(&[], "m");
        assert!(bars(&svg).is_empty());
        assert!(svg.contains("<line"));
        assert!(svg.ends_with("</svg>"));
    }

    #[test]
    fn within_across_groups_per_model() {
        let zero = WithinAcrossTv {
            within_functional: 0.0,
            within_decorative: 0.0,
            across: 0.0,
            within_functional_pairs: 28,
            within_decorative_pairs: 28,
            across_pairs: 64,
        };
        let shifted = WithinAcrossTv {
            across: 1.0 / 3.0,
            ..zero
        };
        let svg = render_within_across_chart(&[("a".into(), zero), ("b".into(), shifted)]);
        let bars = bars(&svg);
        assert_eq!(bars.len(), 6);
        // Model b's across bar is the only non-zero bar.
        let nonzero: Vec<&&str> = bars
            .iter()
            .filter(|b| !b.contains(r#"height="0.00""#))
            .collect();
        assert_eq!(nonzero.len(), 1);
        assert!(nonzero[0].contains(COLOR_ACROSS));
    }

    #[test]
    fn charts_are_byte_deterministic() {
        let rows = vec![comparison("Bengal", Category::Cat, 0.3)];
        assert_eq!(render_tv_chart(&rows, "m"), render_tv_chart(&rows, "m"));
    }
}
