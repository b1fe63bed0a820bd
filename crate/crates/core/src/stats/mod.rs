//! Distributional comparison of attribute terms between the two styles:
//! empirical term distributions, total variation distance, chi-squared
//! homogeneity with low-frequency merging, per-font within/across-style
//! averages, and top-N ranking diffs.

mod contingency;
mod gamma;

pub use contingency::{
    chi_squared_homogeneity, merge_low_freq, Chi2Outcome, ContingencyTable, OTHER_BIN,
};
pub use gamma::chi2_upper_tail;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stimulus::{Category, StyleFamily};

/// Identifies the slice of the experiment a distribution was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub concept_id: String,
    pub style: StyleFamily,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font: Option<String>,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}", self.concept_id, self.style, self.model_id)?;
        if let Some(font) = &self.font {
            write!(f, ", {font}")?;
        }
        write!(f, ")")
    }
}

/// How term instances are tallied into a distribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// Every emitted term instance counts.
    #[default]
    Occurrence,
    /// A term counts at most once per attribute list.
    PerList,
}

/// Empirical counts and probabilities over a term vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDistribution {
    pub stratum: Stratum,
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl TermDistribution {
    pub fn from_counts(stratum: Stratum, counts: BTreeMap<String, u64>) -> Result<Self> {
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InsufficientData(format!(
                "stratum {stratum} has no terms"
            )));
        }
        Ok(TermDistribution {
            stratum,
            counts,
            total,
        })
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, term: &str) -> u64 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn probability(&self, term: &str) -> f64 {
        self.count(term) as f64 / self.total as f64
    }

    /// Terms ranked by count descending, ties lexicographic ascending.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut terms: Vec<(&str, u64)> =
            self.counts.iter().map(|(t, &c)| (t.as_str(), c)).collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        terms
    }
}

/// Tallies the term lists of one stratum into a distribution.
pub fn build_distribution(
    stratum: Stratum,
    lists: &[Vec<String>],
    mode: CountingMode,
) -> Result<TermDistribution> {
    if lists.is_empty() {
        return Err(Error::InsufficientData(format!(
            "stratum {stratum} has no attribute lists"
        )));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for list in lists {
        match mode {
            CountingMode::Occurrence => {
                for term in list {
                    *counts.entry(term.clone()).or_default() += 1;
                }
            }
            CountingMode::PerList => {
                let unique: BTreeSet<&String> = list.iter().collect();
                for term in unique {
                    *counts.entry(term.clone()).or_default() += 1;
                }
            }
        }
    }
    TermDistribution::from_counts(stratum, counts)
}

/// The union of two strata's supports, ordered by combined count descending,
/// ties lexicographic ascending.
pub fn shared_vocabulary(p: &TermDistribution, q: &TermDistribution) -> Vec<String> {
    let mut combined: BTreeMap<&str, u64> = BTreeMap::new();
    for (term, &c) in p.counts() {
        *combined.entry(term).or_default() += c;
    }
    for (term, &c) in q.counts() {
        *combined.entry(term).or_default() += c;
    }
    let mut terms: Vec<(&str, u64)> = combined.into_iter().collect();
    terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    terms.into_iter().map(|(t, _)| t.to_string()).collect()
}

/// Total variation distance over the shared vocabulary:
/// half the L1 difference of the two probability vectors.
pub fn tv_distance(p: &TermDistribution, q: &TermDistribution) -> Result<f64> {
    if p.total() == 0 || q.total() == 0 {
        return Err(Error::InsufficientData("zero-total distribution".into()));
    }
    let mut sum = 0.0f64;
    for term in shared_vocabulary(p, q) {
        sum += (p.probability(&term) - q.probability(&term)).abs();
    }
    Ok(sum / 2.0)
}

/// Terms in one style's top-N ranking but not the other's.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopNDiff {
    pub only_functional: Vec<String>,
    pub only_decorative: Vec<String>,
    /// Set when a vocabulary had fewer than N terms, in which case the two
    /// difference sets may have unequal sizes.
    pub short_vocabulary: bool,
}

impl TopNDiff {
    pub fn is_stable(&self) -> bool {
        self.only_functional.is_empty() && self.only_decorative.is_empty()
    }
}

/// Compares the top-`n` rankings of the two distributions. Each side is
/// ranked count descending, ties lexicographic ascending; the returned
/// difference sets preserve ranking order.
pub fn top_n_diff(p: &TermDistribution, q: &TermDistribution, n: usize) -> Result<TopNDiff> {
    if n == 0 {
        return Err(Error::Validation("top-n requires n >= 1".into()));
    }
    let top_p: Vec<&str> = p.ranked().into_iter().take(n).map(|(t, _)| t).collect();
    let top_q: Vec<&str> = q.ranked().into_iter().take(n).map(|(t, _)| t).collect();
    let set_p: BTreeSet<&str> = top_p.iter().copied().collect();
    let set_q: BTreeSet<&str> = top_q.iter().copied().collect();
    Ok(TopNDiff {
        only_functional: top_p
            .iter()
            .filter(|t| !set_q.contains(**t))
            .map(|t| t.to_string())
            .collect(),
        only_decorative: top_q
            .iter()
            .filter(|t| !set_p.contains(**t))
            .map(|t| t.to_string())
            .collect(),
        short_vocabulary: top_p.len() < n || top_q.len() < n,
    })
}

/// Average pairwise TV distances between per-font distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinAcrossTv {
    pub within_functional: f64,
    pub within_decorative: f64,
    pub across: f64,
    pub within_functional_pairs: usize,
    pub within_decorative_pairs: usize,
    pub across_pairs: usize,
}

/// Computes within-style and across-style average pairwise TV distances from
/// one distribution per (style, font).
pub fn within_across_tv(
    per_font: &BTreeMap<(StyleFamily, String), TermDistribution>,
) -> Result<WithinAcrossTv> {
    let mut functional: Vec<(&String, &TermDistribution)> = Vec::new();
    let mut decorative: Vec<(&String, &TermDistribution)> = Vec::new();
    for ((style, font), dist) in per_font {
        if dist.total() == 0 {
            return Err(Error::InsufficientData(format!(
                "font '{font}' has a zero-total distribution"
            )));
        }
        match style {
            StyleFamily::Functional => functional.push((font, dist)),
            StyleFamily::Decorative => decorative.push((font, dist)),
        }
    }
    for (style, fonts) in [
        (StyleFamily::Functional, &functional),
        (StyleFamily::Decorative, &decorative),
    ] {
        if fonts.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "style '{style}' contributes {} font(s); need at least 2",
                fonts.len()
            )));
        }
    }

    let mean_within = |fonts: &[(&String, &TermDistribution)]| -> Result<(f64, usize)> {
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for i in 0..fonts.len() {
            for j in (i + 1)..fonts.len() {
                sum += tv_distance(fonts[i].1, fonts[j].1)?;
                pairs += 1;
            }
        }
        Ok((sum / pairs as f64, pairs))
    };
    let (within_functional, within_functional_pairs) = mean_within(&functional)?;
    let (within_decorative, within_decorative_pairs) = mean_within(&decorative)?;

    let mut across_sum = 0.0;
    let mut across_pairs = 0usize;
    for (_, p) in &functional {
        for (_, q) in &decorative {
            across_sum += tv_distance(p, q)?;
            across_pairs += 1;
        }
    }
    Ok(WithinAcrossTv {
        within_functional,
        within_decorative,
        across: across_sum / across_pairs as f64,
        within_functional_pairs,
        within_decorative_pairs,
        across_pairs,
    })
}

/// Per-concept comparison of the functional and decorative distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleComparison {
    pub concept_id: String,
    pub label: String,
    pub category: Category,
    pub model_id: String,
    pub tv: f64,
    pub chi2: f64,
    pub df: u32,
    pub p_value: f64,
    pub k_effective: usize,
    pub n_functional: u64,
    pub n_decorative: u64,
    pub low_expected_warning: bool,
    pub top_functional: Vec<(String, u64)>,
    pub top_decorative: Vec<(String, u64)>,
    pub top_n_diff: TopNDiff,
}

/// Runs the full per-concept comparison: TV distance, tau-merged chi-squared
/// homogeneity, and the top-N ranking diff.
pub fn compare_styles(
    label: &str,
    category: Category,
    functional: &TermDistribution,
    decorative: &TermDistribution,
    tau: u64,
    top_n: usize,
) -> Result<StyleComparison> {
    let tv = tv_distance(functional, decorative)?;
    let table = merge_low_freq(functional.counts(), decorative.counts(), tau)?;
    let chi2 = chi_squared_homogeneity(&table)?;
    let diff = top_n_diff(functional, decorative, top_n)?;
    let rank_head = |d: &TermDistribution| -> Vec<(String, u64)> {
        d.ranked()
            .into_iter()
            .take(top_n)
            .map(|(t, c)| (t.to_string(), c))
            .collect()
    };
    Ok(StyleComparison {
        concept_id: functional.stratum.concept_id.clone(),
        label: label.to_string(),
        category,
        model_id: functional.stratum.model_id.clone(),
        tv,
        chi2: chi2.statistic,
        df: chi2.df,
        p_value: chi2.p_value,
        k_effective: table.column_count(),
        n_functional: functional.total(),
        n_decorative: decorative.total(),
        low_expected_warning: chi2.low_expected,
        top_functional: rank_head(functional),
        top_decorative: rank_head(decorative),
        top_n_diff: diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stratum(style: StyleFamily) -> Stratum {
        Stratum {
            concept_id: "bengal".into(),
            style,
            model_id: "mock".into(),
            font: None,
        }
    }

    fn dist(pairs: &[(&str, u64)]) -> TermDistribution {
        let counts: BTreeMap<String, u64> =
            pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect();
        TermDistribution::from_counts(stratum(StyleFamily::Functional), counts).unwrap()
    }

    #[test]
    fn occurrence_counting_tallies_every_instance() {
        let lists = vec![
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string()],
        ];
        let d = build_distribution(
            stratum(StyleFamily::Functional),
            &lists,
            CountingMode::Occurrence,
        )
        .unwrap();
        assert_eq!(d.count("a"), 2);
        assert_eq!(d.count("b"), 1);
        assert_eq!(d.total(), 3);
    }

    #[test]
    fn per_list_counting_dedups_within_lists() {
        let lists = vec![vec!["a".to_string(), "a".to_string(), "b".to_string()]];
        let d = build_distribution(
            stratum(StyleFamily::Functional),
            &lists,
            CountingMode::PerList,
        )
        .unwrap();
        assert_eq!(d.count("a"), 1);
        assert_eq!(d.total(), 2);
    }

    #[test]
    fn empty_stratum_is_an_error() {
        let err = build_distribution(
            stratum(StyleFamily::Functional),
            &[],
            CountingMode::Occurrence,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        let err = build_distribution(
            stratum(StyleFamily::Functional),
            &[Vec::new()],
            CountingMode::Occurrence,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn tv_identity_and_disjoint_extremes() {
        let p = dist(&[("a", 2), ("b", 2)]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        let q = dist(&[("c", 4)]);
        assert_eq!(tv_distance(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn tv_hand_computed_quarter() {
        let p = dist(&[("a", 2), ("b", 2)]);
        let q = dist(&[("a", 1), ("b", 3)]);
        assert!((tv_distance(&p, &q).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tv_is_count_scale_invariant_unlike_chi2() {
        let p = dist(&[("a", 20), ("b", 10)]);
        let q = dist(&[("a", 10), ("b", 20)]);
        let p2 = dist(&[("a", 40), ("b", 20)]);
        let q2 = dist(&[("a", 20), ("b", 40)]);
        assert!((tv_distance(&p, &q).unwrap() - tv_distance(&p2, &q2).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn shared_vocabulary_is_union_ordered_by_combined_count() {
        let p = dist(&[("a", 5), ("b", 1)]);
        let q = dist(&[("b", 1), ("c", 3)]);
        assert_eq!(shared_vocabulary(&p, &q), vec!["a", "c", "b"]);
    }

    #[test]
    fn top_n_diff_example() {
        let p = dist(&[("loyal", 100), ("playful", 90), ("small", 80), ("calm", 10)]);
        let q = dist(&[("loyal", 95), ("playful", 85), ("calm", 80), ("small", 9)]);
        let diff = top_n_diff(&p, &q, 3).unwrap();
        assert_eq!(diff.only_functional, vec!["small"]);
        assert_eq!(diff.only_decorative, vec!["calm"]);
        assert!(!diff.short_vocabulary);
    }

    #[test]
    fn top_n_diff_identical_rankings_are_stable() {
        let p = dist(&[("a", 5), ("b", 4)]);
        let diff = top_n_diff(&p, &p, 3).unwrap();
        assert!(diff.is_stable());
        assert!(diff.short_vocabulary);
    }

    #[test]
    fn top_n_tie_breaks_lexicographically() {
        let p = dist(&[("zeta", 5), ("alpha", 5), ("mid", 7)]);
        let ranked = p.ranked();
        assert_eq!(ranked[0].0, "mid");
        assert_eq!(ranked[1].0, "alpha");
        assert_eq!(ranked[2].0, "zeta");
    }

    #[test]
    fn within_across_pair_counts_follow_the_counting_law() {
        let mut per_font: BTreeMap<(StyleFamily, String), TermDistribution> = BTreeMap::new();
        for i in 0..8 {
            per_font.insert(
                (StyleFamily::Functional, format!("f{i}")),
                dist(&[("a", 1 + i as u64)]),
            );
            per_font.insert(
                (StyleFamily::Decorative, format!("d{i}")),
                dist(&[("a", 1 + i as u64)]),
            );
        }
        let out = within_across_tv(&per_font).unwrap();
        assert_eq!(out.within_functional_pairs, 28);
        assert_eq!(out.within_decorative_pairs, 28);
        assert_eq!(out.across_pairs, 64);
        // All distributions are the single point mass on "a".
        assert_eq!(out.within_functional, 0.0);
        assert_eq!(out.across, 0.0);
    }

    #[test]
    fn within_across_requires_two_fonts_per_style() {
        let mut per_font: BTreeMap<(StyleFamily, String), TermDistribution> = BTreeMap::new();
        per_font.insert((StyleFamily::Functional, "f0".into()), dist(&[("a", 1)]));
        per_font.insert((StyleFamily::Functional, "f1".into()), dist(&[("a", 1)]));
        per_font.insert((StyleFamily::Decorative, "d0".into()), dist(&[("a", 1)]));
        let err = within_across_tv(&per_font).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn scripted_shift_yields_zero_within_and_analytic_across() {
        let mut per_font: BTreeMap<(StyleFamily, String), TermDistribution> = BTreeMap::new();
        for i in 0..4 {
            per_font.insert(
                (StyleFamily::Functional, format!("f{i}")),
                dist(&[("loyal", 1), ("playful", 1), ("small", 1)]),
            );
            per_font.insert(
                (StyleFamily::Decorative, format!("d{i}")),
                dist(&[("loyal", 1), ("playful", 1), ("calm", 1)]),
            );
        }
        let out = within_across_tv(&per_font).unwrap();
        assert_eq!(out.within_functional, 0.0);
        assert_eq!(out.within_decorative, 0.0);
        assert!((out.across - 1.0 / 3.0).abs() < 1e-15);
    }

    // Brute-force half-L1 oracle over the union support.
    fn tv_oracle(p: &TermDistribution, q: &TermDistribution) -> f64 {
        let mut support: BTreeSet<&String> = p.counts().keys().collect();
        support.extend(q.counts().keys());
        support
            .into_iter()
            .map(|t| (p.probability(t) - q.probability(t)).abs())
            .sum::<f64>()
            / 2.0
    }

    fn arb_counts() -> impl Strategy<Value = BTreeMap<String, u64>> {
        prop::collection::btree_map("[a-e]", 1u64..50, 1..6)
    }

    proptest! {
        #[test]
        fn tv_matches_oracle_and_axioms(a in arb_counts(), b in arb_counts(), c in arb_counts()) {
            let p = TermDistribution::from_counts(stratum(StyleFamily::Functional), a).unwrap();
            let q = TermDistribution::from_counts(stratum(StyleFamily::Decorative), b).unwrap();
            let r = TermDistribution::from_counts(stratum(StyleFamily::Decorative), c).unwrap();
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((pq - tv_oracle(&p, &q)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() <= 1e-15);
            let pr = tv_distance(&p, &r).unwrap();
            let qr = tv_distance(&q, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-12);
        }

        #[test]
        fn merge_conserves_row_sums(a in arb_counts(), b in arb_counts(), tau in 0u64..30) {
            let totals = (a.values().sum::<u64>(), b.values().sum::<u64>());
            if let Ok(table) = merge_low_freq(&a, &b, tau) {
                prop_assert_eq!(table.row_sums(), totals);
                // Every surviving real column meets the threshold.
                for (j, label) in table.labels.iter().enumerate() {
                    if label != OTHER_BIN {
                        prop_assert!(table.functional[j] + table.decorative[j] >= tau);
                    }
                }
            }
        }
    }
}
