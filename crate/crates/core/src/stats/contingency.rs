//! The 2xK contingency table with low-frequency merging, and Pearson's
//! chi-squared test for homogeneity of its two rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::gamma::chi2_upper_tail;
use crate::error::{Error, Result};

/// Reserved label for the merged low-frequency bin.
pub const OTHER_BIN: &str = "\u{27E8}OTHER\u{27E9}";

/// A 2xK table: row 0 functional, row 1 decorative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub labels: Vec<String>,
    pub functional: Vec<u64>,
    pub decorative: Vec<u64>,
    pub tau: u64,
}

impl ContingencyTable {
    pub fn column_count(&self) -> usize {
        self.labels.len()
    }

    pub fn row_sums(&self) -> (u64, u64) {
        (self.functional.iter().sum(), self.decorative.iter().sum())
    }
}

/// Merges every term whose combined two-row count is strictly below `tau`
/// into the reserved bin. `tau = 0` merges nothing. Column order is combined
/// count descending, ties lexicographic, with the bin last.
pub fn merge_low_freq(
    functional: &BTreeMap<String, u64>,
    decorative: &BTreeMap<String, u64>,
    tau: u64,
) -> Result<ContingencyTable> {
    let mut combined: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (term, &count) in functional {
        combined.entry(term).or_default().0 += count;
    }
    for (term, &count) in decorative {
        combined.entry(term).or_default().1 += count;
    }
    combined.retain(|_, (f, d)| *f + *d > 0);

    let mut kept: Vec<(&str, u64, u64)> = Vec::new();
    let mut other = (0u64, 0u64);
    let mut other_seen = false;
    for (term, (f, d)) in &combined {
        if f + d < tau {
            other.0 += f;
            other.1 += d;
            other_seen = true;
        } else {
            kept.push((term, *f, *d));
        }
    }
    kept.sort_by(|a, b| (b.1 + b.2).cmp(&(a.1 + a.2)).then_with(|| a.0.cmp(b.0)));

    let mut labels: Vec<String> = kept
        .iter()
        .map(|(term, _, _)| {
            // A real term colliding with the reserved label is escaped.
            if *term == OTHER_BIN {
                format!("\\{term}")
            } else {
                (*term).to_string()
            }
        })
        .collect();
    let mut f_row: Vec<u64> = kept.iter().map(|(_, f, _)| *f).collect();
    let mut d_row: Vec<u64> = kept.iter().map(|(_, _, d)| *d).collect();
    if other_seen {
        labels.push(OTHER_BIN.to_string());
        f_row.push(other.0);
        d_row.push(other.1);
    }

    if labels.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "contingency table has {} column(s) after merging with tau={tau}",
            labels.len()
        )));
    }
    Ok(ContingencyTable {
        labels,
        functional: f_row,
        decorative: d_row,
        tau,
    })
}

/// Outcome of the homogeneity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Outcome {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    /// Some expected cell stayed below 5 even after merging.
    pub low_expected: bool,
}

/// Pearson's chi-squared test that the two rows come from one distribution.
pub fn chi_squared_homogeneity(table: &ContingencyTable) -> Result<Chi2Outcome> {
    let k = table.column_count();
    if k < 2 {
        return Err(Error::InsufficientData(
            "chi-squared test needs at least 2 columns".into(),
        ));
    }
    if table.functional.len() != k || table.decorative.len() != k {
        return Err(Error::Validation("ragged contingency table".into()));
    }
    let (row_f, row_d) = table.row_sums();
    if row_f == 0 || row_d == 0 {
        return Err(Error::Validation(
            "contingency table has an empty row".into(),
        ));
    }
    let grand = (row_f + row_d) as f64;

    let mut statistic = 0.0f64;
    let mut low_expected = false;
    for j in 0..k {
        let col = table.functional[j] + table.decorative[j];
        if col == 0 {
            return Err(Error::Validation(format!(
                "contingency column '{}' has zero total",
                table.labels[j]
            )));
        }
        for (row_total, observed) in [(row_f, table.functional[j]), (row_d, table.decorative[j])] {
            let expected = (row_total as f64) * (col as f64) / grand;
            if expected < 5.0 {
                low_expected = true;
            }
            let diff = observed as f64 - expected;
            // O == E contributes exactly zero; avoids -0.0 artifacts.
            if diff != 0.0 {
                statistic += diff * diff / expected;
            }
        }
    }

    let df = (k - 1) as u32;
    let p_value = chi2_upper_tail(statistic, df)?;
    Ok(Chi2Outcome {
        statistic,
        df,
        p_value,
        low_expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    fn table(f: &[u64], d: &[u64]) -> ContingencyTable {
        ContingencyTable {
            labels: (0..f.len()).map(|i| format!("t{i}")).collect(),
            functional: f.to_vec(),
            decorative: d.to_vec(),
            tau: 0,
        }
    }

    #[test]
    fn merge_example_from_hand_application() {
        let f = counts(&[("a", 10), ("b", 2), ("c", 1)]);
        let d = counts(&[("a", 8), ("b", 1), ("c", 0)]);
        let t = merge_low_freq(&f, &d, 5).unwrap();
        assert_eq!(t.labels, vec!["a".to_string(), OTHER_BIN.to_string()]);
        assert_eq!(t.functional, vec![10, 3]);
        assert_eq!(t.decorative, vec![8, 1]);
    }

    #[test]
    fn tau_zero_is_identity() {
        let f = counts(&[("a", 3), ("b", 1)]);
        let d = counts(&[("a", 2), ("c", 1)]);
        let t = merge_low_freq(&f, &d, 0).unwrap();
        assert!(!t.labels.contains(&OTHER_BIN.to_string()));
        assert_eq!(t.labels.len(), 3);
        let (rf, rd) = t.row_sums();
        assert_eq!((rf, rd), (4, 3));
    }

    #[test]
    fn all_merged_is_insufficient_data() {
        let f = counts(&[("a", 1), ("b", 1)]);
        let d = counts(&[("a", 1)]);
        let err = merge_low_freq(&f, &d, 100).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn reserved_label_collision_is_escaped() {
        let f = counts(&[(OTHER_BIN, 10), ("b", 1)]);
        let d = counts(&[(OTHER_BIN, 10), ("b", 1)]);
        let t = merge_low_freq(&f, &d, 5).unwrap();
        assert_eq!(t.labels[0], format!("\\{OTHER_BIN}"));
        assert_eq!(t.labels[1], OTHER_BIN);
    }

    #[test]
    fn homogeneous_table_scores_zero() {
        let out = chi_squared_homogeneity(&table(&[10, 10], &[10, 10])).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.df, 1);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn hand_computed_statistic() {
        let out = chi_squared_homogeneity(&table(&[20, 10], &[10, 20])).unwrap();
        assert!((out.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.df, 1);
        assert!((out.p_value - 0.00982).abs() < 1e-4, "p={}", out.p_value);
    }

    #[test]
    fn proportional_rows_score_zero() {
        let out = chi_squared_homogeneity(&table(&[10, 20], &[20, 40])).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn scaling_counts_scales_the_statistic() {
        let base = chi_squared_homogeneity(&table(&[20, 10], &[10, 20])).unwrap();
        let doubled = chi_squared_homogeneity(&table(&[40, 20], &[20, 40])).unwrap();
        assert!((doubled.statistic - 2.0 * base.statistic).abs() < 1e-9);
    }

    #[test]
    fn zero_column_rejected() {
        let err = chi_squared_homogeneity(&table(&[0, 10], &[0, 20])).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn low_expected_count_flagged() {
        let out = chi_squared_homogeneity(&table(&[4, 100], &[3, 100])).unwrap();
        assert!(out.low_expected);
    }
}
