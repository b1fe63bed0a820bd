//! Turns raw attribute-phase replies into normalized term lists.
//!
//! The default extractor is rule-based: split on list structure, normalize
//! each item, and drop items long enough to be explanatory sentences rather
//! than terms. An auxiliary chat endpoint can be put in front of it for
//! models whose raw output is not format-consistent.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelio::{
    cached_query, CellMeta, ChatClient, ChatRequest, Clock, ModelEndpoint, Phase, ResponseCache,
};
use crate::stimulus::StyleFamily;

/// System prompt for the auxiliary extractor endpoint.
pub const EXTRACTOR_SYSTEM_PROMPT: &str = "Act as a text processing system. Extract adjectives \
(or adjective phrases) from the input and output only a single-line list separated by comma. \
No other text.";

/// Term normalization knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationPolicy {
    pub case_fold: bool,
    pub strip_punctuation: bool,
    pub max_words_per_term: usize,
    pub dedup_within_list: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        NormalizationPolicy {
            case_fold: true,
            strip_punctuation: true,
            max_words_per_term: 4,
            dedup_within_list: false,
        }
    }
}

impl NormalizationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_words_per_term < 1 {
            return Err(Error::Config("max_words_per_term must be >= 1".into()));
        }
        Ok(())
    }
}

/// The normalized term list extracted from one attribute-phase response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeList {
    pub stimulus_id: String,
    pub concept_id: String,
    pub style: StyleFamily,
    pub model_id: String,
    pub prompt_id: u32,
    pub rep: u32,
    pub terms: Vec<String>,
}

/// Punctuation stripped from term edges. Internal characters (notably
/// hyphens in terms like "short-haired") are preserved.
const EDGE_PUNCT: &[char] = &[
    '.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '{', '}', '*', '_', '`', '-',
    '\u{2013}', '\u{2014}', '\u{2022}', '#', '>', '<',
];

/// Case-folds, trims, and strips edge punctuation. Idempotent. An empty
/// return means the term is dropped.
pub fn normalize_term(term: &str, policy: &NormalizationPolicy) -> String {
    let mut t = term.trim().to_string();
    if policy.case_fold {
        t = t.to_lowercase();
    }
    if policy.strip_punctuation {
        t = t
            .trim_matches(|c: char| c.is_whitespace() || EDGE_PUNCT.contains(&c))
            .to_string();
    }
    t.trim().to_string()
}

/// Strips a leading list marker: bullets ("-", "*", "+", "•") or numbering
/// ("1.", "2)", "(3)").
fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    for bullet in ["- ", "* ", "+ ", "\u{2022} ", "> "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest;
        }
    }
    // "(3) item"
    if let Some(inner) = t.strip_prefix('(') {
        let digits = inner.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            if let Some(rest) = inner[digits..].strip_prefix(')') {
                return rest.trim_start();
            }
        }
    }
    // "3. item" / "3) item"
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    t
}

/// Splits a raw reply into normalized terms: newline and comma/semicolon
/// separated items with list markers removed, each normalized by the policy.
/// Items longer than `max_words_per_term` words are treated as explanatory
/// sentences and dropped. Empty input yields an empty list.
pub fn extract_rule_based(raw_text: &str, policy: &NormalizationPolicy) -> Vec<String> {
    let mut terms = Vec::new();
    for line in raw_text.lines() {
        let line = strip_list_marker(line);
        for item in line.split([',', ';']) {
            let term = normalize_term(item, policy);
            if term.is_empty() {
                continue;
            }
            if term.split_whitespace().count() > policy.max_words_per_term {
                continue;
            }
            terms.push(term);
        }
    }
    if policy.dedup_within_list {
        let mut seen = std::collections::BTreeSet::new();
        terms.retain(|t| seen.insert(t.clone()));
    }
    terms
}

/// Passes the raw reply through the auxiliary extractor endpoint, then
/// parses the extractor's reply with the rule-based pass. The extractor call
/// is cached like any other query, keyed by the source cell.
pub fn extract_llm(
    raw_text: &str,
    policy: &NormalizationPolicy,
    extractor: &ModelEndpoint,
    client: &dyn ChatClient,
    cache: &ResponseCache,
    source_cell_id: &str,
    clock: &dyn Clock,
) -> Result<Vec<String>> {
    let request = ChatRequest::text_only(EXTRACTOR_SYSTEM_PROMPT, raw_text);
    let cell = CellMeta {
        stimulus: None,
        phase: Phase::Extract,
        prompt_id: 0,
        rep: 0,
    };
    let record = cached_query(
        cache,
        client,
        extractor,
        source_cell_id,
        &cell,
        &request,
        clock,
    )?;
    Ok(extract_rule_based(&record.raw_text, policy))
}

/// Writes attribute lists as JSON lines in the order given.
pub fn write_attribute_lists(lists: &[AttributeList], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for list in lists {
        serde_json::to_writer(&mut buf, list).map_err(|e| Error::Malformed {
            what: "attribute list",
            path: path.into(),
            reason: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_attribute_lists(path: &Path) -> Result<Vec<AttributeList>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lists = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let list: AttributeList = serde_json::from_str(line).map_err(|e| Error::Malformed {
            what: "attribute list line",
            path: path.into(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        lists.push(list);
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy() -> NormalizationPolicy {
        NormalizationPolicy::default()
    }

    #[test]
    fn numbered_list_is_split_and_normalized() {
        let terms = extract_rule_based("1. Playful\n2. Small-sized\n3. Active", &policy());
        assert_eq!(terms, vec!["playful", "small-sized", "active"]);
    }

    #[test]
    fn duplicates_kept_unless_dedup_enabled() {
        let terms = extract_rule_based("loyal, loyal, calm", &policy());
        assert_eq!(terms, vec!["loyal", "loyal", "calm"]);
        let dedup = NormalizationPolicy {
            dedup_within_list: true,
            ..policy()
        };
        assert_eq!(
            extract_rule_based("loyal, loyal, calm", &dedup),
            vec!["loyal", "calm"]
        );
    }

    #[test]
    fn explanatory_sentences_are_dropped() {
        let terms =
            extract_rule_based("This breed is wonderful in every imaginable way", &policy());
        assert!(terms.is_empty());
    }

    #[test]
    fn empty_input_yields_empty_list() {
        assert!(extract_rule_based("", &policy()).is_empty());
        assert!(extract_rule_based("  \n \n", &policy()).is_empty());
    }

    #[test]
    fn markdown_and_bullets_are_stripped() {
        let terms = extract_rule_based("- **Loyal**\n* \"Playful\"\n\u{2022} `calm`", &policy());
        assert_eq!(terms, vec!["loyal", "playful", "calm"]);
    }

    #[test]
    fn semicolons_and_parenthesized_numbers_split() {
        let terms = extract_rule_based("(1) small; compact\n(2) gentle", &policy());
        assert_eq!(terms, vec!["small", "compact", "gentle"]);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_term(" Playful,", &policy()), "playful");
        assert_eq!(normalize_term("short-haired", &policy()), "short-haired");
        assert_eq!(normalize_term("***", &policy()), "");
    }

    #[test]
    fn normalize_preserves_internal_hyphen_but_strips_edges() {
        assert_eq!(normalize_term("-well-behaved-", &policy()), "well-behaved");
    }

    #[test]
    fn case_fold_can_be_disabled() {
        let p = NormalizationPolicy {
            case_fold: false,
            ..policy()
        };
        assert_eq!(normalize_term("Playful", &p), "Playful");
    }

    #[test]
    fn extractor_system_prompt_is_the_exact_protocol_string() {
        assert_eq!(
            EXTRACTOR_SYSTEM_PROMPT,
            "Act as a text processing system. Extract adjectives (or adjective phrases) from \
             the input and output only a single-line list separated by comma. No other text."
        );
    }

    #[test]
    fn attribute_lists_round_trip() {
        let lists = vec![AttributeList {
            stimulus_id: "s1".into(),
            concept_id: "bengal".into(),
            style: StyleFamily::Functional,
            model_id: "mock".into(),
            prompt_id: 1,
            rep: 2,
            terms: vec!["loyal".into(), "playful".into()],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attributes.jsonl");
        write_attribute_lists(&lists, &path).unwrap();
        assert_eq!(read_attribute_lists(&path).unwrap(), lists);
    }

    #[test]
    fn llm_extraction_parses_the_extractor_reply_and_caches_it() {
        use crate::modelio::{ExtractorScript, FixedClock, MockClient, MockFixture};
        let mut entries = std::collections::BTreeMap::new();
        entries.insert(
            "The breed is playful. Small. Very active!".to_string(),
            "playful, small, active".to_string(),
        );
        entries.insert("multiline".to_string(), "playful\nsmall".to_string());
        entries.insert("nothing".to_string(), String::new());
        let fixture = MockFixture {
            extractor: Some(ExtractorScript::Map { entries }),
            ..MockFixture::default()
        };
        let client = MockClient::new(fixture);
        let endpoint = crate::testkit::mock_endpoint("aux");
        let dir = tempfile::tempdir().unwrap();
        let cache = crate::modelio::ResponseCache::open(dir.path()).unwrap();
        let clock = FixedClock(0);

        let run = |raw: &str, cell: &str| {
            extract_llm(raw, &policy(), &endpoint, &client, &cache, cell, &clock).unwrap()
        };
        assert_eq!(
            run("The breed is playful. Small. Very active!", "c1"),
            vec!["playful", "small", "active"]
        );
        assert_eq!(run("multiline", "c2"), vec!["playful", "small"]);
        assert!(run("nothing", "c3").is_empty());

        // Identical input is served from the cache.
        let before = client.network_calls();
        assert_eq!(
            run("The breed is playful. Small. Very active!", "c1"),
            vec!["playful", "small", "active"]
        );
        assert_eq!(client.network_calls(), before);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(term in ".{0,40}") {
            let p = policy();
            let once = normalize_term(&term, &p);
            prop_assert_eq!(normalize_term(&once, &p), once);
        }

        #[test]
        fn extraction_is_deterministic(raw in ".{0,120}") {
            let p = policy();
            prop_assert_eq!(extract_rule_based(&raw, &p), extract_rule_based(&raw, &p));
        }
    }
}
