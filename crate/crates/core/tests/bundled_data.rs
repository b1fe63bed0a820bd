//! Sanity checks over the bundled data files: the 37-label pet concept
//! list, the example configs, and the example mock fixture.

use std::collections::BTreeSet;
use std::path::PathBuf;

use styletv::config::RunConfig;
use styletv::modelio::MockFixture;
use styletv::stimulus::{enumerate_plan, Category, Concept, StyleFamily};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn pet_concept_list_has_37_unique_labels() {
    let text = std::fs::read_to_string(data_dir().join("concepts_pets37.json")).unwrap();
    let concepts: Vec<Concept> = serde_json::from_str(&text).unwrap();
    assert_eq!(concepts.len(), 37);
    let ids: BTreeSet<&str> = concepts.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids.len(), 37);
    let cats = concepts
        .iter()
        .filter(|c| c.category == Category::Cat)
        .count();
    assert_eq!(cats, 12);
    assert_eq!(concepts.len() - cats, 25);
    for label in [
        "English Cocker Spaniel",
        "Newfoundland",
        "Birman",
        "Persian",
        "Sphynx",
    ] {
        assert!(concepts.iter().any(|c| c.label == label), "{label} missing");
    }
}

#[test]
fn example_config_parses_with_paper_scale_defaults() {
    let path = data_dir().join("config.example.json");
    let config = RunConfig::load(&path).unwrap();
    assert_eq!(config.concepts().len(), 37);
    assert_eq!(config.styles.functional.fonts.len(), 8);
    assert_eq!(config.styles.decorative.fonts.len(), 8);
    assert_eq!(config.styles.decorative.palette.len(), 5);
    assert_eq!(config.sampling.n, 36);
    assert_eq!(config.prompts.reps, 5);
    assert_eq!(config.prompts.attribute_templates.len(), 5);
    assert_eq!(config.analysis.tau, 5);
    assert_eq!(config.analysis.top_n, 3);
    assert_eq!(config.models.len(), 2);
}

#[test]
fn mock_config_enumerates_the_full_grid() {
    let path = data_dir().join("config.mock.json");
    let config = RunConfig::load(&path).unwrap();
    // Full-scale check: with the 37-concept list this grid yields 1480
    // stimuli per style.
    let text = std::fs::read_to_string(data_dir().join("concepts_pets37.json")).unwrap();
    let pets: Vec<Concept> = serde_json::from_str(&text).unwrap();
    let plan = enumerate_plan(&pets, &config.styles, config.seed).unwrap();
    assert_eq!(plan.len(), 2960);
    let functional = plan
        .iter()
        .filter(|r| r.style == StyleFamily::Functional)
        .count();
    assert_eq!(functional, 1480);
}

#[test]
fn example_fixture_parses() {
    let text = std::fs::read_to_string(data_dir().join("fixture.example.json")).unwrap();
    let fixture: MockFixture = serde_json::from_str(&text).unwrap();
    assert!(fixture.default.is_some());
    assert!(fixture.concepts.contains_key("pug"));
}
