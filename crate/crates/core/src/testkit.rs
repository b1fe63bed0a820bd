//! Test support: style settings and run configs backed by TrueType faces
//! discovered on the host. Used by the unit and integration test suites;
//! not part of the public contract.

use std::path::PathBuf;
use std::sync::OnceLock;

use ab_glyph::{Font, FontVec};

use crate::config::{default_combos, default_palette, default_sizes, ConceptsSource, RunConfig};
use crate::modelio::{ModelEndpoint, RetryPolicy};
use crate::stimulus::{
    Category, Concept, FontFamily, FontSpec, StyleFamily, StyleMap, StyleSettings,
};

const FONT_DIRS: &[&str] = &[
    "/usr/share/fonts/truetype/dejavu",
    "/usr/share/fonts/truetype",
    "/usr/share/fonts",
    "/usr/local/lib/python3.10/dist-packages/matplotlib/mpl-data/fonts/ttf",
];

/// A face qualifies if it renders basic Latin text.
fn usable(path: &PathBuf) -> bool {
    let Ok(bytes) = std::fs::read(path) else {
        return false;
    };
    let Ok(font) = FontVec::try_from_vec(bytes) else {
        return false;
    };
    "Bengal pug 9"
        .chars()
        .all(|c| c == ' ' || font.outline(font.glyph_id(c)).is_some())
}

fn discover_fonts() -> &'static Vec<PathBuf> {
    static FONTS: OnceLock<Vec<PathBuf>> = OnceLock::new();
    FONTS.get_or_init(|| {
        let mut dirs: Vec<PathBuf> = FONT_DIRS.iter().map(PathBuf::from).collect();
        if let Ok(extra) = std::env::var("STYLETV_TEST_FONT_DIR") {
            dirs.insert(0, PathBuf::from(extra));
        }
        let mut found: Vec<PathBuf> = Vec::new();
        let mut stems: std::collections::BTreeSet<String> = Default::default();
        for dir in dirs {
            let Ok(entries) = std::fs::read_dir(&dir) else {
                continue;
            };
            let mut paths: Vec<PathBuf> = entries
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ttf")))
                .collect();
            paths.sort();
            for path in paths {
                let stem = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                if stems.contains(&stem) || !usable(&path) {
                    continue;
                }
                stems.insert(stem);
                found.push(path);
                if found.len() >= 16 {
                    return found;
                }
            }
        }
        found
    })
}

fn font_specs() -> (Vec<FontSpec>, Vec<FontSpec>) {
    let fonts = discover_fonts();
    assert!(
        fonts.len() >= 16,
        "tests need 16 usable .ttf files; found {} (set STYLETV_TEST_FONT_DIR to a directory \
         with TrueType fonts)",
        fonts.len()
    );
    let spec = |path: &PathBuf, family: FontFamily| FontSpec {
        name: path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("font")
            .to_string(),
        file: path.clone(),
        family,
    };
    let functional = fonts[..8]
        .iter()
        .map(|p| spec(p, FontFamily::SansSerif))
        .collect();
    let decorative = fonts[8..16]
        .iter()
        .map(|p| spec(p, FontFamily::Script))
        .collect();
    (functional, decorative)
}

/// Default-shaped style settings over discovered host fonts: 8 faces per
/// style, standard palettes, sizes, and combos.
pub fn style_map() -> StyleMap {
    let (functional, decorative) = font_specs();
    StyleMap {
        functional: StyleSettings {
            fonts: functional,
            palette: default_palette(StyleFamily::Functional),
            sizes: default_sizes(),
            combos: default_combos(),
        },
        decorative: StyleSettings {
            fonts: decorative,
            palette: default_palette(StyleFamily::Decorative),
            sizes: default_sizes(),
            combos: default_combos(),
        },
    }
}

pub fn concepts(n: usize) -> Vec<Concept> {
    let pool = [
        ("bengal", "Bengal", Category::Cat),
        ("pug", "Pug", Category::Dog),
        ("birman", "Birman", Category::Cat),
        ("boxer", "Boxer", Category::Dog),
        ("sphynx", "Sphynx", Category::Cat),
        ("beagle", "Beagle", Category::Dog),
    ];
    assert!(n <= pool.len());
    pool[..n]
        .iter()
        .map(|(id, label, category)| Concept {
            id: (*id).into(),
            label: (*label).into(),
            category: *category,
        })
        .collect()
}

pub fn mock_endpoint(id: &str) -> ModelEndpoint {
    ModelEndpoint {
        id: id.into(),
        base_url: format!("mock://{id}"),
        model_name: id.into(),
        api_key_env: None,
        max_parallel: 4,
        retry: RetryPolicy {
            max_attempts: 1,
            base_backoff_ms: 1,
        },
    }
}

/// A validated config over `n_concepts` test concepts and the named mock
/// endpoints, defaults everywhere else.
pub fn run_config(n_concepts: usize, model_ids: &[&str]) -> RunConfig {
    let config = RunConfig {
        seed: 7,
        canvas: Default::default(),
        concepts: ConceptsSource::Inline(concepts(n_concepts)),
        styles: style_map(),
        models: model_ids.iter().map(|id| mock_endpoint(id)).collect(),
        sampling: Default::default(),
        prompts: Default::default(),
        extraction: Default::default(),
        analysis: Default::default(),
        output: Default::default(),
    };
    config.validate().expect("test config is valid");
    config
}
