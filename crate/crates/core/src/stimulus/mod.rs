//! Visual-text stimulus generation: deterministic plan enumeration,
//! rendering onto a blank canvas, and the stimulus manifest.

mod render;

pub use render::{
    decode_png_rgb, ink_bounding_box, render_stimulus, CanvasSpec, FontStore, InkBox,
};

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Concept category. Drives prompt wording ("cat" vs "dog") and report coloring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Cat,
    Dog,
}

impl Category {
    pub fn animal(&self) -> &'static str {
        match self {
            Category::Cat => "cat",
            Category::Dog => "dog",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.animal())
    }
}

/// A concept whose label is rendered as visual text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub label: String,
    pub category: Category,
}

/// The two style families under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleFamily {
    Functional,
    Decorative,
}

impl StyleFamily {
    pub const ALL: [StyleFamily; 2] = [StyleFamily::Functional, StyleFamily::Decorative];

    pub fn as_str(&self) -> &'static str {
        match self {
            StyleFamily::Functional => "functional",
            StyleFamily::Decorative => "decorative",
        }
    }
}

impl fmt::Display for StyleFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Font category a face belongs to. Functional styles use sans-serif faces,
/// decorative styles use script faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FontFamily {
    SansSerif,
    Script,
}

/// A TrueType face referenced by path. Fonts are never bundled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FontSpec {
    pub name: String,
    pub file: PathBuf,
    pub family: FontFamily,
}

/// Text placement on the canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Center,
    TopCenter,
    BottomCenter,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Placement::Center => "center",
            Placement::TopCenter => "top_center",
            Placement::BottomCenter => "bottom_center",
        };
        f.write_str(s)
    }
}

/// One (placement, size) cell of the rendering grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizePlacement {
    pub placement: Placement,
    pub size: u32,
}

/// An RGB color, serialized as `#rrggbb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub const BLACK: Rgb = Rgb(0, 0, 0);
    pub const WHITE: Rgb = Rgb(255, 255, 255);

    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    pub fn from_hex(s: &str) -> Result<Rgb> {
        let t = s.strip_prefix('#').unwrap_or(s);
        if t.len() != 6 || !t.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(Error::Validation(format!("invalid color '{s}'")));
        }
        let v = u32::from_str_radix(t, 16).expect("hex digits checked");
        Ok(Rgb((v >> 16) as u8, (v >> 8) as u8, v as u8))
    }
}

impl Serialize for Rgb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.hex())
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Rgb, D::Error> {
        let s = String::deserialize(d)?;
        Rgb::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Per-style rendering settings: which faces, which colors, which grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleSettings {
    pub fonts: Vec<FontSpec>,
    pub palette: Vec<Rgb>,
    pub sizes: Vec<u32>,
    pub combos: Vec<SizePlacement>,
}

impl StyleSettings {
    pub fn validate(&self, style: StyleFamily) -> Result<()> {
        if self.fonts.is_empty() {
            return Err(Error::Config(format!("style '{style}' has no fonts")));
        }
        let mut names = BTreeSet::new();
        for font in &self.fonts {
            if !names.insert(font.name.as_str()) {
                return Err(Error::Config(format!(
                    "style '{style}' lists font '{}' twice",
                    font.name
                )));
            }
            let expected = match style {
                StyleFamily::Functional => FontFamily::SansSerif,
                StyleFamily::Decorative => FontFamily::Script,
            };
            if font.family != expected {
                return Err(Error::Config(format!(
                    "style '{style}' requires {expected:?} faces but font '{}' is {:?}",
                    font.name, font.family
                )));
            }
        }
        if self.palette.is_empty() {
            return Err(Error::Config(format!(
                "style '{style}' has an empty palette"
            )));
        }
        if style == StyleFamily::Functional && self.palette != vec![Rgb::BLACK] {
            return Err(Error::Config(
                "functional palette must be exactly black".into(),
            ));
        }
        if self.palette.contains(&Rgb::WHITE) {
            return Err(Error::Config(format!(
                "style '{style}' palette contains white, which is invisible on the canvas"
            )));
        }
        if self.combos.is_empty() {
            return Err(Error::Config(format!(
                "style '{style}' has no size-position combos"
            )));
        }
        let mut cells = BTreeSet::new();
        for combo in &self.combos {
            if !self.sizes.contains(&combo.size) {
                return Err(Error::Config(format!(
                    "style '{style}' combo {}@{} uses a size outside the configured set",
                    combo.placement, combo.size
                )));
            }
            if !cells.insert((combo.placement, combo.size)) {
                return Err(Error::Config(format!(
                    "style '{style}' repeats combo {}@{}",
                    combo.placement, combo.size
                )));
            }
        }
        Ok(())
    }

    /// Checks every font file opens and parses as a TrueType face.
    pub fn verify_font_files(&self) -> Result<()> {
        for font in &self.fonts {
            FontStore::load_one(font)?;
        }
        Ok(())
    }

    /// Index of a (placement, size) cell within this style's combo list.
    pub fn combo_index(&self, placement: Placement, size: u32) -> Option<usize> {
        self.combos
            .iter()
            .position(|c| c.placement == placement && c.size == size)
    }
}

/// The settings for both style families.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleMap {
    pub functional: StyleSettings,
    pub decorative: StyleSettings,
}

impl StyleMap {
    pub fn get(&self, style: StyleFamily) -> &StyleSettings {
        match style {
            StyleFamily::Functional => &self.functional,
            StyleFamily::Decorative => &self.decorative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.functional.validate(StyleFamily::Functional)?;
        self.decorative.validate(StyleFamily::Decorative)
    }

    pub fn all_fonts(&self) -> impl Iterator<Item = &FontSpec> {
        self.functional
            .fonts
            .iter()
            .chain(self.decorative.fonts.iter())
    }
}

/// One rendered visual-text image with its full style provenance.
///
/// Field names and order are the manifest wire format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub stimulus_id: String,
    pub concept_id: String,
    pub label: String,
    pub category: Category,
    pub style: StyleFamily,
    pub font: String,
    pub size: u32,
    pub placement: Placement,
    pub color: Rgb,
    pub seed: u64,
    /// Relative to the state directory. Empty until rendered.
    pub image_path: String,
    /// Hex digest of the PNG bytes. Empty until rendered.
    pub sha256: String,
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

fn validate_concepts(concepts: &[Concept]) -> Result<()> {
    let mut ids = BTreeSet::new();
    for concept in concepts {
        if concept.label.trim().is_empty() {
            return Err(Error::Validation(format!(
                "concept '{}' has an empty label",
                concept.id
            )));
        }
        if concept.id.is_empty()
            || !concept
                .id
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        {
            return Err(Error::Validation(format!(
                "concept id '{}' must be non-empty [a-z0-9_]",
                concept.id
            )));
        }
        if !ids.insert(concept.id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate concept id '{}'",
                concept.id
            )));
        }
    }
    Ok(())
}

/// Enumerates the unrendered stimulus plan in canonical order
/// (concept id, style, font name, combo index).
///
/// Decorative colors are drawn uniformly from the palette by a generator
/// seeded from (run seed, concept id, font name, combo index), so the draw
/// for a cell never depends on enumeration order. Functional records are
/// black.
pub fn enumerate_plan(
    concepts: &[Concept],
    styles: &StyleMap,
    run_seed: u64,
) -> Result<Vec<StimulusRecord>> {
    validate_concepts(concepts)?;
    styles.validate()?;
    for style in StyleFamily::ALL {
        styles.get(style).verify_font_files()?;
    }

    let mut ordered: Vec<&Concept> = concepts.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut plan = Vec::new();
    for concept in ordered {
        for style in StyleFamily::ALL {
            let settings = styles.get(style);
            let mut fonts: Vec<&FontSpec> = settings.fonts.iter().collect();
            fonts.sort_by(|a, b| a.name.cmp(&b.name));
            for font in fonts {
                for (combo_index, combo) in settings.combos.iter().enumerate() {
                    let seed = derive_seed(
                        run_seed,
                        &[
                            "color",
                            &concept.id,
                            style.as_str(),
                            &font.name,
                            &combo_index.to_string(),
                        ],
                    );
                    let color = match style {
                        StyleFamily::Functional => Rgb::BLACK,
                        StyleFamily::Decorative => {
                            let mut rng = SplitMix64::new(seed);
                            settings.palette[rng.next_index(settings.palette.len())]
                        }
                    };
                    plan.push(StimulusRecord {
                        stimulus_id: format!(
                            "{}-{}-{}-c{}",
                            concept.id,
                            style.as_str(),
                            slug(&font.name),
                            combo_index
                        ),
                        concept_id: concept.id.clone(),
                        label: concept.label.clone(),
                        category: concept.category,
                        style,
                        font: font.name.clone(),
                        size: combo.size,
                        placement: combo.placement,
                        color,
                        seed,
                        image_path: String::new(),
                        sha256: String::new(),
                    });
                }
            }
        }
    }
    Ok(plan)
}

/// Writes one JSON line per record, in the order given. Records must carry
/// their image digests.
pub fn write_manifest(records: &[StimulusRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for record in records {
        if record.sha256.is_empty() || record.image_path.is_empty() {
            return Err(Error::Validation(format!(
                "stimulus '{}' has not been rendered (missing digest)",
                record.stimulus_id
            )));
        }
        serde_json::to_writer(&mut buf, record).map_err(|e| Error::Malformed {
            what: "manifest record",
            path: path.into(),
            reason: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a manifest back, preserving line order.
pub fn read_manifest(path: &Path) -> Result<Vec<StimulusRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: StimulusRecord = serde_json::from_str(line).map_err(|e| Error::Malformed {
            what: "manifest line",
            path: path.into(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    fn concepts(n: usize) -> Vec<Concept> {
        let names = ["bengal", "pug", "birman", "boxer"];
        (0..n)
            .map(|i| Concept {
                id: names[i].into(),
                label: {
                    let mut l = names[i].to_string();
                    l[..1].make_ascii_uppercase();
                    l
                },
                category: if i % 2 == 0 {
                    Category::Cat
                } else {
                    Category::Dog
                },
            })
            .collect()
    }

    #[test]
    fn one_concept_yields_40_records_per_style() {
        let plan = enumerate_plan(&concepts(1), &testkit::style_map(), 7).unwrap();
        assert_eq!(plan.len(), 80);
        let functional = plan
            .iter()
            .filter(|r| r.style == StyleFamily::Functional)
            .count();
        assert_eq!(functional, 40);
    }

    #[test]
    fn two_concepts_yield_160_records() {
        let plan = enumerate_plan(&concepts(2), &testkit::style_map(), 7).unwrap();
        assert_eq!(plan.len(), 160);
    }

    #[test]
    fn empty_concept_list_yields_empty_plan() {
        let plan = enumerate_plan(&[], &testkit::style_map(), 7).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn plan_is_deterministic_and_order_insensitive() {
        let mut shuffled = concepts(4);
        shuffled.reverse();
        let a = enumerate_plan(&concepts(4), &testkit::style_map(), 7).unwrap();
        let b = enumerate_plan(&shuffled, &testkit::style_map(), 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_font_placement_size_triples_per_concept_style() {
        let plan = enumerate_plan(&concepts(1), &testkit::style_map(), 7).unwrap();
        let triples: BTreeSet<_> = plan
            .iter()
            .filter(|r| r.style == StyleFamily::Decorative)
            .map(|r| (r.font.clone(), r.placement, r.size))
            .collect();
        assert_eq!(triples.len(), 40);
    }

    #[test]
    fn functional_records_are_black_decorative_in_palette() {
        let plan = enumerate_plan(&concepts(2), &testkit::style_map(), 7).unwrap();
        let palette = testkit::style_map().decorative.palette.clone();
        for record in &plan {
            match record.style {
                StyleFamily::Functional => assert_eq!(record.color, Rgb::BLACK),
                StyleFamily::Decorative => assert!(palette.contains(&record.color)),
            }
        }
    }

    #[test]
    fn color_draw_does_not_depend_on_other_concepts() {
        let solo = enumerate_plan(&concepts(1), &testkit::style_map(), 7).unwrap();
        let both = enumerate_plan(&concepts(2), &testkit::style_map(), 7).unwrap();
        for record in &solo {
            let twin = both
                .iter()
                .find(|r| r.stimulus_id == record.stimulus_id)
                .unwrap();
            assert_eq!(record.color, twin.color);
        }
    }

    #[test]
    fn missing_font_file_is_a_config_error_naming_the_font() {
        let mut styles = testkit::style_map();
        styles.functional.fonts[0].file = PathBuf::from("/nonexistent/ghost.ttf");
        let name = styles.functional.fonts[0].name.clone();
        let err = enumerate_plan(&concepts(1), &styles, 7).unwrap_err();
        match err {
            Error::Font { name: n, .. } => assert_eq!(n, name),
            other => panic!("expected font error, got {other}"),
        }
    }

    #[test]
    fn duplicate_concept_ids_rejected() {
        let mut list = concepts(1);
        list.push(list[0].clone());
        let err = enumerate_plan(&list, &testkit::style_map(), 7).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn unrendered_record_fails_manifest_write() {
        let plan = enumerate_plan(&concepts(1), &testkit::style_map(), 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = write_manifest(&plan, &dir.path().join("manifest.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn manifest_line_carries_the_exact_field_names_in_order() {
        let mut plan = enumerate_plan(&concepts(1), &testkit::style_map(), 7).unwrap();
        plan[0].sha256 = "00".repeat(32);
        plan[0].image_path = "images/x.png".into();
        let line = serde_json::to_string(&plan[0]).unwrap();
        let expected = [
            "stimulus_id",
            "concept_id",
            "label",
            "category",
            "style",
            "font",
            "size",
            "placement",
            "color",
            "seed",
            "image_path",
            "sha256",
        ];
        let mut last = 0;
        for field in expected {
            let needle = format!("\"{field}\":");
            let at = line[last..]
                .find(&needle)
                .unwrap_or_else(|| panic!("field {field} missing or out of order"));
            last += at;
        }
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value.as_object().unwrap().len(), expected.len());
        assert!(value["color"].as_str().unwrap().starts_with('#'));
    }

    #[test]
    fn manifest_round_trips() {
        let mut plan = enumerate_plan(&concepts(1), &testkit::style_map(), 7).unwrap();
        for (i, r) in plan.iter_mut().enumerate() {
            r.sha256 = format!("{i:064x}");
            r.image_path = format!("images/{}.png", r.stimulus_id);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&plan, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), plan);
    }

    #[test]
    fn rgb_hex_round_trip() {
        for c in [Rgb(0, 0, 0), Rgb(255, 0, 0), Rgb(128, 0, 128)] {
            assert_eq!(Rgb::from_hex(&c.hex()).unwrap(), c);
        }
        assert!(Rgb::from_hex("#12345").is_err());
        assert!(Rgb::from_hex("zzzzzz").is_err());
    }
}
