//! Run configuration: JSON with strict keys, defaults matching the standard
//! protocol (36 samples, 5 prompts x 5 reps, tau 5, top-3, sizes 30/35/40,
//! five size-position combos).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extract::NormalizationPolicy;
use crate::modelio::ModelEndpoint;
use crate::protocol::PromptSet;
use crate::stats::CountingMode;
use crate::stimulus::{
    CanvasSpec, Concept, FontSpec, Placement, Rgb, SizePlacement, StyleFamily, StyleMap,
    StyleSettings,
};

pub fn default_sizes() -> Vec<u32> {
    vec![30, 35, 40]
}

pub fn default_combos() -> Vec<SizePlacement> {
    vec![
        SizePlacement {
            placement: Placement::Center,
            size: 30,
        },
        SizePlacement {
            placement: Placement::Center,
            size: 35,
        },
        SizePlacement {
            placement: Placement::Center,
            size: 40,
        },
        SizePlacement {
            placement: Placement::TopCenter,
            size: 35,
        },
        SizePlacement {
            placement: Placement::BottomCenter,
            size: 35,
        },
    ]
}

pub fn default_palette(style: StyleFamily) -> Vec<Rgb> {
    match style {
        StyleFamily::Functional => vec![Rgb::BLACK],
        StyleFamily::Decorative => vec![
            Rgb::BLACK,
            Rgb(255, 0, 0),
            Rgb(0, 0, 255),
            Rgb(0, 128, 0),
            Rgb(128, 0, 128),
        ],
    }
}

/// Concepts inline in the config or loaded from a JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConceptsSource {
    Inline(Vec<Concept>),
    File(ConceptsFile),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptsFile {
    pub file: PathBuf,
}

impl ConceptsSource {
    pub fn resolve(&self, base_dir: &Path) -> Result<Vec<Concept>> {
        match self {
            ConceptsSource::Inline(list) => Ok(list.clone()),
            ConceptsSource::File(f) => {
                let path = if f.file.is_absolute() {
                    f.file.clone()
                } else {
                    base_dir.join(&f.file)
                };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Malformed {
                    what: "concept list",
                    path,
                    reason: e.to_string(),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n: usize,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Models whose identification verdicts gate the stimuli. Defaults to
    /// every configured model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_models: Option<Vec<String>>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n: 36,
            seed: None,
            filter_models: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    #[default]
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    pub policy: NormalizationPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extractor: Option<ModelEndpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub tau: u64,
    pub top_n: usize,
    pub counting: CountingMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tau: 5,
            top_n: 3,
            counting: CountingMode::Occurrence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Csv,
    TvChart,
    WithinAcrossChart,
    TopN,
}

impl ReportKind {
    pub const ALL: [ReportKind; 4] = [
        ReportKind::Csv,
        ReportKind::TvChart,
        ReportKind::WithinAcrossChart,
        ReportKind::TopN,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub reports: Vec<ReportKind>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            reports: ReportKind::ALL.to_vec(),
        }
    }
}

/// The fully materialized run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRunConfig")]
pub struct RunConfig {
    pub seed: u64,
    pub canvas: CanvasSpec,
    pub concepts: ConceptsSource,
    pub styles: StyleMap,
    pub models: Vec<ModelEndpoint>,
    pub sampling: SamplingConfig,
    pub prompts: PromptSet,
    pub extraction: ExtractionConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStyleSettings {
    fonts: Vec<FontSpec>,
    #[serde(default)]
    palette: Option<Vec<Rgb>>,
    #[serde(default)]
    sizes: Option<Vec<u32>>,
    #[serde(default)]
    combos: Option<Vec<SizePlacement>>,
}

impl RawStyleSettings {
    fn materialize(self, style: StyleFamily) -> StyleSettings {
        StyleSettings {
            fonts: self.fonts,
            palette: self.palette.unwrap_or_else(|| default_palette(style)),
            sizes: self.sizes.unwrap_or_else(default_sizes),
            combos: self.combos.unwrap_or_else(default_combos),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStyles {
    functional: RawStyleSettings,
    decorative: RawStyleSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    canvas: Option<CanvasSpec>,
    concepts: ConceptsSource,
    styles: RawStyles,
    models: Vec<ModelEndpoint>,
    #[serde(default)]
    sampling: Option<SamplingConfig>,
    #[serde(default)]
    prompts: Option<PromptSet>,
    #[serde(default)]
    extraction: Option<ExtractionConfig>,
    #[serde(default)]
    analysis: Option<AnalysisConfig>,
    #[serde(default)]
    output: Option<OutputConfig>,
}

impl TryFrom<RawRunConfig> for RunConfig {
    type Error = Error;

    fn try_from(raw: RawRunConfig) -> Result<RunConfig> {
        let config = RunConfig {
            seed: raw.seed,
            canvas: raw.canvas.unwrap_or_default(),
            concepts: raw.concepts,
            styles: StyleMap {
                functional: raw.styles.functional.materialize(StyleFamily::Functional),
                decorative: raw.styles.decorative.materialize(StyleFamily::Decorative),
            },
            models: raw.models,
            sampling: raw.sampling.unwrap_or_default(),
            prompts: raw.prompts.unwrap_or_default(),
            extraction: raw.extraction.unwrap_or_default(),
            analysis: raw.analysis.unwrap_or_default(),
            output: raw.output.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base_dir)
    }

    /// Parses and validates, inlining a concepts file relative to `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        let concepts = config.concepts.resolve(base_dir)?;
        config.concepts = ConceptsSource::Inline(concepts);
        Ok(config)
    }

    pub fn concepts(&self) -> &[Concept] {
        match &self.concepts {
            ConceptsSource::Inline(list) => list,
            ConceptsSource::File(_) => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.canvas.validate()?;
        self.styles.validate()?;
        if self.models.is_empty() {
            return Err(Error::Config(
                "at least one model endpoint is required".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        for model in &self.models {
            model.validate()?;
            if !ids.insert(model.id.as_str()) {
                return Err(Error::Config(format!("duplicate model id '{}'", model.id)));
            }
        }
        if self.sampling.n == 0 {
            return Err(Error::Config("sampling.n must be >= 1".into()));
        }
        if let Some(filter) = &self.sampling.filter_models {
            if filter.is_empty() {
                return Err(Error::Config(
                    "sampling.filter_models must be non-empty".into(),
                ));
            }
            for id in filter {
                if !ids.contains(id.as_str()) {
                    return Err(Error::Config(format!(
                        "sampling.filter_models names unknown model '{id}'"
                    )));
                }
            }
        }
        self.prompts.validate()?;
        self.extraction.policy.validate()?;
        if self.extraction.mode == ExtractionMode::Llm {
            match &self.extraction.extractor {
                Some(extractor) => extractor.validate()?,
                None => {
                    return Err(Error::Config(
                        "extraction.mode = llm requires extraction.extractor".into(),
                    ))
                }
            }
        }
        if self.analysis.top_n == 0 {
            return Err(Error::Config("analysis.top_n must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed used for down-sampling; defaults to the run seed.
    pub fn sampling_seed(&self) -> u64 {
        self.sampling.seed.unwrap_or(self.seed)
    }

    /// Models participating in the identification gate.
    pub fn filter_models(&self) -> Vec<String> {
        self.sampling
            .filter_models
            .clone()
            .unwrap_or_else(|| self.models.iter().map(|m| m.id.clone()).collect())
    }

    /// Digest over the canonical serialized form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}

/// Command-line overrides for top-level scalars.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub models: Option<Vec<String>>,
    pub concurrency: Option<u32>,
    pub tau: Option<u64>,
    pub top_n: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(keep) = &self.models {
            let known: BTreeSet<&str> = config.models.iter().map(|m| m.id.as_str()).collect();
            for id in keep {
                if !known.contains(id.as_str()) {
                    return Err(Error::Config(format!(
                        "--models names unknown model '{id}'"
                    )));
                }
            }
            config.models.retain(|m| keep.contains(&m.id));
            if let Some(filter) = &mut config.sampling.filter_models {
                filter.retain(|id| keep.contains(id));
                if filter.is_empty() {
                    config.sampling.filter_models = None;
                }
            }
        }
        if let Some(concurrency) = self.concurrency {
            if concurrency == 0 {
                return Err(Error::Config("--concurrency must be >= 1".into()));
            }
            for model in &mut config.models {
                model.max_parallel = concurrency;
            }
        }
        if let Some(tau) = self.tau {
            config.analysis.tau = tau;
        }
        if let Some(top_n) = self.top_n {
            if top_n == 0 {
                return Err(Error::Config("--top-n must be >= 1".into()));
            }
            config.analysis.top_n = top_n;
        }
        config.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit;

    #[test]
    fn minimal_config_materializes_defaults() {
        let config = testkit::run_config(2, &["mock"]);
        assert_eq!(config.sampling.n, 36);
        assert_eq!(config.analysis.tau, 5);
        assert_eq!(config.analysis.top_n, 3);
        assert_eq!(config.prompts.attribute_templates.len(), 5);
        assert_eq!(config.prompts.reps, 5);
        assert_eq!(config.styles.functional.sizes, vec![30, 35, 40]);
        assert_eq!(config.styles.decorative.palette.len(), 5);
        assert_eq!(config.styles.functional.combos.len(), 5);
        assert_eq!(config.canvas, CanvasSpec::default());
    }

    #[test]
    fn round_trip_is_semantically_identical() {
        let config = testkit::run_config(2, &["mock"]);
        let json = serde_json::to_string_pretty(&config).unwrap();
        let reparsed = RunConfig::from_json(&json, Path::new(".")).unwrap();
        assert_eq!(config, reparsed);
        assert_eq!(config.digest(), reparsed.digest());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut value: serde_json::Value =
            serde_json::to_value(testkit::run_config(1, &["mock"])).unwrap();
        value["surprise"] = serde_json::json!(true);
        let text = serde_json::to_string(&value).unwrap();
        let err = RunConfig::from_json(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn llm_extraction_requires_extractor() {
        let mut config = testkit::run_config(1, &["mock"]);
        config.extraction.mode = ExtractionMode::Llm;
        assert!(matches!(config.validate(), Err(Error::Config(_))));
        config.extraction.extractor = Some(testkit::mock_endpoint("aux"));
        assert!(config.validate().is_ok());
    }

    #[test]
    fn overrides_filter_models_and_set_scalars() {
        let mut config = testkit::run_config(1, &["a", "b"]);
        let overrides = ConfigOverrides {
            seed: Some(99),
            models: Some(vec!["a".into()]),
            concurrency: Some(2),
            tau: Some(10),
            top_n: Some(5),
        };
        overrides.apply(&mut config).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.models.len(), 1);
        assert_eq!(config.models[0].max_parallel, 2);
        assert_eq!(config.analysis.tau, 10);
        assert_eq!(config.analysis.top_n, 5);

        let bad = ConfigOverrides {
            models: Some(vec!["ghost".into()]),
            ..Default::default()
        };
        assert!(bad.apply(&mut config).is_err());
    }

    #[test]
    fn concepts_file_resolves_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let concepts = testkit::concepts(2);
        std::fs::write(
            dir.path().join("pets.json"),
            serde_json::to_string(&concepts).unwrap(),
        )
        .unwrap();
        let mut config = testkit::run_config(1, &["mock"]);
        config.concepts = ConceptsSource::File(ConceptsFile {
            file: "pets.json".into(),
        });
        let text = serde_json::to_string(&config).unwrap();
        let loaded = RunConfig::from_json(&text, dir.path()).unwrap();
        assert_eq!(loaded.concepts(), concepts.as_slice());
    }
}
