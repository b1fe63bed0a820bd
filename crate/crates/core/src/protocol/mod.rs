//! The two-phase experiment protocol: identification gating over every
//! stimulus, joint-model filtering with deterministic down-sampling, then
//! attribute collection over the sampled stimuli.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::modelio::{
    cached_query, run_bounded, CellMeta, ChatClient, ChatRequest, Clock, ModelEndpoint, Phase,
    ResponseCache, ResponseRecord,
};
use crate::rng::{derive_seed, SplitMix64};
use crate::stimulus::{Category, StimulusRecord, StyleFamily};

/// Identify and attribute prompt templates. `{animal}` is replaced with the
/// concept's category word ("cat" or "dog").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSet {
    pub identify_template: String,
    pub attribute_templates: Vec<String>,
    pub reps: u32,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            identify_template: "Identify the breed of the {animal} pictured in the image. \
                                Answer with the breed name directly."
                .into(),
            attribute_templates: vec![
                "Output a list of the typical attributes of this {animal} breed, expressed \
                 strictly as adjectives."
                    .into(),
                "Output a list of attributes that distinguish this {animal} breed from other \
                 {animal} breeds, expressed strictly as adjectives."
                    .into(),
                "Output a list of adjectives that describe this {animal} breed.".into(),
                "Output a list of adjectives that capture how this {animal} breed is different \
                 from other {animal} breeds."
                    .into(),
                "Produce a list of the typical characteristics of this {animal} breed, \
                 expressed strictly as adjectives."
                    .into(),
            ],
            reps: 5,
        }
    }
}

impl PromptSet {
    pub fn validate(&self) -> Result<()> {
        if self.identify_template.trim().is_empty() {
            return Err(Error::Config("identify template is empty".into()));
        }
        if self.attribute_templates.is_empty()
            || self.attribute_templates.iter().any(|t| t.trim().is_empty())
        {
            return Err(Error::Config(
                "attribute templates must be non-empty".into(),
            ));
        }
        if self.reps < 1 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn identify_prompt(&self, category: Category) -> String {
        instantiate(&self.identify_template, category)
    }

    pub fn attribute_prompt(&self, prompt_id: u32, category: Category) -> String {
        instantiate(&self.attribute_templates[prompt_id as usize], category)
    }
}

fn instantiate(template: &str, category: Category) -> String {
    template.replace("{animal}", category.animal())
}

/// One identification verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentificationResult {
    pub stimulus_id: String,
    pub model_id: String,
    pub reply: String,
    pub correct: bool,
}

/// A query cell that failed permanently; recorded so the run can proceed and
/// be resumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedCell {
    pub stimulus_id: String,
    pub model_id: String,
    pub phase: Phase,
    pub prompt_id: u32,
    pub rep: u32,
    pub error: String,
}

/// Strict identification match: the trimmed reply must equal the label under
/// case folding. Anything longer, shorter, or synonymous is incorrect.
pub fn is_correct(reply: &str, label: &str) -> bool {
    reply.trim().to_lowercase() == label.trim().to_lowercase()
}

/// Correct fraction over an identification slice (one model, one style).
pub fn identification_accuracy(results: &[IdentificationResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InsufficientData(
            "accuracy over an empty result set is undefined".into(),
        ));
    }
    let correct = results.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / results.len() as f64)
}

/// Accuracies are reported at four decimal places.
pub fn format_accuracy(accuracy: f64) -> String {
    format!("{accuracy:.4}")
}

/// Loads a stimulus image and checks it against the manifest digest.
pub fn load_image(images_root: &Path, record: &StimulusRecord) -> Result<Vec<u8>> {
    let path = images_root.join(&record.image_path);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let digest = format!("{:x}", Sha256::digest(&bytes));
    if digest != record.sha256 {
        return Err(Error::Malformed {
            what: "stimulus image",
            path,
            reason: format!(
                "digest {digest} does not match manifest sha256 {}",
                record.sha256
            ),
        });
    }
    Ok(bytes)
}

/// Results plus the cells that failed permanently.
#[derive(Debug, Default)]
pub struct IdentificationOutcome {
    pub results: Vec<IdentificationResult>,
    pub failures: Vec<FailedCell>,
}

/// Queries every (stimulus, model) cell once with the identify prompt.
/// Results are emitted in canonical order (model, then manifest order).
pub fn run_identification(
    manifest: &[StimulusRecord],
    models: &[ModelEndpoint],
    prompts: &PromptSet,
    client: &dyn ChatClient,
    cache: &ResponseCache,
    clock: &dyn Clock,
    images_root: &Path,
) -> Result<IdentificationOutcome> {
    let mut outcome = IdentificationOutcome::default();
    for endpoint in models {
        let per_record = run_bounded(manifest, endpoint.max_parallel as usize, |record| {
            let image = load_image(images_root, record)?;
            let request = ChatRequest::with_image(image, prompts.identify_prompt(record.category));
            let cell = CellMeta {
                stimulus: Some(record),
                phase: Phase::Identify,
                prompt_id: 0,
                rep: 0,
            };
            cached_query(
                cache,
                client,
                endpoint,
                &record.stimulus_id,
                &cell,
                &request,
                clock,
            )
        });
        for (record, result) in manifest.iter().zip(per_record) {
            match result {
                Ok(response) => outcome.results.push(IdentificationResult {
                    stimulus_id: record.stimulus_id.clone(),
                    model_id: endpoint.id.clone(),
                    correct: is_correct(&response.raw_text, &record.label),
                    reply: response.raw_text,
                }),
                Err(e) => outcome.failures.push(FailedCell {
                    stimulus_id: record.stimulus_id.clone(),
                    model_id: endpoint.id.clone(),
                    phase: Phase::Identify,
                    prompt_id: 0,
                    rep: 0,
                    error: e.to_string(),
                }),
            }
        }
    }
    Ok(outcome)
}

/// The stimuli retained for one (concept, style) after gating and sampling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledSet {
    pub concept_id: String,
    pub style: StyleFamily,
    pub stimulus_ids: Vec<String>,
    pub sample_seed: u64,
}

/// A concept dropped because a style fell below the sample size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminatedConcept {
    pub concept_id: String,
    pub label: String,
    pub surviving_functional: usize,
    pub surviving_decorative: usize,
}

/// Gating and sampling outcome shared by all downstream phases.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub sample_size: usize,
    pub filter_models: Vec<String>,
    pub retained: Vec<String>,
    pub eliminated: Vec<EliminatedConcept>,
    pub sampled_sets: Vec<SampledSet>,
}

/// Applies the joint-model gate and samples exactly `n` stimuli per retained
/// (concept, style) with a generator seeded by (seed, concept, style). The
/// same sampled sets serve every model downstream.
pub fn filter_and_sample(
    results: &[IdentificationResult],
    manifest: &[StimulusRecord],
    n: usize,
    seed: u64,
    filter_models: &[String],
) -> Result<FilterReport> {
    if n == 0 {
        return Err(Error::Validation("sample size must be >= 1".into()));
    }
    if filter_models.is_empty() {
        return Err(Error::Validation(
            "at least one model must participate in filtering".into(),
        ));
    }

    let mut verdicts: HashMap<(&str, &str), bool> = HashMap::new();
    for result in results {
        verdicts.insert(
            (result.stimulus_id.as_str(), result.model_id.as_str()),
            result.correct,
        );
    }
    let survives = |record: &StimulusRecord| {
        filter_models.iter().all(|model| {
            verdicts
                .get(&(record.stimulus_id.as_str(), model.as_str()))
                .copied()
                .unwrap_or(false)
        })
    };

    // Survivors per (concept, style), in manifest order.
    let mut survivors: BTreeMap<(String, StyleFamily), Vec<&StimulusRecord>> = BTreeMap::new();
    let mut labels: BTreeMap<String, String> = BTreeMap::new();
    for record in manifest {
        labels
            .entry(record.concept_id.clone())
            .or_insert_with(|| record.label.clone());
        let entry = survivors
            .entry((record.concept_id.clone(), record.style))
            .or_default();
        if survives(record) {
            entry.push(record);
        }
    }

    let mut report = FilterReport {
        sample_size: n,
        filter_models: filter_models.to_vec(),
        ..FilterReport::default()
    };
    for (concept_id, label) in &labels {
        let functional = survivors
            .get(&(concept_id.clone(), StyleFamily::Functional))
            .map_or(0, |v| v.len());
        let decorative = survivors
            .get(&(concept_id.clone(), StyleFamily::Decorative))
            .map_or(0, |v| v.len());
        if functional < n || decorative < n {
            report.eliminated.push(EliminatedConcept {
                concept_id: concept_id.clone(),
                label: label.clone(),
                surviving_functional: functional,
                surviving_decorative: decorative,
            });
            continue;
        }
        report.retained.push(concept_id.clone());
        for style in StyleFamily::ALL {
            let pool = &survivors[&(concept_id.clone(), style)];
            let sample_seed = derive_seed(seed, &["sample", concept_id, style.as_str()]);
            let mut rng = SplitMix64::new(sample_seed);
            let chosen = rng.sample_indices(pool.len(), n);
            report.sampled_sets.push(SampledSet {
                concept_id: concept_id.clone(),
                style,
                stimulus_ids: chosen
                    .into_iter()
                    .map(|i| pool[i].stimulus_id.clone())
                    .collect(),
                sample_seed,
            });
        }
    }
    Ok(report)
}

/// Collected attribute responses plus permanently failed cells.
#[derive(Debug, Default)]
pub struct CollectionOutcome {
    pub records: Vec<ResponseRecord>,
    pub failures: Vec<FailedCell>,
}

/// Queries every (sampled stimulus, prompt, rep) cell for every model, each
/// as an independent fresh-context request. Records are emitted in canonical
/// cell order (model, concept, style, sampled position, prompt, rep)
/// regardless of completion order.
#[allow(clippy::too_many_arguments)]
pub fn collect_attributes(
    sampled_sets: &[SampledSet],
    manifest: &[StimulusRecord],
    models: &[ModelEndpoint],
    prompts: &PromptSet,
    client: &dyn ChatClient,
    cache: &ResponseCache,
    clock: &dyn Clock,
    images_root: &Path,
) -> Result<CollectionOutcome> {
    let by_id: HashMap<&str, &StimulusRecord> = manifest
        .iter()
        .map(|r| (r.stimulus_id.as_str(), r))
        .collect();

    let mut ordered_sets: Vec<&SampledSet> = sampled_sets.iter().collect();
    ordered_sets.sort_by(|a, b| {
        a.concept_id
            .cmp(&b.concept_id)
            .then_with(|| a.style.cmp(&b.style))
    });

    let mut outcome = CollectionOutcome::default();
    for endpoint in models {
        // One flat cell list per endpoint keeps the bounded-parallel run in
        // canonical order.
        let mut cells: Vec<(&StimulusRecord, u32, u32)> = Vec::new();
        for set in &ordered_sets {
            for stimulus_id in &set.stimulus_ids {
                let record = by_id.get(stimulus_id.as_str()).ok_or_else(|| {
                    Error::MissingArtifact(format!(
                        "sampled stimulus '{stimulus_id}' is not in the manifest"
                    ))
                })?;
                for prompt_id in 0..prompts.attribute_templates.len() as u32 {
                    for rep in 0..prompts.reps {
                        cells.push((record, prompt_id, rep));
                    }
                }
            }
        }
        let responses = run_bounded(
            &cells,
            endpoint.max_parallel as usize,
            |(record, prompt_id, rep)| {
                let image = load_image(images_root, record)?;
                let request = ChatRequest::with_image(
                    image,
                    prompts.attribute_prompt(*prompt_id, record.category),
                );
                let cell = CellMeta {
                    stimulus: Some(record),
                    phase: Phase::Attributes,
                    prompt_id: *prompt_id,
                    rep: *rep,
                };
                cached_query(
                    cache,
                    client,
                    endpoint,
                    &record.stimulus_id,
                    &cell,
                    &request,
                    clock,
                )
            },
        );
        for ((record, prompt_id, rep), result) in cells.iter().zip(responses) {
            match result {
                Ok(mut response) => {
                    // Pixel-identical stimuli share one cached logical query;
                    // the log still carries one line per protocol cell, so a
                    // shared record is relabeled to the cell that asked.
                    if response.stimulus_id != record.stimulus_id {
                        response.stimulus_id = record.stimulus_id.clone();
                        response.concept_id = record.concept_id.clone();
                        response.style = Some(record.style);
                    }
                    outcome.records.push(response);
                }
                Err(e) => outcome.failures.push(FailedCell {
                    stimulus_id: record.stimulus_id.clone(),
                    model_id: endpoint.id.clone(),
                    phase: Phase::Attributes,
                    prompt_id: *prompt_id,
                    rep: *rep,
                    error: e.to_string(),
                }),
            }
        }
    }
    Ok(outcome)
}

/// Checks that every (concept, style, model) stratum has exactly
/// `n * prompts * reps` response cells. Returns the per-stratum cell count.
pub fn check_stratum_completeness(
    records: &[ResponseRecord],
    sampled_sets: &[SampledSet],
    models: &[ModelEndpoint],
    manifest: &[StimulusRecord],
    prompts: &PromptSet,
    n: usize,
) -> Result<usize> {
    let expected = n * prompts.attribute_templates.len() * prompts.reps as usize;
    let style_of: HashMap<&str, StyleFamily> = manifest
        .iter()
        .map(|r| (r.stimulus_id.as_str(), r.style))
        .collect();
    let concept_of: HashMap<&str, &str> = manifest
        .iter()
        .map(|r| (r.stimulus_id.as_str(), r.concept_id.as_str()))
        .collect();

    let mut tally: BTreeMap<(String, StyleFamily, String), usize> = BTreeMap::new();
    let mut seen: BTreeSet<(&str, &str, u32, u32)> = BTreeSet::new();
    for record in records {
        // Protocol cells are identified by stimulus, not by request digest:
        // pixel-identical stimuli legitimately share a digest.
        seen.insert((
            record.stimulus_id.as_str(),
            record.model_id.as_str(),
            record.prompt_id,
            record.rep,
        ));
        let (Some(&concept), Some(&style)) = (
            concept_of.get(record.stimulus_id.as_str()),
            style_of.get(record.stimulus_id.as_str()),
        ) else {
            return Err(Error::MissingArtifact(format!(
                "response for unknown stimulus '{}'",
                record.stimulus_id
            )));
        };
        *tally
            .entry((concept.to_string(), style, record.model_id.clone()))
            .or_default() += 1;
    }
    if seen.len() != records.len() {
        return Err(Error::Validation(
            "response log contains duplicate cells".into(),
        ));
    }

    for set in sampled_sets {
        for endpoint in models {
            let found = tally
                .get(&(set.concept_id.clone(), set.style, endpoint.id.clone()))
                .copied()
                .unwrap_or(0);
            if found != expected {
                return Err(Error::IncompleteStratum {
                    stratum: format!("({}, {}, {})", set.concept_id, set.style, endpoint.id),
                    expected,
                    found,
                });
            }
        }
    }
    Ok(expected)
}
