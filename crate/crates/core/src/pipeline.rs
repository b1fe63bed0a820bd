//! Phase orchestration over a state directory. Every phase is idempotent and
//! resumable: it reads its prerequisites from disk, consults the response
//! cache for queries already answered, and rewrites its outputs in canonical
//! order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExtractionMode, ReportKind, RunConfig};
use crate::error::{Error, Result};
use crate::extract::{
    extract_llm, extract_rule_based, read_attribute_lists, write_attribute_lists, AttributeList,
};
use crate::modelio::{run_bounded, ChatClient, Clock, ResponseCache, ResponseRecord};
use crate::protocol::{
    filter_and_sample, identification_accuracy, run_identification, FilterReport,
    IdentificationResult,
};
use crate::report::{
    emit_concept_table, emit_top_n_report, emit_tv_chart, emit_within_across_chart, RunManifest,
};
use crate::stats::{
    build_distribution, compare_styles, within_across_tv, Stratum, StyleComparison,
    TermDistribution, WithinAcrossTv,
};
use crate::stimulus::{
    enumerate_plan, read_manifest, render_stimulus, write_manifest, FontStore, StimulusRecord,
    StyleFamily,
};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const IMAGES_DIR: &str = "images";
pub const CACHE_DIR: &str = "cache";
pub const IDENTIFY_FILE: &str = "identify.jsonl";
pub const IDENTIFY_FAILURES_FILE: &str = "identify_failures.jsonl";
pub const ACCURACY_FILE: &str = "accuracy.json";
pub const FILTER_FILE: &str = "filter.json";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const COLLECT_FAILURES_FILE: &str = "collect_failures.jsonl";
pub const ATTRIBUTES_FILE: &str = "attributes.jsonl";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const REPORT_DIR: &str = "report";

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| Error::Malformed {
            what: "record",
            path: path.into(),
            reason: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(line).map_err(|e| Error::Malformed {
            what,
            path: path.into(),
            reason: format!("line {}: {e}", lineno + 1),
        })?);
    }
    Ok(items)
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(format!(
            "{} (run `{produced_by}` first)",
            path.display()
        )))
    }
}

/// Per-(model, style) identification accuracy over the original stimuli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub model_id: String,
    pub style: StyleFamily,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub entries: Vec<AccuracyEntry>,
}

/// Everything the analyze phase derives; consumed by the report phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDocument {
    pub tau: u64,
    pub top_n: usize,
    pub comparisons: Vec<StyleComparison>,
    pub within_across: Vec<(String, WithinAcrossTv)>,
    pub accuracies: Vec<AccuracyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSummary {
    pub stimuli: usize,
    pub concepts: usize,
    pub manifest_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifySummary {
    pub cells: usize,
    pub failures: usize,
    pub accuracies: Vec<AccuracyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub cells: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub lists: usize,
    pub empty_lists: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub written: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub render: RenderSummary,
    pub identify: IdentifySummary,
    pub filter: FilterReport,
    pub collect: CollectSummary,
    pub extract: ExtractSummary,
    pub analysis: AnalysisDocument,
    pub report: ReportSummary,
}

/// Binds a validated config, a state directory, and a client into the
/// phase-oriented pipeline.
pub struct Pipeline<'a> {
    pub config: &'a RunConfig,
    pub state_dir: PathBuf,
    pub client: &'a dyn ChatClient,
    pub clock: &'a dyn Clock,
}

impl Pipeline<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.state_dir.join(name)
    }

    fn cache(&self) -> Result<ResponseCache> {
        ResponseCache::open(self.path(CACHE_DIR))
    }

    fn load_manifest(&self) -> Result<Vec<StimulusRecord>> {
        let path = self.path(MANIFEST_FILE);
        require(&path, "render")?;
        read_manifest(&path)
    }

    fn load_filter(&self) -> Result<FilterReport> {
        let path = self.path(FILTER_FILE);
        require(&path, "filter")?;
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            what: "filter report",
            path,
            reason: e.to_string(),
        })
    }

    /// Renders every stimulus and writes the manifest in canonical order.
    pub fn render(&self) -> Result<RenderSummary> {
        fs::create_dir_all(self.path(IMAGES_DIR))
            .map_err(|e| Error::io(self.path(IMAGES_DIR), e))?;
        let concepts = self.config.concepts().to_vec();
        let mut plan = enumerate_plan(&concepts, &self.config.styles, self.config.seed)?;
        let store = FontStore::load(self.config.styles.all_fonts())?;
        let canvas = self.config.canvas;

        let workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(8);
        let rendered = run_bounded(&plan, workers, |record| -> Result<(Vec<u8>, String)> {
            let png = render_stimulus(record, &store, canvas)?;
            let digest = format!("{:x}", Sha256::digest(&png));
            Ok((png, digest))
        });
        for (record, result) in plan.iter_mut().zip(rendered) {
            let (png, digest) = result?;
            let rel = format!("{IMAGES_DIR}/{}.png", record.stimulus_id);
            let path = self.state_dir.join(&rel);
            fs::write(&path, &png).map_err(|e| Error::io(&path, e))?;
            record.image_path = rel;
            record.sha256 = digest;
        }
        write_manifest(&plan, &self.path(MANIFEST_FILE))?;
        Ok(RenderSummary {
            stimuli: plan.len(),
            concepts: concepts.len(),
            manifest_path: self.path(MANIFEST_FILE),
        })
    }

    /// One identification query per (stimulus, model); writes the result log
    /// and per-(model, style) accuracies over the original stimuli.
    pub fn identify(&self) -> Result<IdentifySummary> {
        let manifest = self.load_manifest()?;
        let cache = self.cache()?;
        let outcome = run_identification(
            &manifest,
            &self.config.models,
            &self.config.prompts,
            self.client,
            &cache,
            self.clock,
            &self.state_dir,
        )?;
        write_jsonl(&outcome.results, &self.path(IDENTIFY_FILE))?;
        write_jsonl(&outcome.failures, &self.path(IDENTIFY_FAILURES_FILE))?;

        let accuracies = compute_accuracies(&outcome.results, &manifest)?;
        let report = AccuracyReport {
            entries: accuracies.clone(),
        };
        let path = self.path(ACCURACY_FILE);
        fs::write(
            &path,
            serde_json::to_string_pretty(&report).expect("accuracy serializes"),
        )
        .map_err(|e| Error::io(&path, e))?;
        Ok(IdentifySummary {
            cells: outcome.results.len(),
            failures: outcome.failures.len(),
            accuracies,
        })
    }

    /// Applies the joint-model gate and samples the retained stimuli.
    pub fn filter(&self) -> Result<FilterReport> {
        let manifest = self.load_manifest()?;
        let identify_path = self.path(IDENTIFY_FILE);
        require(&identify_path, "identify")?;
        let results: Vec<IdentificationResult> =
            read_jsonl(&identify_path, "identification result")?;
        let report = filter_and_sample(
            &results,
            &manifest,
            self.config.sampling.n,
            self.config.sampling_seed(),
            &self.config.filter_models(),
        )?;
        let path = self.path(FILTER_FILE);
        fs::write(
            &path,
            serde_json::to_string_pretty(&report).expect("filter report serializes"),
        )
        .map_err(|e| Error::io(&path, e))?;
        Ok(report)
    }

    /// Collects every attribute cell for the sampled stimuli.
    pub fn collect(&self) -> Result<CollectSummary> {
        let manifest = self.load_manifest()?;
        let filter = self.load_filter()?;
        let cache = self.cache()?;
        let outcome = crate::protocol::collect_attributes(
            &filter.sampled_sets,
            &manifest,
            &self.config.models,
            &self.config.prompts,
            self.client,
            &cache,
            self.clock,
            &self.state_dir,
        )?;
        write_jsonl(&outcome.records, &self.path(RESPONSES_FILE))?;
        write_jsonl(&outcome.failures, &self.path(COLLECT_FAILURES_FILE))?;
        Ok(CollectSummary {
            cells: outcome.records.len(),
            failures: outcome.failures.len(),
        })
    }

    /// Converts every collected response into a normalized term list, one
    /// list per response cell, preserving log order.
    pub fn extract(&self) -> Result<ExtractSummary> {
        let manifest = self.load_manifest()?;
        let responses_path = self.path(RESPONSES_FILE);
        require(&responses_path, "collect")?;
        let responses: Vec<ResponseRecord> = read_jsonl(&responses_path, "response record")?;

        let by_id: BTreeMap<&str, &StimulusRecord> = manifest
            .iter()
            .map(|r| (r.stimulus_id.as_str(), r))
            .collect();
        let policy = &self.config.extraction.policy;
        let cache = self.cache()?;

        let mut lists = Vec::with_capacity(responses.len());
        let mut empty_lists = 0usize;
        for response in &responses {
            let record = by_id.get(response.stimulus_id.as_str()).ok_or_else(|| {
                Error::MissingArtifact(format!(
                    "response for stimulus '{}' not present in manifest",
                    response.stimulus_id
                ))
            })?;
            let terms = match self.config.extraction.mode {
                ExtractionMode::RuleBased => extract_rule_based(&response.raw_text, policy),
                ExtractionMode::Llm => {
                    let extractor = self
                        .config
                        .extraction
                        .extractor
                        .as_ref()
                        .expect("validated: llm mode has an extractor");
                    extract_llm(
                        &response.raw_text,
                        policy,
                        extractor,
                        self.client,
                        &cache,
                        &response.request_digest,
                        self.clock,
                    )?
                }
            };
            if terms.is_empty() {
                empty_lists += 1;
            }
            lists.push(AttributeList {
                stimulus_id: response.stimulus_id.clone(),
                concept_id: record.concept_id.clone(),
                style: record.style,
                model_id: response.model_id.clone(),
                prompt_id: response.prompt_id,
                rep: response.rep,
                terms,
            });
        }
        write_attribute_lists(&lists, &self.path(ATTRIBUTES_FILE))?;
        Ok(ExtractSummary {
            lists: lists.len(),
            empty_lists,
        })
    }

    /// Refuses incomplete strata, then computes every per-concept comparison
    /// and the per-font within/across-style averages.
    pub fn analyze(&self) -> Result<AnalysisDocument> {
        let manifest = self.load_manifest()?;
        let filter = self.load_filter()?;
        let attributes_path = self.path(ATTRIBUTES_FILE);
        require(&attributes_path, "extract")?;
        let lists = read_attribute_lists(&attributes_path)?;

        let identify_path = self.path(IDENTIFY_FILE);
        require(&identify_path, "identify")?;
        let identify: Vec<IdentificationResult> =
            read_jsonl(&identify_path, "identification result")?;
        let accuracies = compute_accuracies(&identify, &manifest)?;

        let analysis = analyze_lists(self.config, &manifest, &filter, &lists, accuracies)?;
        let path = self.path(ANALYSIS_FILE);
        fs::write(
            &path,
            serde_json::to_string_pretty(&analysis).expect("analysis serializes"),
        )
        .map_err(|e| Error::io(&path, e))?;
        Ok(analysis)
    }

    /// Emits the configured report artifacts and the run manifest.
    pub fn report(&self) -> Result<ReportSummary> {
        let analysis_path = self.path(ANALYSIS_FILE);
        require(&analysis_path, "analyze")?;
        let text = fs::read_to_string(&analysis_path).map_err(|e| Error::io(&analysis_path, e))?;
        let analysis: AnalysisDocument =
            serde_json::from_str(&text).map_err(|e| Error::Malformed {
                what: "analysis document",
                path: analysis_path,
                reason: e.to_string(),
            })?;
        let filter = self.load_filter()?;
        let manifest = self.load_manifest()?;

        let report_dir = self.path(REPORT_DIR);
        fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;
        let mut written = Vec::new();

        let reports = &self.config.output.reports;
        if reports.contains(&ReportKind::Csv) {
            let path = report_dir.join("concepts.csv");
            emit_concept_table(&analysis.comparisons, &path)?;
            written.push(path);
        }
        if reports.contains(&ReportKind::TvChart) {
            for model in &self.config.models {
                let path = report_dir.join(format!("tv_{}.svg", model.id));
                emit_tv_chart(&analysis.comparisons, &model.id, &path)?;
                written.push(path);
            }
        }
        if reports.contains(&ReportKind::WithinAcrossChart) {
            let path = report_dir.join("within_across.svg");
            emit_within_across_chart(&analysis.within_across, &path)?;
            written.push(path);
        }
        if reports.contains(&ReportKind::TopN) {
            let path = report_dir.join("top_n.json");
            emit_top_n_report(&analysis.comparisons, &path)?;
            written.push(path);
        }

        let responses: Vec<ResponseRecord> = if self.path(RESPONSES_FILE).exists() {
            read_jsonl(&self.path(RESPONSES_FILE), "response record")?
        } else {
            Vec::new()
        };
        let identify: Vec<IdentificationResult> = if self.path(IDENTIFY_FILE).exists() {
            read_jsonl(&self.path(IDENTIFY_FILE), "identification result")?
        } else {
            Vec::new()
        };
        let concepts_original = self.config.concepts().len();
        let now = self.clock.now_unix();
        let run_manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: self.config.digest(),
            run_seed: self.config.seed,
            model_ids: self.config.models.iter().map(|m| m.id.clone()).collect(),
            concepts_original,
            concepts_retained: filter.retained.len(),
            eliminated_labels: filter.eliminated.iter().map(|e| e.label.clone()).collect(),
            identify_cells: identify.len(),
            attribute_cells: responses.len(),
            started_unix: now,
            finished_unix: now,
        };
        let path = report_dir.join("run_manifest.json");
        run_manifest.write(&path)?;
        written.push(path);
        let _ = manifest;
        Ok(ReportSummary { written })
    }

    /// All phases in order with barriers between them.
    pub fn run_all(&self) -> Result<RunSummary> {
        let render = self.render()?;
        let identify = self.identify()?;
        let filter = self.filter()?;
        let collect = self.collect()?;
        let extract = self.extract()?;
        let analysis = self.analyze()?;
        let report = self.report()?;
        Ok(RunSummary {
            render,
            identify,
            filter,
            collect,
            extract,
            analysis,
            report,
        })
    }
}

fn compute_accuracies(
    results: &[IdentificationResult],
    manifest: &[StimulusRecord],
) -> Result<Vec<AccuracyEntry>> {
    let style_of: BTreeMap<&str, StyleFamily> = manifest
        .iter()
        .map(|r| (r.stimulus_id.as_str(), r.style))
        .collect();
    let mut grouped: BTreeMap<(String, StyleFamily), Vec<IdentificationResult>> = BTreeMap::new();
    for result in results {
        let Some(&style) = style_of.get(result.stimulus_id.as_str()) else {
            return Err(Error::MissingArtifact(format!(
                "identification result for unknown stimulus '{}'",
                result.stimulus_id
            )));
        };
        grouped
            .entry((result.model_id.clone(), style))
            .or_default()
            .push(result.clone());
    }
    let mut entries = Vec::new();
    for ((model_id, style), slice) in grouped {
        let accuracy = identification_accuracy(&slice)?;
        entries.push(AccuracyEntry {
            model_id,
            style,
            correct: slice.iter().filter(|r| r.correct).count(),
            total: slice.len(),
            accuracy,
        });
    }
    Ok(entries)
}

/// Pure analysis over extracted lists: completeness gate, per-concept
/// comparisons, per-font within/across averages.
pub fn analyze_lists(
    config: &RunConfig,
    manifest: &[StimulusRecord],
    filter: &FilterReport,
    lists: &[AttributeList],
    accuracies: Vec<AccuracyEntry>,
) -> Result<AnalysisDocument> {
    let expected = filter.sample_size
        * config.prompts.attribute_templates.len()
        * config.prompts.reps as usize;

    let retained: std::collections::BTreeSet<&str> =
        filter.retained.iter().map(String::as_str).collect();
    let sampled_ids: std::collections::BTreeSet<&str> = filter
        .sampled_sets
        .iter()
        .flat_map(|s| s.stimulus_ids.iter().map(String::as_str))
        .collect();
    let font_of: BTreeMap<&str, &str> = manifest
        .iter()
        .map(|r| (r.stimulus_id.as_str(), r.font.as_str()))
        .collect();
    let meta_of: BTreeMap<&str, &StimulusRecord> = manifest
        .iter()
        .map(|r| (r.concept_id.as_str(), r))
        .collect();

    // Lists per stratum, only for retained concepts and sampled stimuli.
    let mut per_stratum: BTreeMap<(String, String, StyleFamily), Vec<Vec<String>>> =
        BTreeMap::new();
    let mut per_font: BTreeMap<(String, StyleFamily, String), Vec<Vec<String>>> = BTreeMap::new();
    for list in lists {
        if !retained.contains(list.concept_id.as_str())
            || !sampled_ids.contains(list.stimulus_id.as_str())
        {
            continue;
        }
        per_stratum
            .entry((list.model_id.clone(), list.concept_id.clone(), list.style))
            .or_default()
            .push(list.terms.clone());
        let font = font_of.get(list.stimulus_id.as_str()).ok_or_else(|| {
            Error::MissingArtifact(format!(
                "attribute list for unknown stimulus '{}'",
                list.stimulus_id
            ))
        })?;
        per_font
            .entry((list.model_id.clone(), list.style, font.to_string()))
            .or_default()
            .push(list.terms.clone());
    }

    // Completeness gate: every retained stratum has its full cell count.
    for model in &config.models {
        for set in &filter.sampled_sets {
            let found = per_stratum
                .get(&(model.id.clone(), set.concept_id.clone(), set.style))
                .map_or(0, Vec::len);
            if found != expected {
                return Err(Error::IncompleteStratum {
                    stratum: format!("({}, {}, {})", set.concept_id, set.style, model.id),
                    expected,
                    found,
                });
            }
        }
    }

    let counting = config.analysis.counting;
    let mut comparisons = Vec::new();
    for model in &config.models {
        for concept_id in &filter.retained {
            let meta = meta_of.get(concept_id.as_str()).ok_or_else(|| {
                Error::MissingArtifact(format!("concept '{concept_id}' missing from manifest"))
            })?;
            let dist = |style: StyleFamily| -> Result<TermDistribution> {
                let lists = &per_stratum[&(model.id.clone(), concept_id.clone(), style)];
                build_distribution(
                    Stratum {
                        concept_id: concept_id.clone(),
                        style,
                        model_id: model.id.clone(),
                        font: None,
                    },
                    lists,
                    counting,
                )
            };
            let functional = dist(StyleFamily::Functional)?;
            let decorative = dist(StyleFamily::Decorative)?;
            comparisons.push(compare_styles(
                &meta.label,
                meta.category,
                &functional,
                &decorative,
                config.analysis.tau,
                config.analysis.top_n,
            )?);
        }
    }

    let mut within_across = Vec::new();
    for model in &config.models {
        let mut fonts: BTreeMap<(StyleFamily, String), TermDistribution> = BTreeMap::new();
        for ((model_id, style, font), lists) in &per_font {
            if model_id != &model.id {
                continue;
            }
            fonts.insert(
                (*style, font.clone()),
                build_distribution(
                    Stratum {
                        concept_id: "*".into(),
                        style: *style,
                        model_id: model.id.clone(),
                        font: Some(font.clone()),
                    },
                    lists,
                    counting,
                )?,
            );
        }
        within_across.push((model.id.clone(), within_across_tv(&fonts)?));
    }

    Ok(AnalysisDocument {
        tau: config.analysis.tau,
        top_n: config.analysis.top_n,
        comparisons,
        within_across,
        accuracies,
    })
}
