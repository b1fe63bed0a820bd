//! Scripted mock client: a fully deterministic stand-in for live endpoints.
//!
//! The fixture declares, per concept and optionally per style, how
//! identification and attribute queries are answered. Identification errors
//! are injected per cell through selectors on (style, font, placement, size),
//! so any accuracy level can be scripted exactly. The client counts real
//! "network" calls and keeps a request log so tests can assert statelessness
//! and resumability.
//!
//! Caching is keyed by image content, so stimuli with pixel-identical images
//! share a single logical query. A fixture whose replies differ between two
//! such twins (e.g. a per-font selector under a config that reuses one font
//! file under two names) cannot be honored: whichever twin is queried first
//! answers for both.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CellMeta, ChatClient, ChatRequest, ModelEndpoint, Phase};
use crate::error::{Error, Result};
use crate::stimulus::{Placement, StimulusRecord, StyleFamily};

/// Matches a subset of a concept's stimuli. Absent fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<StyleFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub font: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u32>,
}

impl CellSelector {
    fn matches(&self, record: &StimulusRecord) -> bool {
        self.style.is_none_or(|s| s == record.style)
            && self.font.as_ref().is_none_or(|f| *f == record.font)
            && self.placement.is_none_or(|p| p == record.placement)
            && self.size.is_none_or(|s| s == record.size)
    }
}

/// How identification queries are answered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyScript {
    /// Reply for cells not matched by `wrong_cells`; defaults to echoing the
    /// concept label (a correct identification).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// Stimuli answered with `wrong_reply` instead.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wrong_cells: Vec<CellSelector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrong_reply: Option<String>,
}

/// How attribute queries are answered. Most specific wins: a schedule entry
/// keyed `style:prompt:rep` or `prompt:rep`, then the per-style reply, then
/// `fixed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decorative: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub schedule: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identify: Option<IdentifyScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<AttributeScript>,
}

/// How the auxiliary extractor endpoint is scripted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "mode")]
pub enum ExtractorScript {
    /// Return the user content unchanged.
    Echo,
    Fixed {
        text: String,
    },
    /// Exact-match lookup from user content to reply.
    Map {
        entries: BTreeMap<String, String>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    /// Fallback script for concepts without their own entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ConceptScript>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub concepts: BTreeMap<String, ConceptScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<ExtractorScript>,
}

impl MockFixture {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            what: "mock fixture",
            path: path.into(),
            reason: e.to_string(),
        })
    }

    /// All-correct identification, one fixed attribute reply for every
    /// concept and style.
    pub fn uniform(attribute_reply: &str) -> Self {
        MockFixture {
            default: Some(ConceptScript {
                identify: Some(IdentifyScript::default()),
                attributes: Some(AttributeScript {
                    fixed: Some(attribute_reply.to_string()),
                    ..AttributeScript::default()
                }),
            }),
            concepts: BTreeMap::new(),
            extractor: Some(ExtractorScript::Echo),
        }
    }
}

/// One observed query. `prompt`/`system` capture the full request text so
/// statelessness is assertable.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestLogEntry {
    pub model_id: String,
    pub stimulus_id: Option<String>,
    pub phase: Phase,
    pub prompt_id: u32,
    pub rep: u32,
    pub prompt: String,
    pub system: Option<String>,
    pub has_image: bool,
}

pub struct MockClient {
    fixture: MockFixture,
    calls: AtomicUsize,
    log: Mutex<Vec<RequestLogEntry>>,
}

impl MockClient {
    pub fn new(fixture: MockFixture) -> Self {
        MockClient {
            fixture,
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(MockFixture::from_file(path)?))
    }

    /// Number of queries that reached this client (cache hits never do).
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn request_log(&self) -> Vec<RequestLogEntry> {
        self.log.lock().expect("request log poisoned").clone()
    }

    fn concept_script(&self, concept_id: &str) -> Option<&ConceptScript> {
        self.fixture
            .concepts
            .get(concept_id)
            .or(self.fixture.default.as_ref())
    }

    fn answer_identify(&self, record: &StimulusRecord) -> Result<String> {
        let script = self
            .concept_script(&record.concept_id)
            .and_then(|c| c.identify.as_ref())
            .ok_or_else(|| Error::ScriptMiss(format!("({}, identify)", record.concept_id)))?;
        if script.wrong_cells.iter().any(|sel| sel.matches(record)) {
            return Ok(script
                .wrong_reply
                .clone()
                .unwrap_or_else(|| "unidentified".into()));
        }
        Ok(script.reply.clone().unwrap_or_else(|| record.label.clone()))
    }

    fn answer_attributes(&self, record: &StimulusRecord, cell: &CellMeta<'_>) -> Result<String> {
        let miss = || {
            Error::ScriptMiss(format!(
                "({}, attributes, {}, prompt {}, rep {})",
                record.concept_id, record.style, cell.prompt_id, cell.rep
            ))
        };
        let script = self
            .concept_script(&record.concept_id)
            .and_then(|c| c.attributes.as_ref())
            .ok_or_else(miss)?;
        let styled_key = format!("{}:{}:{}", record.style, cell.prompt_id, cell.rep);
        let plain_key = format!("{}:{}", cell.prompt_id, cell.rep);
        if let Some(reply) = script.schedule.get(&styled_key) {
            return Ok(reply.clone());
        }
        if let Some(reply) = script.schedule.get(&plain_key) {
            return Ok(reply.clone());
        }
        let per_style = match record.style {
            StyleFamily::Functional => script.functional.as_ref(),
            StyleFamily::Decorative => script.decorative.as_ref(),
        };
        per_style
            .or(script.fixed.as_ref())
            .cloned()
            .ok_or_else(miss)
    }

    fn answer_extract(&self, request: &ChatRequest) -> Result<String> {
        match self
            .fixture
            .extractor
            .as_ref()
            .ok_or_else(|| Error::ScriptMiss("(extractor)".into()))?
        {
            ExtractorScript::Echo => Ok(request.prompt.clone()),
            ExtractorScript::Fixed { text } => Ok(text.clone()),
            ExtractorScript::Map { entries } => {
                entries.get(&request.prompt).cloned().ok_or_else(|| {
                    Error::ScriptMiss(format!("(extractor, input {:?})", request.prompt))
                })
            }
        }
    }
}

impl ChatClient for MockClient {
    fn query(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
        cell: &CellMeta<'_>,
    ) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .expect("request log poisoned")
            .push(RequestLogEntry {
                model_id: endpoint.id.clone(),
                stimulus_id: cell.stimulus.map(|s| s.stimulus_id.clone()),
                phase: cell.phase,
                prompt_id: cell.prompt_id,
                rep: cell.rep,
                prompt: request.prompt.clone(),
                system: request.system.clone(),
                has_image: request.image_png.is_some(),
            });
        match cell.phase {
            Phase::Extract => self.answer_extract(request),
            Phase::Identify | Phase::Attributes => {
                let record = cell.stimulus.ok_or_else(|| {
                    Error::ScriptMiss(format!("({} query without stimulus metadata)", cell.phase))
                })?;
                match cell.phase {
                    Phase::Identify => self.answer_identify(record),
                    _ => self.answer_attributes(record, cell),
                }
            }
        }
    }
}
