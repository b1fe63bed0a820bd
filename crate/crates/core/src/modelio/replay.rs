//! Replay client: serves cells from a previously written response log, so an
//! analysis can be reproduced without touching any endpoint.

use std::collections::HashMap;
use std::path::Path;

use super::{request_digest, CellMeta, ChatClient, ChatRequest, ModelEndpoint, ResponseRecord};
use crate::error::{Error, Result};

pub struct ReplayClient {
    by_digest: HashMap<String, String>,
}

impl ReplayClient {
    pub fn from_records(records: impl IntoIterator<Item = ResponseRecord>) -> Self {
        let by_digest = records
            .into_iter()
            .map(|r| (r.request_digest, r.raw_text))
            .collect();
        ReplayClient { by_digest }
    }

    /// Loads a JSONL response log.
    pub fn from_log(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: ResponseRecord =
                serde_json::from_str(line).map_err(|e| Error::Malformed {
                    what: "response log line",
                    path: path.into(),
                    reason: format!("line {}: {e}", lineno + 1),
                })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

impl ChatClient for ReplayClient {
    fn query(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
        cell: &CellMeta<'_>,
    ) -> Result<String> {
        let digest = request_digest(&endpoint.id, request, cell.rep);
        self.by_digest.get(&digest).cloned().ok_or_else(|| {
            Error::ScriptMiss(format!(
                "replay log lacks cell ({}, {}, prompt {}, rep {})",
                endpoint.id, cell.phase, cell.prompt_id, cell.rep
            ))
        })
    }
}
