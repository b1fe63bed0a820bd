//! On-disk response cache: one JSON file per query cell under
//! `<root>/<model_id>/<request_digest>.json`, written atomically
//! (create-then-rename) so concurrent writers cannot interleave.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::ResponseRecord;
use crate::error::{Error, Result};

// Distinguishes concurrent writers of the same entry (pixel-identical
// stimuli share a digest), so each rename source is unique.
static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(ResponseCache { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, model_id: &str, digest: &str) -> PathBuf {
        self.root.join(model_id).join(format!("{digest}.json"))
    }

    /// Looks up a cell. A present-but-unreadable or mismatched entry is a
    /// cache error naming the file, never silently ignored.
    pub fn get(&self, model_id: &str, digest: &str) -> Result<Option<ResponseRecord>> {
        let path = self.entry_path(model_id, digest);
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let record: ResponseRecord = serde_json::from_slice(&bytes).map_err(|e| Error::Cache {
            file: path.clone(),
            reason: format!("unparseable entry: {e}"),
        })?;
        if record.request_digest != digest || record.model_id != model_id {
            return Err(Error::Cache {
                file: path,
                reason: format!(
                    "entry identifies cell {}/{} but was read back as {model_id}/{digest}",
                    record.model_id, record.request_digest
                ),
            });
        }
        Ok(Some(record))
    }

    /// Persists a record atomically.
    pub fn put(&self, record: &ResponseRecord) -> Result<()> {
        let path = self.entry_path(&record.model_id, &record.request_digest);
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension(format!(
            "tmp.{}.{}",
            std::process::id(),
            TMP_SEQ.fetch_add(1, Ordering::Relaxed)
        ));
        {
            let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let bytes = serde_json::to_vec(record).map_err(|e| Error::Cache {
                file: path.clone(),
                reason: e.to_string(),
            })?;
            file.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}
