//! File-backed pipeline store under the data directory.
//!
//! Documents live once under `objects/{hash}.json` in canonical form;
//! `pipelines/{id}` holds the hash a name currently points at.

use std::path::{Path, PathBuf};

use noetic_core::io::write_atomic;
use noetic_flow::{content_hash, parse_pipeline, save_pipeline, PipelineDoc};

pub const DATA_DIR_ENV: &str = "NOETIC_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "noetic-data";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("invalid pipeline id '{0}': use 1-64 characters from [A-Za-z0-9_.-]")]
    BadId(String),
    #[error("pipeline '{0}' not found")]
    NotFound(String),
    #[error("pipeline '{id}' is corrupted: {reason}")]
    Corrupted { id: String, reason: String },
    #[error("store I/O at {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn valid_id(id: &str) -> bool {
    (1..=64).contains(&id.len())
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["objects", "pipelines"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(Self { root })
    }

    /// Opens `$NOETIC_DATA_DIR`, or `./noetic-data` when unset.
    pub fn from_env() -> Result<Self, StoreError> {
        Self::open(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_DATA_DIR.into()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn name_path(&self, id: &str) -> PathBuf {
        self.root.join("pipelines").join(id)
    }

    fn object_path(&self, hash: &str) -> PathBuf {
        self.root.join("objects").join(format!("{hash}.json"))
    }

    /// Stores `doc` under `id` and returns its content hash. The caller
    /// validates the document first.
    pub fn put(&self, id: &str, doc: &PipelineDoc) -> Result<String, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::BadId(id.into()));
        }
        let hash = content_hash(doc);
        let obj = self.object_path(&hash);
        let text = save_pipeline(doc);
        let existing = std::fs::read_to_string(&obj).ok();
        if existing.as_deref() != Some(text.as_str()) {
            write_atomic(&obj, text.as_bytes()).map_err(|e| io_err(&obj, e))?;
        }
        let name = self.name_path(id);
        write_atomic(&name, hash.as_bytes()).map_err(|e| io_err(&name, e))?;
        Ok(hash)
    }

    /// Loads a document and checks it still matches the hash it was stored under.
    pub fn get(&self, id: &str) -> Result<(PipelineDoc, String), StoreError> {
        if !valid_id(id) {
            return Err(StoreError::BadId(id.into()));
        }
        let name = self.name_path(id);
        let hash = match std::fs::read_to_string(&name) {
            Ok(h) => h.trim().to_string(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.into())),
            Err(e) => return Err(io_err(&name, e)),
        };
        let obj = self.object_path(&hash);
        let text = std::fs::read_to_string(&obj)
            .map_err(|e| StoreError::Corrupted { id: id.into(), reason: format!("object {hash}: {e}") })?;
        let doc = parse_pipeline(&text, &obj.display().to_string())
            .map_err(|e| StoreError::Corrupted { id: id.into(), reason: e.to_string() })?;
        let actual = content_hash(&doc);
        if actual != hash {
            return Err(StoreError::Corrupted { id: id.into(), reason: format!("content hash {actual} != {hash}") });
        }
        Ok((doc, hash))
    }

    /// Stored pipeline ids, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("pipelines");
        let mut ids: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| valid_id(n))
            .collect();
        ids.sort();
        Ok(ids)
    }
}
