use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use uuid::Uuid;

use super::{AccessError, ResourceRecord};

/// Resource metadata keyed by id.
#[derive(Default)]
pub struct Directory {
    records: RwLock<HashMap<Uuid, ResourceRecord>>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, record: ResourceRecord) -> Result<(), AccessError> {
        let mut records = self.records.write();
        if records.contains_key(&record.resource_id) {
            return Err(AccessError::InvalidInput(format!("resource {} exists", record.resource_id)));
        }
        records.insert(record.resource_id, record);
        Ok(())
    }

    pub fn get(&self, id: &Uuid) -> Option<ResourceRecord> {
        self.records.read().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.records.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Access-control policy store. Keeps the exact canonical bytes uploaded.
#[derive(Default)]
pub struct Acpm {
    policies: RwLock<HashMap<Uuid, Vec<u8>>>,
}

impl Acpm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, id: Uuid, canonical: Vec<u8>) {
        self.policies.write().insert(id, canonical);
    }

    pub fn get(&self, id: &Uuid) -> Option<Vec<u8>> {
        self.policies.read().get(id).cloned()
    }
}

/// Backend holding resource content behind a locator string.
pub trait ContentStore: Send + Sync {
    fn put(&self, id: Uuid, content: &[u8]) -> Result<String, AccessError>;
    fn get(&self, locator: &str) -> Result<Vec<u8>, AccessError>;
}

#[derive(Default)]
pub struct MemoryContentStore {
    blobs: RwLock<HashMap<String, Vec<u8>>>,
}

impl MemoryContentStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ContentStore for MemoryContentStore {
    fn put(&self, id: Uuid, content: &[u8]) -> Result<String, AccessError> {
        let locator = format!("mem://{id}");
        self.blobs.write().insert(locator.clone(), content.to_vec());
        Ok(locator)
    }

    fn get(&self, locator: &str) -> Result<Vec<u8>, AccessError> {
        self.blobs
            .read()
            .get(locator)
            .cloned()
            .ok_or_else(|| AccessError::NotFound(locator.to_string()))
    }
}

/// One file per resource under a root directory.
pub struct FileContentStore {
    root: PathBuf,
}

impl FileContentStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, AccessError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| AccessError::Transport(format!("{}: {e}", root.display())))?;
        Ok(FileContentStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ContentStore for FileContentStore {
    fn put(&self, id: Uuid, content: &[u8]) -> Result<String, AccessError> {
        let path = self.root.join(format!("{id}.bin"));
        fs::write(&path, content).map_err(|e| AccessError::Transport(format!("{}: {e}", path.display())))?;
        Ok(format!("file://{}", path.display()))
    }

    fn get(&self, locator: &str) -> Result<Vec<u8>, AccessError> {
        let path = locator
            .strip_prefix("file://")
            .ok_or_else(|| AccessError::InvalidInput(format!("not a file locator: {locator}")))?;
        let path = Path::new(path);
        // Only serve files this store wrote.
        if path.parent() != Some(self.root.as_path()) {
            return Err(AccessError::NotFound(locator.to_string()));
        }
        fs::read(path).map_err(|_| AccessError::NotFound(locator.to_string()))
    }
}
