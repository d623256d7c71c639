use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::codec::canonical_json;
use crate::did::{Did, DidDocument};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("document for {0} already exists")]
    Conflict(Did),
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt journal line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Storage behind the registry. Inserts are atomic; reads are linearizable per key.
pub trait DidStore: Send + Sync {
    fn insert(&self, doc: DidDocument) -> Result<(), StoreError>;
    fn get(&self, did: &Did) -> Result<Option<Arc<DidDocument>>, StoreError>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Default)]
pub struct MemoryStore {
    docs: RwLock<HashMap<Did, Arc<DidDocument>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DidStore for MemoryStore {
    fn insert(&self, doc: DidDocument) -> Result<(), StoreError> {
        let mut docs = self.docs.write();
        if docs.contains_key(&doc.did) {
            return Err(StoreError::Conflict(doc.did));
        }
        docs.insert(doc.did, Arc::new(doc));
        Ok(())
    }

    fn get(&self, did: &Did) -> Result<Option<Arc<DidDocument>>, StoreError> {
        Ok(self.docs.read().get(did).cloned())
    }

    fn len(&self) -> usize {
        self.docs.read().len()
    }
}

/// Append-only journal: one canonical JSON document per line, replayed on open.
pub struct JournalStore {
    path: PathBuf,
    file: Mutex<File>,
    index: MemoryStore,
    sync: bool,
}

impl JournalStore {
    /// Opens (or creates) the journal at `path`. With `sync` set every insert
    /// is flushed to stable storage before it becomes visible.
    pub fn open(path: impl AsRef<Path>, sync: bool) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let index = MemoryStore::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc: DidDocument = serde_json::from_str(&line)
                    .map_err(|e| StoreError::Corrupt { line: i + 1, reason: e.to_string() })?;
                index.insert(doc)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(JournalStore { path, file: Mutex::new(file), index, sync })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DidStore for JournalStore {
    fn insert(&self, doc: DidDocument) -> Result<(), StoreError> {
        let mut line = canonical_json(&doc).map_err(|e| StoreError::Corrupt {
            line: 0,
            reason: e.to_string(),
        })?;
        line.push(b'\n');
        let mut file = self.file.lock();
        if self.index.get(&doc.did)?.is_some() {
            return Err(StoreError::Conflict(doc.did));
        }
        file.write_all(&line)?;
        if self.sync {
            file.sync_data()?;
        }
        self.index.insert(doc)
    }

    fn get(&self, did: &Did) -> Result<Option<Arc<DidDocument>>, StoreError> {
        self.index.get(did)
    }

    fn len(&self) -> usize {
        self.index.len()
    }
}
