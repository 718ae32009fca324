//! Key-value persistence behind a small trait, with a durable file-backed
//! implementation and an in-memory one.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt record {collection}/{key}: {reason}")]
    Corrupt {
        collection: &'static str,
        key: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Collection {
    Users,
    Usernames,
    Pedigrees,
    Jobs,
    JobInputs,
    Results,
    Notifications,
}

impl Collection {
    pub const ALL: [Collection; 7] = [
        Collection::Users,
        Collection::Usernames,
        Collection::Pedigrees,
        Collection::Jobs,
        Collection::JobInputs,
        Collection::Results,
        Collection::Notifications,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Users => "users",
            Collection::Usernames => "usernames",
            Collection::Pedigrees => "pedigrees",
            Collection::Jobs => "jobs",
            Collection::JobInputs => "job_inputs",
            Collection::Results => "results",
            Collection::Notifications => "notifications",
        }
    }
}

/// Byte-level record storage. A `put` that returns Ok must survive a restart
/// for durable implementations; `delete` removes every copy of the record.
pub trait Store: Send + Sync {
    fn get(&self, c: Collection, key: &str) -> Result<Option<Vec<u8>>, StoreError>;
    fn put(&self, c: Collection, key: &str, value: &[u8]) -> Result<(), StoreError>;
    /// Returns whether a record was removed.
    fn delete(&self, c: Collection, key: &str) -> Result<bool, StoreError>;
    /// All keys in the collection, sorted.
    fn keys(&self, c: Collection) -> Result<Vec<String>, StoreError>;
}

pub fn get_json<T: DeserializeOwned>(s: &dyn Store, c: Collection, key: &str) -> Result<Option<T>, StoreError> {
    match s.get(c, key)? {
        None => Ok(None),
        Some(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| StoreError::Corrupt {
            collection: c.as_str(),
            key: key.to_string(),
            reason: e.to_string(),
        }),
    }
}

pub fn put_json<T: Serialize>(s: &dyn Store, c: Collection, key: &str, value: &T) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec(value).expect("records always serialize");
    s.put(c, key, &bytes)
}

/// One JSON file per record under `root/<collection>/<hex(key)>.json`.
/// Writes go through a synced temp file and an atomic rename.
#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl AsRef<Path>) -> Result<FileStore, StoreError> {
        let root = root.as_ref().to_path_buf();
        for c in Collection::ALL {
            fs::create_dir_all(root.join(c.as_str()))?;
        }
        // Leftovers from writes interrupted before their rename.
        for c in Collection::ALL {
            for entry in fs::read_dir(root.join(c.as_str()))? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "tmp") {
                    fs::remove_file(path)?;
                }
            }
        }
        Ok(FileStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, c: Collection, key: &str) -> PathBuf {
        self.root.join(c.as_str()).join(format!("{}.json", hex::encode(key)))
    }
}

impl Store for FileStore {
    fn get(&self, c: Collection, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        match fs::read(self.path(c, key)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn put(&self, c: Collection, key: &str, value: &[u8]) -> Result<(), StoreError> {
        let path = self.path(c, key);
        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(value)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        File::open(self.root.join(c.as_str()))?.sync_all()?;
        Ok(())
    }

    fn delete(&self, c: Collection, key: &str) -> Result<bool, StoreError> {
        match fs::remove_file(self.path(c, key)) {
            Ok(()) => {
                File::open(self.root.join(c.as_str()))?.sync_all()?;
                Ok(true)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(e.into()),
        }
    }

    fn keys(&self, c: Collection) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join(c.as_str()))? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let key = hex::decode(stem)
                .ok()
                .and_then(|b| String::from_utf8(b).ok())
                .ok_or_else(|| StoreError::Corrupt {
                    collection: c.as_str(),
                    key: stem.to_string(),
                    reason: "file name is not a hex-encoded key".into(),
                })?;
            out.push(key);
        }
        out.sort();
        Ok(out)
    }
}

/// Volatile store for tests and throwaway servers.
#[derive(Debug, Default)]
pub struct MemoryStore {
    data: Mutex<HashMap<Collection, BTreeMap<String, Vec<u8>>>>,
}

impl MemoryStore {
    pub fn new() -> MemoryStore {
        MemoryStore::default()
    }
}

impl Store for MemoryStore {
    fn get(&self, c: Collection, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let data = self.data.lock().expect("store lock");
        Ok(data.get(&c).and_then(|m| m.get(key)).cloned())
    }

    fn put(&self, c: Collection, key: &str, value: &[u8]) -> Result<(), StoreError> {
        let mut data = self.data.lock().expect("store lock");
        data.entry(c).or_default().insert(key.to_string(), value.to_vec());
        Ok(())
    }

    fn delete(&self, c: Collection, key: &str) -> Result<bool, StoreError> {
        let mut data = self.data.lock().expect("store lock");
        Ok(data.get_mut(&c).and_then(|m| m.remove(key)).is_some())
    }

    fn keys(&self, c: Collection) -> Result<Vec<String>, StoreError> {
        let data = self.data.lock().expect("store lock");
        Ok(data.get(&c).map(|m| m.keys().cloned().collect()).unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exercise(s: &dyn Store) {
        assert_eq!(s.get(Collection::Users, "a").unwrap(), None);
        s.put(Collection::Users, "a", b"1").unwrap();
        s.put(Collection::Users, "b/c d", b"2").unwrap();
        s.put(Collection::Jobs, "a", b"3").unwrap();
        assert_eq!(s.get(Collection::Users, "a").unwrap().unwrap(), b"1");
        assert_eq!(s.keys(Collection::Users).unwrap(), vec!["a", "b/c d"]);
        s.put(Collection::Users, "a", b"4").unwrap();
        assert_eq!(s.get(Collection::Users, "a").unwrap().unwrap(), b"4");
        assert!(s.delete(Collection::Users, "a").unwrap());
        assert!(!s.delete(Collection::Users, "a").unwrap());
        assert_eq!(s.keys(Collection::Users).unwrap(), vec!["b/c d"]);
        assert_eq!(s.get(Collection::Jobs, "a").unwrap().unwrap(), b"3");
    }

    #[test]
    fn memory_store_contract() {
        exercise(&MemoryStore::new());
    }

    #[test]
    fn file_store_contract_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        exercise(&FileStore::open(dir.path()).unwrap());
        let reopened = FileStore::open(dir.path()).unwrap();
        assert_eq!(reopened.get(Collection::Jobs, "a").unwrap().unwrap(), b"3");
        assert_eq!(reopened.keys(Collection::Users).unwrap(), vec!["b/c d"]);
    }

    #[test]
    fn file_store_delete_removes_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let s = FileStore::open(dir.path()).unwrap();
        s.put(Collection::Pedigrees, "k", b"secret-content").unwrap();
        assert!(s.delete(Collection::Pedigrees, "k").unwrap());
        let files = fs::read_dir(dir.path().join("pedigrees")).unwrap().count();
        assert_eq!(files, 0);
    }
}
