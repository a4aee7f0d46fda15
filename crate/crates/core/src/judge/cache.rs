//! Content-addressed response cache: an in-memory map, optionally backed by a
//! directory of `<key[..2]>/<key>.txt` files written atomically.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, PoisonError};

use crate::util::atomic_write;

pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            dir: None,
            memory: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            dir: Some(dir),
            memory: Mutex::new(HashMap::new()),
        })
    }

    fn memory(&self) -> MutexGuard<'_, HashMap<String, String>> {
        self.memory.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2.min(key.len())]).join(format!("{key}.txt")))
    }

    pub fn get(&self, key: &str) -> io::Result<Option<String>> {
        if let Some(v) = self.memory().get(key) {
            return Ok(Some(v.clone()));
        }
        let Some(path) = self.path_for(key) else {
            return Ok(None);
        };
        match fs::read_to_string(&path) {
            Ok(v) => {
                self.memory().insert(key.to_string(), v.clone());
                Ok(Some(v))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, reply: &str) -> io::Result<()> {
        if let Some(path) = self.path_for(key) {
            atomic_write(&path, reply.as_bytes())?;
        }
        self.memory().insert(key.to_string(), reply.to_string());
        Ok(())
    }

    pub fn len_in_memory(&self) -> usize {
        self.memory().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_cache_survives_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let key = crate::util::sha256_hex("k");
        {
            let c = ResponseCache::on_disk(dir.path()).unwrap();
            assert_eq!(c.get(&key).unwrap(), None);
            c.put(&key, "professionalism: 1").unwrap();
        }
        let c = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(c.get(&key).unwrap().as_deref(), Some("professionalism: 1"));
    }

    #[test]
    fn memory_cache() {
        let c = ResponseCache::in_memory();
        c.put("abc", "x").unwrap();
        assert_eq!(c.get("abc").unwrap().as_deref(), Some("x"));
        assert_eq!(c.len_in_memory(), 1);
    }
}
