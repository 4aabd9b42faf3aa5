//! Content-addressed response cache keyed by the full request body.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

/// In-memory cache with optional content-addressed file persistence.
///
/// Keys hash the provider id together with the entire request body, so a
/// change of model or temperature never aliases an entry. Writes are
/// serialized; reads hit memory first and fall back to disk.
pub struct ResponseCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            mem: Mutex::new(HashMap::new()),
        }
    }

    /// Persists entries as files named by their key under `dir`.
    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            mem: Mutex::new(HashMap::new()),
        })
    }

    /// Cache key for a `(provider-id, request-body)` pair.
    pub fn key(&self, provider_id: &str, request_body: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(provider_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(request_body.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(hit) = self.mem.lock().unwrap().get(key).cloned() {
            return Some(hit);
        }
        let dir = self.dir.as_ref()?;
        let value = std::fs::read_to_string(dir.join(key)).ok()?;
        self.mem
            .lock()
            .unwrap()
            .insert(key.to_string(), value.clone());
        Some(value)
    }

    pub fn put(&self, key: &str, value: &str) {
        if let Some(dir) = &self.dir {
            if let Err(e) = std::fs::write(dir.join(key), value) {
                log::warn!("cache write failed for {key}: {e}");
            }
        }
        self.mem
            .lock()
            .unwrap()
            .insert(key.to_string(), value.to_string());
    }
}
