//! Reply cache: in memory, optionally mirrored to one JSON file per key.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use ctm_core::llm::Prompt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub reply: String,
    pub created_at: DateTime<Utc>,
}

/// Hex SHA-256 over model, both messages and temperature.
pub fn cache_key(model: &str, prompt: &Prompt, temperature: f64) -> String {
    let canonical = serde_json::json!({
        "model": model,
        "system": prompt.system,
        "user": prompt.user,
        "temperature": temperature,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub struct ReplyCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, String>>,
    writer: Mutex<()>,
}

impl ReplyCache {
    pub fn in_memory() -> Self {
        ReplyCache {
            dir: None,
            memory: RwLock::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ReplyCache {
            dir: Some(dir),
            ..Self::in_memory()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(r) = self.memory.read().expect("cache lock").get(key) {
            return Some(r.clone());
        }
        let text = fs::read_to_string(self.path(key)?).ok()?;
        // Unreadable entries are treated as misses and rewritten on store.
        let entry: CacheEntry = serde_json::from_str(&text).ok().filter(|e: &CacheEntry| e.key == key)?;
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), entry.reply.clone());
        Some(entry.reply)
    }

    /// Stores a reply. The first stored reply for a key wins, so concurrent
    /// misses on one prompt still leave a single answer.
    pub fn put(&self, key: &str, reply: &str) -> std::io::Result<String> {
        let _guard = self.writer.lock().expect("cache writer");
        if let Some(existing) = self.get(key) {
            return Ok(existing);
        }
        if let Some(path) = self.path(key) {
            let entry = CacheEntry {
                key: key.to_string(),
                reply: reply.to_string(),
                created_at: Utc::now(),
            };
            let tmp = path.with_extension("json.tmp");
            let mut f = fs::File::create(&tmp)?;
            f.write_all(serde_json::to_string_pretty(&entry)?.as_bytes())?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), reply.to_string());
        Ok(reply.to_string())
    }
}
