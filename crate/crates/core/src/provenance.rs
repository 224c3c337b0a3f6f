use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header recorded as the first line of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Provenance {
            seed,
            config_hash: config_hash.into(),
        }
    }

    /// Hashes the JSON form of `config`; field order is the struct's.
    pub fn for_config(seed: u64, config: &impl Serialize) -> Self {
        let json = serde_json::to_vec(config).expect("config serializes");
        Provenance::new(seed, short_hash(&json))
    }

    pub fn header_line(&self) -> String {
        format!(
            "# ctm {TOOL_VERSION} seed={} config={}",
            self.seed, self.config_hash
        )
    }
}

/// First 16 hex digits of SHA-256.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

/// Stable 64-bit seed for one item, derived from the run seed and labels.
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
