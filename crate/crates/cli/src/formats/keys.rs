//! Key memory snapshots: `{"keys": [{"category": 1, "vector": [...]}, ...]}`,
//! oldest first within each category.

use std::path::Path;

use crosstask::geometry::Category;
use crosstask::losses::KeyStore;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{read_text, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRecord {
    pub category: Category,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysFile {
    pub keys: Vec<KeyRecord>,
}

impl KeysFile {
    pub fn read(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::data(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("keys serialize");
        write_atomic(path, text.as_bytes())
    }

    pub fn from_store(store: &KeyStore) -> Self {
        let keys = store
            .categories()
            .flat_map(|c| store.keys(c).map(move |k| KeyRecord { category: c, vector: k.to_vec() }))
            .collect();
        Self { keys }
    }

    pub fn into_store(self, capacity: usize) -> std::result::Result<KeyStore, String> {
        let mut store = KeyStore::new(capacity);
        for (i, k) in self.keys.into_iter().enumerate() {
            store.insert(k.vector, k.category).map_err(|e| format!("key {i}: {e}"))?;
        }
        Ok(store)
    }
}
