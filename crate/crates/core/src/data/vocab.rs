use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ingest::InteractionLog;
use crate::error::DataError;

/// Bijection between observed keys and `0..len()`, plus one UNKNOWN index at
/// `len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct KeyIndex {
    keys: Vec<String>,
    map: HashMap<String, usize>,
}

impl From<Vec<String>> for KeyIndex {
    fn from(keys: Vec<String>) -> Self {
        let mut idx = KeyIndex::default();
        for k in keys {
            idx.insert(&k);
        }
        idx
    }
}

impl From<KeyIndex> for Vec<String> {
    fn from(idx: KeyIndex) -> Self {
        idx.keys
    }
}

impl KeyIndex {
    pub fn insert(&mut self, key: &str) -> usize {
        if let Some(&i) = self.map.get(key) {
            return i;
        }
        let i = self.keys.len();
        self.keys.push(key.to_string());
        self.map.insert(key.to_string(), i);
        i
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.map.get(key).copied()
    }

    /// Index of `key`, or [`KeyIndex::unknown`] for unseen keys.
    pub fn lookup(&self, key: &str) -> usize {
        self.get(key).unwrap_or_else(|| self.unknown())
    }

    pub fn unknown(&self) -> usize {
        self.keys.len()
    }

    /// Number of observed keys.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Rows needed by an embedding table over this index (observed + UNKNOWN).
    pub fn table_rows(&self) -> usize {
        self.keys.len() + 1
    }

    pub fn key(&self, index: usize) -> Option<&str> {
        self.keys.get(index).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub students: KeyIndex,
    pub questions: KeyIndex,
    pub concepts: KeyIndex,
}

impl Vocab {
    /// Hex SHA-256 over the serialized key lists.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocab serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Indexes every key of the training log in first-appearance order.
pub fn build_vocabularies(train: &InteractionLog) -> Result<Vocab, DataError> {
    if train.is_empty() {
        return Err(DataError::EmptyLog);
    }
    let mut vocab = Vocab::default();
    for it in train.iter() {
        vocab.students.insert(&it.student_id);
        vocab.questions.insert(&it.question_id);
        for c in &it.concept_ids {
            vocab.concepts.insert(c);
        }
    }
    Ok(vocab)
}
