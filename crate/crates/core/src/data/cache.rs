//! On-disk cache of a prepared dataset.
//!
//! A cache directory holds three files:
//!
//! - `vocab.json`: the three key lists (index = position, UNKNOWN = length).
//! - `dataset.jsonl`: a header line
//!   `{"format":"sfkt-dataset","version":1,"options":{..},"students":N}`
//!   followed by one [`PreparedStudent`] JSON object per line.
//! - `manifest.json`: a [`CacheManifest`] whose `content_hash` is the hex
//!   SHA-256 of `vocab.json` followed by `dataset.jsonl`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Dataset, DatasetOptions, PreparedStudent};
use super::split::Split;
use super::vocab::Vocab;
use crate::error::DataError;

pub const CACHE_VERSION: u32 = 1;
pub const VOCAB_FILE: &str = "vocab.json";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    options: DatasetOptions,
    students: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub format: String,
    pub version: u32,
    pub content_hash: String,
    pub vocab_hash: String,
    pub options: DatasetOptions,
    pub students: usize,
    pub interactions: usize,
    pub windows: usize,
    pub records: RecordCounts,
    pub skipped_rows: usize,
    pub tool_version: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode(dataset: &Dataset) -> Result<(Vec<u8>, Vec<u8>), DataError> {
    let vocab = serde_json::to_vec(&dataset.vocab)?;
    let mut body = Vec::new();
    let header = DatasetHeader {
        format: "sfkt-dataset".into(),
        version: CACHE_VERSION,
        options: dataset.options,
        students: dataset.students.len(),
    };
    serde_json::to_writer(&mut body, &header)?;
    body.push(b'\n');
    for s in &dataset.students {
        serde_json::to_writer(&mut body, s)?;
        body.push(b'\n');
    }
    Ok((vocab, body))
}

fn content_hash(vocab: &[u8], body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(vocab);
    h.update(body);
    hex::encode(h.finalize())
}

/// Writes the cache files into `dir` (created if missing) and returns the manifest.
pub fn write_cache(dir: &Path, dataset: &Dataset, skipped_rows: usize) -> Result<CacheManifest, DataError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (vocab, body) = encode(dataset)?;
    let manifest = CacheManifest {
        format: "sfkt-cache".into(),
        version: CACHE_VERSION,
        content_hash: content_hash(&vocab, &body),
        vocab_hash: dataset.vocab.content_hash(),
        options: dataset.options,
        students: dataset.students.len(),
        interactions: dataset.num_interactions(),
        windows: dataset.students.iter().map(|s| s.windows.len()).sum(),
        records: RecordCounts {
            train: dataset.records(Split::Train).len(),
            val: dataset.records(Split::Val).len(),
            test: dataset.records(Split::Test).len(),
        },
        skipped_rows,
        tool_version: env!("CARGO_PKG_VERSION").into(),
    };
    for (name, bytes) in [(VOCAB_FILE, vocab), (DATASET_FILE, body)] {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let path = dir.join(MANIFEST_FILE);
    let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CacheManifest, DataError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Loads and verifies a cache written by [`write_cache`].
pub fn read_cache(dir: &Path) -> Result<(Dataset, CacheManifest), DataError> {
    let manifest = read_manifest(dir)?;
    if manifest.format != "sfkt-cache" || manifest.version != CACHE_VERSION {
        return Err(DataError::Cache(format!(
            "unsupported cache {} v{}",
            manifest.format, manifest.version
        )));
    }
    let vpath = dir.join(VOCAB_FILE);
    let vocab_bytes = std::fs::read(&vpath).map_err(io_err(&vpath))?;
    let dpath = dir.join(DATASET_FILE);
    let body = std::fs::read(&dpath).map_err(io_err(&dpath))?;
    let found = content_hash(&vocab_bytes, &body);
    if found != manifest.content_hash {
        return Err(DataError::HashMismatch {
            expected: manifest.content_hash,
            found,
        });
    }
    let vocab: Vocab = serde_json::from_slice(&vocab_bytes)?;
    let mut lines = body.lines();
    let header: DatasetHeader = match lines.next() {
        Some(l) => serde_json::from_str(&l.map_err(io_err(&dpath))?)?,
        None => return Err(DataError::Cache("dataset file is empty".into())),
    };
    if header.format != "sfkt-dataset" || header.version != CACHE_VERSION {
        return Err(DataError::Cache("unsupported dataset header".into()));
    }
    let mut students = Vec::with_capacity(header.students);
    for line in lines {
        let line = line.map_err(io_err(&dpath))?;
        let s: PreparedStudent = serde_json::from_str(&line)?;
        students.push(s);
    }
    if students.len() != header.students {
        return Err(DataError::Cache(format!(
            "header announces {} students, found {}",
            header.students,
            students.len()
        )));
    }
    Ok((
        Dataset {
            vocab,
            options: header.options,
            students,
        },
        manifest,
    ))
}
