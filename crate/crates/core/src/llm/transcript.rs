//! JSONL transcripts of provider calls, recording and replay.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CompletionRequest, LlmProvider, ProviderError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub query_hash: String,
    pub sample_index: usize,
    pub prompt: String,
    pub raw_response: String,
    pub provider_name: String,
    pub temperature: f64,
    pub time_token: u64,
    /// Unix milliseconds.
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript io: {0}")]
    Io(#[from] io::Error),
    #[error("transcript line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("duplicate record for query {query_hash} sample {sample_index}")]
    Duplicate { query_hash: String, sample_index: usize },
}

/// Records keyed by `(query_hash, sample_index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TranscriptStore {
    records: BTreeMap<(String, usize), TranscriptRecord>,
}

impl TranscriptStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: TranscriptRecord) -> Result<(), TranscriptError> {
        let key = (record.query_hash.clone(), record.sample_index);
        if self.records.contains_key(&key) {
            return Err(TranscriptError::Duplicate { query_hash: key.0, sample_index: key.1 });
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn get(&self, query_hash: &str, sample_index: usize) -> Option<&TranscriptRecord> {
        self.records.get(&(query_hash.to_owned(), sample_index))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &TranscriptRecord> {
        self.records.values()
    }

    pub fn merge(&mut self, other: TranscriptStore) -> Result<(), TranscriptError> {
        for record in other.records.into_values() {
            self.insert(record)?;
        }
        Ok(())
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, TranscriptError> {
        let mut store = TranscriptStore::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|source| TranscriptError::Parse { line: i + 1, source })?;
            store.insert(record)?;
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        Self::from_jsonl(BufReader::new(fs::File::open(path)?))
    }

    /// One record per line, sorted by key.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<(), TranscriptError> {
        for record in self.records.values() {
            serde_json::to_writer(&mut writer, record).map_err(io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TranscriptError> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Passes calls through and keeps every response.
pub struct RecordingProvider<P> {
    inner: P,
    store: Mutex<TranscriptStore>,
}

impl<P: LlmProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider { inner, store: Mutex::new(TranscriptStore::new()) }
    }

    pub fn snapshot(&self) -> TranscriptStore {
        self.store.lock().expect("transcript lock poisoned").clone()
    }

    pub fn into_store(self) -> TranscriptStore {
        self.store.into_inner().expect("transcript lock poisoned")
    }
}

impl<P: LlmProvider> LlmProvider for RecordingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let response = self.inner.complete(request)?;
        let record = TranscriptRecord {
            query_hash: request.query_hash.clone(),
            sample_index: request.sample_index,
            prompt: request.prompt.clone(),
            raw_response: response.clone(),
            provider_name: self.inner.name().to_owned(),
            temperature: request.temperature,
            time_token: request.time_token,
            timestamp: now_ms(),
        };
        let mut store = self.store.lock().expect("transcript lock poisoned");
        if let Some(previous) = store.get(&request.query_hash, request.sample_index) {
            if previous.raw_response != response {
                log::warn!(
                    "query {} sample {} answered differently on a repeated call; keeping the first response",
                    request.query_hash,
                    request.sample_index
                );
            }
            return Ok(previous.raw_response.clone());
        }
        store.insert(record).expect("key checked above");
        Ok(response)
    }

    fn supports_concurrency(&self) -> bool {
        self.inner.supports_concurrency()
    }
}

/// Serves responses from a transcript; unknown requests are errors.
pub struct ReplayProvider {
    store: TranscriptStore,
}

impl ReplayProvider {
    pub fn new(store: TranscriptStore) -> Self {
        ReplayProvider { store }
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        Ok(ReplayProvider::new(TranscriptStore::load(path)?))
    }

    pub fn store(&self) -> &TranscriptStore {
        &self.store
    }
}

impl LlmProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let record = self.store.get(&request.query_hash, request.sample_index).ok_or_else(|| {
            ProviderError::MissingRecord { query_hash: request.query_hash.clone(), sample_index: request.sample_index }
        })?;
        if record.prompt != request.prompt {
            return Err(ProviderError::PromptMismatch {
                query_hash: request.query_hash.clone(),
                sample_index: request.sample_index,
            });
        }
        Ok(record.raw_response.clone())
    }
}
