//! Persistent embedding cache and the cache-backed embedding source.
//!
//! Cache entries are keyed by (model id, SHA-256 of the UTF-8 text) and
//! stored as JSONL. Reads are concurrent; appends go through a single
//! writer. Floats round-trip exactly through the JSON encoding.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{Embedding, EmbeddingProvider};
use crate::error::{Error, Result};

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    model: String,
    sha256: String,
    dim: usize,
    vector: Vec<f64>,
}

/// In-memory map of cached vectors, optionally backed by an append-only
/// JSONL file.
pub struct EmbeddingCache {
    entries: RwLock<HashMap<(String, String), Vec<f64>>>,
    writer: Option<Mutex<BufWriter<File>>>,
}

impl EmbeddingCache {
    /// A cache that lives only for the current process.
    pub fn in_memory() -> Self {
        EmbeddingCache {
            entries: RwLock::new(HashMap::new()),
            writer: None,
        }
    }

    /// Opens (or creates) a file-backed cache, loading existing entries.
    pub fn open(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
            for (line_no, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(display.clone(), e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    Error::CacheCorruption(format!("{display}:{}: {e}", line_no + 1))
                })?;
                if record.dim != record.vector.len() {
                    return Err(Error::CacheCorruption(format!(
                        "{display}:{}: declared dim {} but vector has {} components",
                        line_no + 1,
                        record.dim,
                        record.vector.len()
                    )));
                }
                entries.insert((record.model, record.sha256), record.vector);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(display, e))?;
        Ok(EmbeddingCache {
            entries: RwLock::new(entries),
            writer: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn get(&self, model: &str, sha: &str) -> Option<Vec<f64>> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(&(model.to_string(), sha.to_string()))
            .cloned()
    }

    pub fn contains(&self, model: &str, sha: &str) -> bool {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .contains_key(&(model.to_string(), sha.to_string()))
    }

    pub fn insert(&self, model: &str, sha: &str, vector: &[f64]) -> Result<()> {
        if let Some(writer) = &self.writer {
            let record = CacheRecord {
                model: model.to_string(),
                sha256: sha.to_string(),
                dim: vector.len(),
                vector: vector.to_vec(),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| Error::Internal(format!("cache serialization failed: {e}")))?;
            let mut writer = writer.lock().expect("cache writer poisoned");
            writeln!(writer, "{line}").map_err(|e| Error::io("embedding cache", e))?;
            writer
                .flush()
                .map_err(|e| Error::io("embedding cache", e))?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert((model.to_string(), sha.to_string()), vector.to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cache-first embedding lookup with an optional live provider behind it.
///
/// Without a provider, every text must already be cached; with one,
/// misses are fetched in batches and persisted. Output order always
/// matches input order.
pub struct EmbeddingSource {
    cache: EmbeddingCache,
    provider: Option<Box<dyn EmbeddingProvider>>,
    model_id: String,
    batch_size: usize,
    expected_dim: RwLock<Option<usize>>,
}

impl EmbeddingSource {
    pub fn new(
        cache: EmbeddingCache,
        provider: Option<Box<dyn EmbeddingProvider>>,
        model_id: impl Into<String>,
        batch_size: usize,
    ) -> Result<Self> {
        let model_id = model_id.into();
        if let Some(provider) = &provider {
            if provider.model_id() != model_id {
                return Err(Error::InvalidInput(format!(
                    "provider model {:?} does not match requested model {:?}",
                    provider.model_id(),
                    model_id
                )));
            }
        }
        if batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        let expected_dim = provider.as_ref().and_then(|p| p.dim());
        Ok(EmbeddingSource {
            cache,
            provider,
            model_id,
            batch_size,
            expected_dim: RwLock::new(expected_dim),
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn check_dim(&self, dim: usize, origin: &str) -> Result<()> {
        let mut expected = self.expected_dim.write().expect("dim lock poisoned");
        match *expected {
            Some(e) if e != dim => Err(Error::CacheCorruption(format!(
                "{origin} vector has dim {dim} but this run uses dim {e}"
            ))),
            Some(_) => Ok(()),
            None => {
                *expected = Some(dim);
                Ok(())
            }
        }
    }

    /// Embeds every text, serving cache hits without provider calls and
    /// fetching misses in configurable batches.
    pub fn embed_all<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Embedding>> {
        let shas: Vec<String> = texts.iter().map(|t| sha256_hex(t.as_ref())).collect();

        // Unique misses in first-occurrence order.
        let mut miss_texts: Vec<&str> = Vec::new();
        let mut miss_shas: Vec<String> = Vec::new();
        for (text, sha) in texts.iter().zip(shas.iter()) {
            if !self.cache.contains(&self.model_id, sha) && !miss_shas.contains(sha) {
                miss_texts.push(text.as_ref());
                miss_shas.push(sha.clone());
            }
        }

        if !miss_texts.is_empty() {
            let provider = self.provider.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "{} texts are missing from the embedding cache for model {:?} and no live provider is configured",
                    miss_texts.len(),
                    self.model_id
                ))
            })?;
            let mut offset = 0;
            for chunk in miss_texts.chunks(self.batch_size) {
                let vectors = provider.embed_batch(chunk)?;
                if vectors.len() != chunk.len() {
                    return Err(Error::Provider(format!(
                        "provider returned {} vectors for a batch of {}",
                        vectors.len(),
                        chunk.len()
                    )));
                }
                for (i, vector) in vectors.into_iter().enumerate() {
                    if vector.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Provider(
                            "provider returned a non-finite component".into(),
                        ));
                    }
                    self.check_dim(vector.len(), "provider")?;
                    self.cache
                        .insert(&self.model_id, &miss_shas[offset + i], &vector)?;
                }
                offset += chunk.len();
            }
        }

        let mut embeddings = Vec::with_capacity(texts.len());
        for sha in &shas {
            let vector = self.cache.get(&self.model_id, sha).ok_or_else(|| {
                Error::Internal(format!("cache lost entry for sha {sha} after fill"))
            })?;
            self.check_dim(vector.len(), "cached")?;
            embeddings.push(Embedding::new(vector, self.model_id.clone())?);
        }
        Ok(embeddings)
    }

    pub fn embed_one(&self, text: &str) -> Result<Embedding> {
        Ok(self.embed_all(&[text])?.pop().expect("one output per input"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct RecordingProvider {
        inner: crate::embedding::HashedBowEmbedder,
        calls: Arc<AtomicUsize>,
        seen: Arc<Mutex<Vec<Vec<String>>>>,
    }

    impl RecordingProvider {
        fn new(dim: usize, calls: Arc<AtomicUsize>) -> Self {
            RecordingProvider {
                inner: crate::embedding::HashedBowEmbedder::new(dim, 1).unwrap(),
                calls,
                seen: Arc::new(Mutex::new(Vec::new())),
            }
        }
    }

    impl EmbeddingProvider for RecordingProvider {
        fn model_id(&self) -> &str {
            self.inner.model_id()
        }
        fn dim(&self) -> Option<usize> {
            self.inner.dim()
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.seen
                .lock()
                .unwrap()
                .push(texts.iter().map(|t| t.to_string()).collect());
            self.inner.embed_batch(texts)
        }
    }

    fn source_with(calls: Arc<AtomicUsize>) -> (EmbeddingSource, String) {
        let provider = RecordingProvider::new(16, calls);
        let model = provider.model_id().to_string();
        let source = EmbeddingSource::new(
            EmbeddingCache::in_memory(),
            Some(Box::new(provider)),
            model.clone(),
            4,
        )
        .unwrap();
        (source, model)
    }

    #[test]
    fn second_call_hits_cache_without_provider_calls() {
        let calls = Arc::new(AtomicUsize::new(0));
        let (source, _) = source_with(calls.clone());
        let texts = vec!["one", "two", "three"];
        let first = source.embed_all(&texts).unwrap();
        let after_first = calls.load(Ordering::SeqCst);
        let second = source.embed_all(&texts).unwrap();
        assert_eq!(after_first, calls.load(Ordering::SeqCst));
        assert_eq!(first, second);
    }

    #[test]
    fn mixed_batch_sends_only_misses_and_preserves_order() {
        let calls = Arc::new(AtomicUsize::new(0));
        let provider = RecordingProvider::new(16, calls);
        let model = provider.model_id().to_string();
        let seen = provider.seen.clone();
        let source = EmbeddingSource::new(
            EmbeddingCache::in_memory(),
            Some(Box::new(provider)),
            model,
            8,
        )
        .unwrap();

        source.embed_all(&["alpha", "beta"]).unwrap();
        let out = source.embed_all(&["gamma", "alpha", "delta", "beta"]).unwrap();

        // Output order matches input order.
        let direct = crate::embedding::HashedBowEmbedder::new(16, 1).unwrap();
        assert_eq!(out[0].values(), direct.embed_text("gamma").as_slice());
        assert_eq!(out[1].values(), direct.embed_text("alpha").as_slice());
        assert_eq!(out[3].values(), direct.embed_text("beta").as_slice());

        // Second call fetched only the two misses.
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[1], vec!["gamma".to_string(), "delta".to_string()]);
    }

    #[test]
    fn misses_are_fetched_in_configured_batches() {
        let calls = Arc::new(AtomicUsize::new(0));
        let provider = RecordingProvider::new(16, calls.clone());
        let model = provider.model_id().to_string();
        let seen = provider.seen.clone();
        let source = EmbeddingSource::new(
            EmbeddingCache::in_memory(),
            Some(Box::new(provider)),
            model,
            2,
        )
        .unwrap();
        source.embed_all(&["a", "b", "c", "d", "e"]).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        let seen = seen.lock().unwrap();
        assert_eq!(seen[0].len(), 2);
        assert_eq!(seen[1].len(), 2);
        assert_eq!(seen[2].len(), 1);
    }

    #[test]
    fn duplicate_texts_fetch_once() {
        let calls = Arc::new(AtomicUsize::new(0));
        let (source, _) = source_with(calls);
        let out = source.embed_all(&["same", "same", "same"]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(out[1], out[2]);
    }

    #[test]
    fn missing_entry_without_provider_is_an_input_error() {
        let source =
            EmbeddingSource::new(EmbeddingCache::in_memory(), None, "some-model", 4).unwrap();
        let err = source.embed_all(&["unseen"]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn cached_dim_conflicting_with_provider_dim_is_corruption() {
        let cache = EmbeddingCache::in_memory();
        // Pre-seed an entry with the wrong dimensionality for this model.
        let embedder = crate::embedding::HashedBowEmbedder::new(16, 1).unwrap();
        let model = embedder.model_id().to_string();
        cache
            .insert(&model, &sha256_hex("poisoned"), &[1.0; 384])
            .unwrap();
        let source = EmbeddingSource::new(cache, Some(Box::new(embedder)), model, 4).unwrap();
        let err = source.embed_all(&["poisoned"]).unwrap_err();
        assert!(matches!(err, Error::CacheCorruption(_)));
    }

    #[test]
    fn file_cache_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let vector = vec![0.123456789123, -9.87654321e-7, 3.0];
        {
            let cache = EmbeddingCache::open(&path).unwrap();
            cache.insert("m", &sha256_hex("text"), &vector).unwrap();
        }
        let reloaded = EmbeddingCache::open(&path).unwrap();
        let got = reloaded.get("m", &sha256_hex("text")).unwrap();
        for (a, b) in got.iter().zip(vector.iter()) {
            assert!((a - b).abs() <= 1e-7);
        }
        assert_eq!(got, vector, "JSON round-trip should be exact");
    }

    #[test]
    fn corrupt_cache_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        std::fs::write(
            &path,
            "{\"model\":\"m\",\"sha256\":\"ab\",\"dim\":3,\"vector\":[1.0,2.0]}\n",
        )
        .unwrap();
        assert!(matches!(
            EmbeddingCache::open(&path),
            Err(Error::CacheCorruption(_))
        ));
    }
}
