//! Sentence embeddings, the cosine similarity kernel, and pluggable
//! embedding providers (deterministic hashed bag-of-words for tests,
//! HTTP service, file cache).

mod cache;
mod hashed;
pub(crate) mod http;

pub use cache::{sha256_hex, EmbeddingCache, EmbeddingSource};
pub use hashed::HashedBowEmbedder;
pub use http::{HttpEmbeddingProvider, HttpProviderConfig};

use crate::error::{Error, Result};

/// A fixed-dimension real vector tagged with the model that produced it.
///
/// Vectors are stored un-normalized; component sums operate on raw
/// encoder outputs and cosine absorbs overall scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    model_id: String,
}

impl Embedding {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty embedding vector".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite embedding component {bad}"
            )));
        }
        Ok(Embedding {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn zeros(dim: usize, model_id: impl Into<String>) -> Self {
        Embedding {
            values: vec![0.0; dim],
            model_id: model_id.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// Returns the unit-norm copy of this vector.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Embedding {
            values: self.values.iter().map(|v| v / norm).collect(),
            model_id: self.model_id.clone(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Embedding {
            values: self.values.iter().map(|v| v * factor).collect(),
            model_id: self.model_id.clone(),
        }
    }

    pub fn add_assign(&mut self, other: &Embedding) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += b;
        }
        Ok(())
    }
}

/// Cosine similarity of two vectors. Errors on dimension mismatch and on
/// zero-norm inputs.
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let mut dot = 0.0;
    let mut norm_u = 0.0;
    let mut norm_v = 0.0;
    for (a, b) in u.values.iter().zip(v.values.iter()) {
        dot += a * b;
        norm_u += a * a;
        norm_v += b * b;
    }
    if norm_u == 0.0 || norm_v == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot / (norm_u.sqrt() * norm_v.sqrt()))
}

/// A batch text encoder. Implementations must be deterministic within a
/// run (same text, same vector) and safe for concurrent batch calls.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Embedding dimension when the provider knows it up front.
    fn dim(&self) -> Option<usize>;

    /// Embeds a batch of texts, one vector per input, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}
