use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingVector, RetrievalError};

/// Maps text to a fixed-width vector. Identical text must yield identical
/// vectors for the lifetime of the embedder.
pub trait Embedder: Send + Sync {
    fn dims(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Feature-hashing embedder: each lowercased alphanumeric token adds ±1 to a
/// bucket chosen by its SHA-256 digest. Deterministic across runs and
/// platforms, and similar texts land near each other, which is enough for
/// tests and offline demos.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dims: usize,
}

impl HashEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding width must be positive");
        HashEmbedder { dims }
    }
}

impl Embedder for HashEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let mut values = vec![0f32; self.dims];
        let mut any = false;
        for token in super::tokenize(text) {
            let digest = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % self.dims;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
            any = true;
        }
        if !any || values.iter().all(|v| *v == 0.0) {
            // Keep the vector usable under cosine distance.
            values[0] = 1e-3;
        }
        EmbeddingVector::new(values)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for an embedding service speaking
/// `POST {texts: [..]}` → `{vectors: [[..]]}`.
pub struct HttpEmbedder {
    url: String,
    api_key: Option<String>,
    dims: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        api_key: Option<String>,
        dims: usize,
        timeout: Duration,
    ) -> Result<Self, RetrievalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrievalError::Embed(e.to_string()))?;
        Ok(HttpEmbedder {
            url: url.into(),
            api_key,
            dims,
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, RetrievalError> {
        let mut request = self.client.post(&self.url).json(&EmbedRequest { texts });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_connect() || e.is_timeout() {
                RetrievalError::Unavailable(e.to_string())
            } else {
                RetrievalError::Embed(e.to_string())
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(RetrievalError::Embed(format!("endpoint returned {status}")));
        }
        let body: EmbedResponse = response
            .json()
            .map_err(|e| RetrievalError::Embed(format!("malformed response: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(RetrievalError::Embed(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.dims {
                    return Err(RetrievalError::Dimension {
                        left: values.len(),
                        right: self.dims,
                    });
                }
                EmbeddingVector::new(values)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic() {
        let e = HashEmbedder::new(32);
        assert_eq!(e.embed("kubectl get pods").unwrap(), e.embed("kubectl get pods").unwrap());
        assert_ne!(e.embed("kubectl get pods").unwrap(), e.embed("helm install").unwrap());
        assert_eq!(e.embed("").unwrap().dims(), 32);
    }
}
