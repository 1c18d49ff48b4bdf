use super::{fnv1a64, Embedder, EmbeddingVector, GatewayError};

pub const DEFAULT_EMBED_DIM: usize = 256;

/// Character-bigram feature hashing.
///
/// Text is lowercased and split on whitespace; each token contributes its
/// character bigrams (a single-character token contributes itself). Each
/// feature's UTF-8 bytes are hashed with FNV-1a into one of `dim` buckets and
/// the count vector is L2-normalized. No seed is involved, so vectors are
/// identical across processes.
#[derive(Debug, Clone)]
pub struct HashedBigramEmbedder {
    dim: usize,
    id: String,
}

impl Default for HashedBigramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBED_DIM)
    }
}

impl HashedBigramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, id: format!("hashed-bigram-{dim}") }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bucket counts before normalization.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0.0; self.dim];
        for feature in features(text) {
            let bucket = (fnv1a64(feature.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        counts
    }
}

/// Bigram features of `text`, in order of occurrence.
pub(crate) fn features(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for token in lowered.split_whitespace() {
        let chars: Vec<char> = token.chars().filter(|c| c.is_alphanumeric()).collect();
        match chars.len() {
            0 => {}
            1 => out.push(chars[0].to_string()),
            _ => out.extend(chars.windows(2).map(|w| w.iter().collect::<String>())),
        }
    }
    out
}

impl Embedder for HashedBigramEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(EmbeddingVector::normalized(self.counts(text)))
    }
}
