use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{SyndromeClassifier, SyndromeError, SyndromePrediction};
use crate::gateway::{cosine, ChatBackend, Embedder, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: String,
}

/// Majority vote over the `k` nearest corpus items by cosine.
///
/// Equal similarities rank by corpus order. A vote tie goes to the label
/// with the smaller mean distance (1 - cosine), then to the label whose
/// first neighbor comes earliest in the corpus.
pub fn knn_classify(
    record_text: &str,
    corpus: &[LabeledText],
    k: usize,
    embedder: &dyn Embedder,
) -> Result<SyndromePrediction, SyndromeError> {
    check(corpus.len(), k)?;
    let texts: Vec<&str> = corpus.iter().map(|c| c.text.as_str()).collect();
    let vectors = embedder.embed(&texts)?;
    let query = embedder.embed_one(record_text)?;
    vote(&query, corpus, &vectors, k)
}

fn check(size: usize, k: usize) -> Result<(), SyndromeError> {
    if size == 0 {
        return Err(SyndromeError::EmptyCorpus);
    }
    if k == 0 {
        return Err(SyndromeError::ZeroK);
    }
    if k > size {
        return Err(SyndromeError::KTooLarge { k, size });
    }
    Ok(())
}

struct Tally {
    votes: usize,
    distance: f64,
    first: usize,
}

fn vote(
    query: &EmbeddingVector,
    corpus: &[LabeledText],
    vectors: &[EmbeddingVector],
    k: usize,
) -> Result<SyndromePrediction, SyndromeError> {
    let mut sims = Vec::with_capacity(corpus.len());
    for (i, v) in vectors.iter().enumerate() {
        sims.push((i, cosine(query, v)?));
    }
    // Stable sort keeps corpus order among equal similarities.
    sims.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut tallies: HashMap<&str, Tally> = HashMap::new();
    for &(i, sim) in &sims[..k] {
        let t = tallies.entry(corpus[i].label.as_str()).or_insert(Tally { votes: 0, distance: 0.0, first: i });
        t.votes += 1;
        t.distance += 1.0 - sim;
        t.first = t.first.min(i);
    }
    let (label, tally) = tallies
        .into_iter()
        .min_by(|(_, a), (_, b)| {
            b.votes
                .cmp(&a.votes)
                .then((a.distance / a.votes as f64).total_cmp(&(b.distance / b.votes as f64)))
                .then(a.first.cmp(&b.first))
        })
        .expect("k >= 1");
    Ok(SyndromePrediction {
        label: label.to_string(),
        confidence: tally.votes as f64 / k as f64,
        rationale: format!("{} of {k} nearest cases share this label", tally.votes),
        classifier_id: format!("knn-{k}"),
        out_of_vocabulary: false,
    })
}

/// kNN classifier with the corpus embedded once up front.
pub struct KnnClassifier {
    corpus: Vec<LabeledText>,
    vectors: Vec<EmbeddingVector>,
    k: usize,
    embedder: Arc<dyn Embedder>,
    id: String,
}

impl KnnClassifier {
    pub fn new(corpus: Vec<LabeledText>, k: usize, embedder: Arc<dyn Embedder>) -> Result<Self, SyndromeError> {
        check(corpus.len(), k)?;
        let texts: Vec<&str> = corpus.iter().map(|c| c.text.as_str()).collect();
        let vectors = embedder.embed(&texts)?;
        Ok(Self { corpus, vectors, k, embedder, id: format!("knn-{k}") })
    }

    pub fn corpus(&self) -> &[LabeledText] {
        &self.corpus
    }
}

impl SyndromeClassifier for KnnClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, record_text: &str, _gateway: &dyn ChatBackend) -> Result<SyndromePrediction, SyndromeError> {
        let query = self.embedder.embed_one(record_text)?;
        vote(&query, &self.corpus, &self.vectors, self.k)
    }
}
