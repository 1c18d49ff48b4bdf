//! BM25 over a small in-memory corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DsrsError;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
const SNAPSHOT_HEADER: &str = "jingfang-sparse-index v1";

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{2A6DF}')
}

/// CJK runs become character bigrams (a lone character stays a unigram);
/// other alphanumeric runs become lowercased words. Everything else
/// separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut cjk: Vec<char> = Vec::new();

    fn flush_cjk(cjk: &mut Vec<char>, tokens: &mut Vec<String>) {
        match cjk.len() {
            0 => {}
            1 => tokens.push(cjk[0].to_string()),
            _ => tokens.extend(cjk.windows(2).map(|w| w.iter().collect())),
        }
        cjk.clear();
    }

    for c in text.chars() {
        if is_cjk(c) {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            cjk.push(c);
        } else if c.is_alphanumeric() {
            flush_cjk(&mut cjk, &mut tokens);
            word.extend(c.to_lowercase());
        } else {
            flush_cjk(&mut cjk, &mut tokens);
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        }
    }
    flush_cjk(&mut cjk, &mut tokens);
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: usize,
    pub tf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    ids: Vec<String>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseHit {
    pub id: String,
    pub score: f64,
}

impl SparseIndex {
    /// Builds from `(id, text)` pairs. Ids must be unique.
    pub fn build<'a, I>(docs: I) -> Result<Self, DsrsError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut ids = Vec::new();
        let mut seen = BTreeSet::new();
        let mut doc_lengths = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc, (id, text)) in docs.into_iter().enumerate() {
            if !seen.insert(id.to_string()) {
                return Err(DsrsError::DuplicateId(id.to_string()));
            }
            ids.push(id.to_string());
            let tokens = tokenize(text);
            doc_lengths.push(tokens.len());
            let mut tf: BTreeMap<String, usize> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
        }
        let total: usize = doc_lengths.iter().sum();
        let avg_doc_length = if ids.is_empty() { 0.0 } else { total as f64 / ids.len() as f64 };
        Ok(Self { ids, doc_lengths, avg_doc_length, postings })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn doc_length(&self, doc: usize) -> usize {
        self.doc_lengths[doc]
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    /// Number of documents containing `term`.
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top `n` documents by BM25, ties by id; documents scoring 0 are left
    /// out. Repeated query terms count once.
    pub fn search(&self, query: &str, n: usize) -> Result<Vec<SparseHit>, DsrsError> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        if terms.is_empty() {
            return Err(DsrsError::EmptyQuery);
        }
        let mut scores = vec![0.0; self.ids.len()];
        for term in &terms {
            let idf = self.idf(term);
            for p in self.postings(term) {
                let tf = p.tf as f64;
                let norm = 1.0 - BM25_B + BM25_B * self.doc_lengths[p.doc] as f64 / self.avg_doc_length;
                scores[p.doc] += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        let mut hits: Vec<SparseHit> = scores
            .into_iter()
            .enumerate()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, score)| SparseHit { id: self.ids[doc].clone(), score })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(n);
        Ok(hits)
    }

    /// Header line followed by the index as JSON.
    pub fn save(&self, path: &Path) -> Result<(), DsrsError> {
        let body = serde_json::to_string(self).expect("index serializes");
        fs::write(path, format!("{SNAPSHOT_HEADER}\n{body}\n"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DsrsError> {
        let raw = fs::read_to_string(path)?;
        let (header, body) = raw.split_once('\n').unwrap_or((raw.as_str(), ""));
        if header.trim() != SNAPSHOT_HEADER {
            return Err(DsrsError::BadSnapshot(format!("unexpected header {header:?}")));
        }
        serde_json::from_str(body).map_err(|e| DsrsError::BadSnapshot(e.to_string()))
    }
}
