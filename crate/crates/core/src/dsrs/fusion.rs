use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::DsrsError;

pub const DEFAULT_RRF_K: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHit {
    pub id: String,
    pub sparse_rank: Option<usize>,
    pub dense_rank: Option<usize>,
    pub rrf_score: f64,
}

fn ranks(list: &[String], which: &str) -> Result<BTreeMap<String, usize>, DsrsError> {
    let mut seen = HashSet::new();
    let mut out = BTreeMap::new();
    for (i, id) in list.iter().enumerate() {
        if !seen.insert(id) {
            return Err(DsrsError::MalformedRanking(format!("{id} appears twice in the {which} list")));
        }
        out.insert(id.clone(), i + 1);
    }
    Ok(out)
}

/// Reciprocal rank fusion: each document scores `Σ 1/(k + rank)` over the
/// lists it appears in (sparse term first). Sorted by score descending,
/// then id.
pub fn rrf_fuse(sparse: &[String], dense: &[String], k: f64) -> Result<Vec<FusedHit>, DsrsError> {
    if !(k.is_finite() && k > 0.0) {
        return Err(DsrsError::InvalidConfig(format!("rrf k must be positive, got {k}")));
    }
    let s = ranks(sparse, "sparse")?;
    let d = ranks(dense, "dense")?;
    let ids: std::collections::BTreeSet<&String> = s.keys().chain(d.keys()).collect();
    let mut fused: Vec<FusedHit> = ids
        .into_iter()
        .map(|id| {
            let sparse_rank = s.get(id).copied();
            let dense_rank = d.get(id).copied();
            let mut score = 0.0;
            if let Some(r) = sparse_rank {
                score += 1.0 / (k + r as f64);
            }
            if let Some(r) = dense_rank {
                score += 1.0 / (k + r as f64);
            }
            FusedHit { id: id.clone(), sparse_rank, dense_rank, rrf_score: score }
        })
        .collect();
    fused.sort_by(|a, b| b.rrf_score.total_cmp(&a.rrf_score).then_with(|| a.id.cmp(&b.id)));
    Ok(fused)
}
