use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SyndromeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision_w: f64,
    pub recall_w: f64,
    pub f1_w: f64,
    pub accuracy: f64,
    pub samples: usize,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Support-weighted precision, recall and F1. Undefined ratios count as 0.
/// Labels that only ever appear as predictions get support 0 and so carry
/// no weight.
pub fn weighted_metrics(predictions: &[String], gold: &[String]) -> Result<WeightedMetrics, SyndromeError> {
    if predictions.len() != gold.len() {
        return Err(SyndromeError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(SyndromeError::EmptyInput);
    }
    // (true positives, predicted count, gold count)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (p, g) in predictions.iter().zip(gold) {
        counts.entry(p).or_default().1 += 1;
        counts.entry(g).or_default().2 += 1;
        if p == g {
            counts.get_mut(p.as_str()).expect("inserted").0 += 1;
            correct += 1;
        }
    }
    let n = gold.len() as f64;
    let (mut pw, mut rw, mut fw) = (0.0, 0.0, 0.0);
    let mut per_class = BTreeMap::new();
    for (label, (tp, predicted, support)) in counts {
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        let w = support as f64 / n;
        pw += w * precision;
        rw += w * recall;
        fw += w * f1;
        per_class.insert(label.to_string(), ClassMetrics { precision, recall, f1, support });
    }
    Ok(WeightedMetrics {
        precision_w: pw,
        recall_w: rw,
        f1_w: fw,
        accuracy: correct as f64 / n,
        samples: gold.len(),
        per_class,
    })
}

pub fn write_metrics_report(path: &Path, metrics: &WeightedMetrics) -> Result<(), SyndromeError> {
    let json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    std::fs::write(path, json + "\n")?;
    Ok(())
}
