//! Exact-match span scoring.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bio::TagSpan;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpanCounts {
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl SpanCounts {
    /// Precision, recall and F1 with the empty-set conventions: a side with
    /// nothing to score is perfect when the other side is empty too, zero
    /// otherwise.
    pub fn prf(&self) -> Prf {
        let p = match (self.predicted, self.gold) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (n, _) => self.correct as f64 / n as f64,
        };
        let r = match (self.gold, self.predicted) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            (n, _) => self.correct as f64 / n as f64,
        };
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        Prf { p, r, f1 }
    }

    fn add(&mut self, other: SpanCounts) {
        self.predicted += other.predicted;
        self.gold += other.gold;
        self.correct += other.correct;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpanTally {
    pub micro: SpanCounts,
    pub per_label: BTreeMap<String, SpanCounts>,
}

impl SpanTally {
    /// Adds one sentence's predicted and gold spans.
    pub fn add_sentence(&mut self, pred: &[TagSpan], gold: &[TagSpan]) {
        let gold_set: HashSet<&TagSpan> = gold.iter().collect();
        for s in pred {
            let c = self.per_label.entry(s.label.clone()).or_default();
            c.predicted += 1;
            if gold_set.contains(s) {
                c.correct += 1;
            }
        }
        for s in gold {
            self.per_label.entry(s.label.clone()).or_default().gold += 1;
        }
        self.micro = SpanCounts::default();
        for c in self.per_label.values() {
            self.micro.add(*c);
        }
    }

    pub fn report(&self) -> SpanReport {
        SpanReport {
            micro: self.micro.prf(),
            per_label: self
                .per_label
                .iter()
                .map(|(k, v)| (k.clone(), v.prf()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub micro: Prf,
    pub per_label: BTreeMap<String, Prf>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("span lists are misaligned: {pred} predicted sentences vs {gold} gold sentences")]
pub struct Misaligned {
    pub pred: usize,
    pub gold: usize,
}

/// Micro and per-label precision/recall/F1 over aligned sentence lists.
pub fn span_prf(pred: &[Vec<TagSpan>], gold: &[Vec<TagSpan>]) -> Result<SpanReport, Misaligned> {
    Ok(span_tally(pred, gold)?.report())
}

pub fn span_tally(pred: &[Vec<TagSpan>], gold: &[Vec<TagSpan>]) -> Result<SpanTally, Misaligned> {
    if pred.len() != gold.len() {
        return Err(Misaligned {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let mut tally = SpanTally::default();
    for (p, g) in pred.iter().zip(gold) {
        tally.add_sentence(p, g);
    }
    Ok(tally)
}
