//! Macro-averaged F1 and recall for entity selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::EntityClass;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub macro_f1: f64,
    pub macro_recall: f64,
    /// Labels contributing to the F1 average.
    pub labels: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionScores {
    pub per_class: BTreeMap<EntityClass, ClassScores>,
    /// Unweighted mean over the classes that have any label.
    pub macro_f1: f64,
    pub macro_recall: f64,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

/// Per-label F1 averaged over labels appearing in gold or prediction;
/// per-label recall averaged over labels with gold support. Scores are
/// fractions in `[0, 1]`.
pub fn class_scores(gold: &[BTreeSet<usize>], predicted: &[BTreeSet<usize>]) -> ClassScores {
    assert_eq!(gold.len(), predicted.len(), "gold and predicted lengths differ");
    let mut counts: BTreeMap<usize, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        for &l in g {
            let c = counts.entry(l).or_default();
            if p.contains(&l) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        }
        for &l in p.difference(g) {
            counts.entry(l).or_default().fp += 1;
        }
    }
    if counts.is_empty() {
        return ClassScores::default();
    }
    let f1: Vec<f64> = counts
        .values()
        .map(|c| {
            let denom = 2 * c.tp + c.fp + c.fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * c.tp as f64 / denom as f64
            }
        })
        .collect();
    let recall: Vec<f64> = counts
        .values()
        .filter(|c| c.tp + c.fn_ > 0)
        .map(|c| c.tp as f64 / (c.tp + c.fn_) as f64)
        .collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    ClassScores {
        macro_f1: mean(&f1),
        macro_recall: mean(&recall),
        labels: counts.len(),
    }
}

/// Gold and predicted label sets of one instruction.
#[derive(Clone, Debug, Default)]
pub struct SelectionPair {
    pub gold: [BTreeSet<usize>; 3],
    pub predicted: [BTreeSet<usize>; 3],
}

pub fn selection_scores(pairs: &[SelectionPair]) -> SelectionScores {
    let mut out = SelectionScores::default();
    let mut f1 = Vec::new();
    let mut recall = Vec::new();
    for class in EntityClass::ALL {
        let k = class.index();
        let gold: Vec<_> = pairs.iter().map(|p| p.gold[k].clone()).collect();
        let pred: Vec<_> = pairs.iter().map(|p| p.predicted[k].clone()).collect();
        let s = class_scores(&gold, &pred);
        if s.labels > 0 {
            f1.push(s.macro_f1);
            recall.push(s.macro_recall);
        }
        out.per_class.insert(class, s);
    }
    if !f1.is_empty() {
        out.macro_f1 = f1.iter().sum::<f64>() / f1.len() as f64;
        out.macro_recall = recall.iter().sum::<f64>() / recall.len() as f64;
    }
    out
}
