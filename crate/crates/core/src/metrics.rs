//! Confusion-matrix evaluation: per-class and macro precision/recall/F1 and
//! accuracy.

use std::collections::BTreeMap;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    /// Row-major C×C counts; entry (gold, pred).
    counts: Vec<u64>,
    classes: Vec<String>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn count(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.classes.len() + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Tally gold/pred index pairs into a C×C matrix.
pub fn confusion(gold: &[usize], pred: &[usize], classes: &[String]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "gold and pred lengths differ: {} vs {}",
            gold.len(),
            pred.len()
        )));
    }
    let c = classes.len();
    let mut counts = vec![0u64; c * c];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= c {
            return Err(Error::IndexOutOfBounds { index: g, size: c });
        }
        if p >= c {
            return Err(Error::IndexOutOfBounds { index: p, size: c });
        }
        counts[g * c + p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        classes: classes.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroScores {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Keyed by class name, iteration order sorted by name.
    pub per_class: BTreeMap<String, ClassScores>,
}

/// Per-class precision/recall/F1 (zero-division → 0), unweighted macro
/// means, and accuracy = trace/total.
pub fn macro_scores(cm: &ConfusionMatrix) -> Result<MacroScores> {
    let c = cm.num_classes();
    let total = cm.total();
    if c == 0 || total == 0 {
        return Err(Error::InvalidArgument(
            "cannot score an empty confusion matrix".into(),
        ));
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut per_class = BTreeMap::new();
    let (mut sum_p, mut sum_r, mut sum_f, mut trace) = (0.0, 0.0, 0.0, 0u64);
    for k in 0..c {
        let tp = cm.count(k, k);
        let pred_k: u64 = (0..c).map(|g| cm.count(g, k)).sum();
        let gold_k: u64 = (0..c).map(|p| cm.count(k, p)).sum();
        let precision = ratio(tp, pred_k);
        let recall = ratio(tp, gold_k);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        sum_p += precision;
        sum_r += recall;
        sum_f += f1;
        trace += tp;
        per_class.insert(
            cm.classes()[k].clone(),
            ClassScores {
                precision,
                recall,
                f1,
            },
        );
    }
    Ok(MacroScores {
        macro_precision: sum_p / c as f64,
        macro_recall: sum_r / c as f64,
        macro_f1: sum_f / c as f64,
        accuracy: trace as f64 / total as f64,
        per_class,
    })
}

impl MacroScores {
    /// Flat `key=value` text block; keys: macro_f1, macro_precision,
    /// macro_recall, accuracy, per_class.<name>.{precision,recall,f1}.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("macro_f1={:.6}\n", self.macro_f1));
        out.push_str(&format!("macro_precision={:.6}\n", self.macro_precision));
        out.push_str(&format!("macro_recall={:.6}\n", self.macro_recall));
        out.push_str(&format!("accuracy={:.6}\n", self.accuracy));
        for (name, s) in &self.per_class {
            out.push_str(&format!("per_class.{name}.precision={:.6}\n", s.precision));
            out.push_str(&format!("per_class.{name}.recall={:.6}\n", s.recall));
            out.push_str(&format!("per_class.{name}.f1={:.6}\n", s.f1));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        let num = |v: f64| serde_json::json!(v);
        map.insert("macro_f1".into(), num(self.macro_f1));
        map.insert("macro_precision".into(), num(self.macro_precision));
        map.insert("macro_recall".into(), num(self.macro_recall));
        map.insert("accuracy".into(), num(self.accuracy));
        let mut per_class = serde_json::Map::new();
        for (name, s) in &self.per_class {
            per_class.insert(
                name.clone(),
                serde_json::json!({
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                }),
            );
        }
        map.insert("per_class".into(), serde_json::Value::Object(per_class));
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
    }
}
