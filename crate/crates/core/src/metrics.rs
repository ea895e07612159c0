//! Confusion matrix and classification metrics.
//!
//! Rows are actual classes, columns predicted. Per-class metrics use the
//! one-vs-rest reduction: `tp = cm[c][c]`, `fp` the rest of column `c`,
//! `fn` the rest of row `c`, `tn` everything else, then
//!
//! ```text
//! ACC = (TP+TN)/(TP+TN+FP+FN)   P = TP/(TP+FP)
//! R   = TP/(TP+FN)              F1 = 2PR/(P+R)
//! ```
//!
//! A zero denominator reports 0 with the metric listed in `undefined`
//! instead of producing NaN. The JSON report keeps a fixed key order so
//! golden-file comparisons are byte-stable.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Result<Self> {
        let k = class_names.len();
        if k == 0 {
            return Err(Error::Config("confusion matrix needs at least one class".into()));
        }
        Ok(ConfusionMatrix {
            counts: vec![vec![0; k]; k],
            class_names,
        })
    }

    pub fn from_predictions(actual: &[usize], predicted: &[usize], class_names: Vec<String>) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "label lists differ in length: {} vs {}",
                actual.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(class_names)?;
        let k = cm.k();
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= k || p >= k {
                return Err(Error::Range(format!(
                    "label pair ({a}, {p}) out of range for {k} classes"
                )));
            }
            cm.counts[a][p] += 1;
        }
        Ok(cm)
    }

    /// Generic class names `class_0..class_{k-1}`.
    pub fn generic_names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("class_{i}")).collect()
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn at(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn add(&mut self, actual: usize, predicted: usize) -> Result<()> {
        let k = self.k();
        if actual >= k || predicted >= k {
            return Err(Error::Range(format!(
                "label pair ({actual}, {predicted}) out of range for {k} classes"
            )));
        }
        self.counts[actual][predicted] += 1;
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// Row sum: how many samples of this class were evaluated.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub support: u64,
    /// Metrics whose denominator was zero and were reported as 0.
    pub undefined: Vec<&'static str>,
}

/// One-vs-rest metrics for `class`.
pub fn class_metrics(cm: &ConfusionMatrix, class: usize) -> Result<ClassMetrics> {
    let k = cm.k();
    if class >= k {
        return Err(Error::Range(format!("class {class} out of range for {k} classes")));
    }
    let tp = cm.at(class, class);
    let fp: u64 = (0..k).filter(|&a| a != class).map(|a| cm.at(a, class)).sum();
    let fn_: u64 = (0..k).filter(|&p| p != class).map(|p| cm.at(class, p)).sum();
    let total = cm.total();
    let tn = total - tp - fp - fn_;

    let mut undefined = Vec::new();
    let mut ratio = |num: u64, den: u64, name: &'static str| -> f64 {
        if den == 0 {
            undefined.push(name);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio(tp + tn, total, "accuracy");
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fn_, "recall");
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1");
        0.0
    };
    Ok(ClassMetrics {
        accuracy,
        precision,
        recall,
        f1,
        tp,
        tn,
        fp,
        fn_,
        support: cm.support(class),
        undefined,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassReport {
    pub name: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    pub classes: Vec<ClassReport>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    pub micro_accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

/// Full report: per-class metrics, macro averages, micro accuracy
/// (trace/total), and the raw confusion counts.
pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let k = cm.k();
    let mut classes = Vec::with_capacity(k);
    let mut sums = [0.0f64; 4];
    for c in 0..k {
        let m = class_metrics(cm, c)?;
        sums[0] += m.accuracy;
        sums[1] += m.precision;
        sums[2] += m.recall;
        sums[3] += m.f1;
        classes.push(ClassReport {
            name: cm.class_names()[c].clone(),
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            support: m.support,
        });
    }
    let total = cm.total();
    Ok(MetricsReport {
        classes,
        macro_avg: MacroMetrics {
            accuracy: sums[0] / k as f64,
            precision: sums[1] / k as f64,
            recall: sums[2] / k as f64,
            f1: sums[3] / k as f64,
        },
        micro_accuracy: if total == 0 {
            0.0
        } else {
            cm.trace() as f64 / total as f64
        },
        confusion: cm.rows().to_vec(),
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
