//! Classification metrics: confusion matrix, one-vs-rest
//! precision/recall/F1/FPR per class, support-weighted averages, accuracy,
//! and rank-statistic ROC/AUC from per-class scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major confusion counts: rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Counts `(true, predicted)` pairs over a fixed label registry.
    pub fn from_pairs(truths: &[String], preds: &[String], labels: &[String]) -> Result<Self> {
        if truths.len() != preds.len() {
            return Err(Error::ShapeMismatch {
                what: "prediction list",
                expected: truths.len(),
                actual: preds.len(),
            });
        }
        let index = |l: &String| {
            labels
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::UnknownLabel(l.clone()))
        };
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (t, p) in truths.iter().zip(preds) {
            counts[index(t)?][index(p)?] += 1;
        }
        Ok(ConfusionMatrix {
            labels: labels.to_vec(),
            counts,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, true_idx: usize, pred_idx: usize) -> u64 {
        self.counts[true_idx][pred_idx]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Per-class supports (row sums).
    pub fn supports(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// One-vs-rest (TP, FP, FN, TN) for a class index.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let total = self.total();
        let tp = self.counts[class][class];
        let fp: u64 = (0..self.labels.len())
            .filter(|&i| i != class)
            .map(|i| self.counts[i][class])
            .sum();
        let fn_: u64 = (0..self.labels.len())
            .filter(|&j| j != class)
            .map(|j| self.counts[class][j])
            .sum();
        let tn = total - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }
}

/// One-vs-rest metrics for a single class. `degenerate` marks classes where
/// at least one rate had a zero denominator (reported as 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub support: u64,
    pub degenerate: bool,
    pub auc: Option<f64>,
}

/// One point of a one-vs-rest ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Full metric suite over one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub weighted_fpr: f64,
    pub accuracy: f64,
    pub macro_auc: Option<f64>,
    pub total: u64,
    pub confusion: ConfusionMatrix,
    /// Per class, in registry order; empty when no scores were supplied.
    pub roc_curves: Vec<Vec<RocPoint>>,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision/recall/F1/FPR per class; zero denominators yield 0
/// with the degenerate flag set. AUC slots are filled separately.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let supports = cm.supports();
    cm.labels()
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let (tp, fp, fn_, tn) = cm.one_vs_rest(c);
            let mut degenerate = false;
            let precision = ratio(tp, tp + fp, &mut degenerate);
            let recall = ratio(tp, tp + fn_, &mut degenerate);
            let fpr = ratio(fp, fp + tn, &mut degenerate);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: label.clone(),
                precision,
                recall,
                f1,
                fpr,
                support: supports[c],
                degenerate,
                auc: None,
            }
        })
        .collect()
}

/// Rank-statistic AUC (probability that a random positive outscores a random
/// negative, ties counted 1/2) plus the threshold-swept ROC points. Returns
/// `None` when the class has no positives or no negatives.
pub fn roc_auc(scores: &[f64], is_positive: &[bool]) -> Result<Option<(f64, Vec<RocPoint>)>> {
    if scores.len() != is_positive.len() {
        return Err(Error::ShapeMismatch {
            what: "roc labels",
            expected: scores.len(),
            actual: is_positive.len(),
        });
    }
    let p = is_positive.iter().filter(|&&x| x).count();
    let n = scores.len() - p;
    if p == 0 || n == 0 {
        return Ok(None);
    }

    // Midrank sum of the positives.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the midrank.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if is_positive[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_sum_pos - (p * (p + 1)) as f64 / 2.0) / (p as f64 * n as f64);

    // ROC points: sweep thresholds over the distinct scores, descending;
    // predict positive when score >= threshold. The anchor threshold sits
    // above every finite score (f64::MAX keeps the report JSON-clean).
    let mut points = vec![RocPoint {
        threshold: f64::MAX,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = order.len();
    while k > 0 {
        let thresh = scores[order[k - 1]];
        while k > 0 && scores[order[k - 1]] == thresh {
            if is_positive[order[k - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push(RocPoint {
            threshold: thresh,
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(Some((auc, points)))
}

/// Builds the full report. `scores[i]` holds record `i`'s per-class scores
/// in `labels` order (decider Q-values); pass an empty slice to skip
/// ROC/AUC. Labels beyond the score vector length get an undefined AUC.
pub fn evaluate(
    truths: &[String],
    preds: &[String],
    scores: &[Vec<f32>],
    labels: &[String],
) -> Result<EvaluationReport> {
    if truths.is_empty() {
        return Err(Error::validation("evaluation set is empty"));
    }
    let cm = ConfusionMatrix::from_pairs(truths, preds, labels)?;
    let mut classes = per_class_metrics(&cm);
    let mut roc_curves = vec![Vec::new(); labels.len()];

    if !scores.is_empty() {
        if scores.len() != truths.len() {
            return Err(Error::ShapeMismatch {
                what: "score rows",
                expected: truths.len(),
                actual: scores.len(),
            });
        }
        for (c, class) in classes.iter_mut().enumerate() {
            if scores.iter().any(|s| c >= s.len()) {
                continue;
            }
            let class_scores: Vec<f64> = scores.iter().map(|s| f64::from(s[c])).collect();
            let is_pos: Vec<bool> = truths.iter().map(|t| *t == class.label).collect();
            if let Some((auc, points)) = roc_auc(&class_scores, &is_pos)? {
                class.auc = Some(auc);
                roc_curves[c] = points;
            }
        }
    }

    let total = cm.total();
    let support_sum: u64 = classes.iter().map(|c| c.support).sum();
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        classes
            .iter()
            .map(|c| c.support as f64 * f(c))
            .sum::<f64>()
            / support_sum as f64
    };
    let defined_aucs: Vec<f64> = classes.iter().filter_map(|c| c.auc).collect();
    let macro_auc = if defined_aucs.is_empty() {
        None
    } else {
        Some(defined_aucs.iter().sum::<f64>() / defined_aucs.len() as f64)
    };

    Ok(EvaluationReport {
        weighted_precision: weighted(|c| c.precision),
        weighted_recall: weighted(|c| c.recall),
        weighted_f1: weighted(|c| c.f1),
        weighted_fpr: weighted(|c| c.fpr),
        accuracy: cm.trace() as f64 / total as f64,
        macro_auc,
        total,
        classes,
        confusion: cm,
        roc_curves,
    })
}

impl EvaluationReport {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }

    /// Aligned text table: one row per class in registry order, then the
    /// weighted average, accuracy and macro AUC.
    pub fn render_text(&self) -> String {
        let name_width = self
            .classes
            .iter()
            .map(|c| c.label.len())
            .chain(["Weighted Average".len()].into_iter())
            .max()
            .unwrap_or(16);
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_width$}  {:>9}  {:>7}  {:>8}  {:>8}  {:>9}\n",
            "Class", "Precision", "Recall", "F1-Score", "FPR", "Support"
        ));
        for c in &self.classes {
            out.push_str(&format!(
                "{:<name_width$}  {:>9.4}  {:>7.4}  {:>8.4}  {:>8.5}  {:>9}{}\n",
                c.label,
                c.precision,
                c.recall,
                c.f1,
                c.fpr,
                c.support,
                if c.degenerate { "  (degenerate)" } else { "" }
            ));
        }
        out.push_str(&format!(
            "{:<name_width$}  {:>9.4}  {:>7.4}  {:>8.4}  {:>8.5}  {:>9}\n",
            "Weighted Average",
            self.weighted_precision,
            self.weighted_recall,
            self.weighted_f1,
            self.weighted_fpr,
            self.total
        ));
        out.push_str(&format!("Accuracy  {:.4}\n", self.accuracy));
        match self.macro_auc {
            Some(auc) => out.push_str(&format!("Macro AUC {auc:.4}\n")),
            None => out.push_str("Macro AUC undefined\n"),
        }
        out
    }

    /// Confusion matrix as an aligned table (rows true, columns predicted).
    pub fn render_confusion(&self) -> String {
        let cm = &self.confusion;
        let w = cm
            .labels()
            .iter()
            .map(|l| l.len())
            .chain(cm.counts().iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(8)
            .max(9);
        let mut out = String::new();
        out.push_str(&format!("{:>w$}", "true\\pred"));
        for l in cm.labels() {
            out.push_str(&format!("  {l:>w$}"));
        }
        out.push('\n');
        for (i, l) in cm.labels().iter().enumerate() {
            out.push_str(&format!("{l:>w$}"));
            for j in 0..cm.labels().len() {
                out.push_str(&format!("  {:>w$}", cm.count(i, j)));
            }
            out.push('\n');
        }
        out
    }

    /// ROC points as delimiter-separated rows (class, threshold, fpr, tpr).
    pub fn render_roc_csv(&self) -> String {
        let mut out = String::from("class,threshold,fpr,tpr\n");
        for (c, points) in self.classes.iter().zip(&self.roc_curves) {
            for p in points {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    c.label, p.threshold, p.fpr, p.tpr
                ));
            }
        }
        out
    }
}
