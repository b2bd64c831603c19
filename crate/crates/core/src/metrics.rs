//! Macro F1, TPR-gap and DP-gap over multi-label predictions.
//!
//! All three operate on binarized ground truth and predictions. Groups are
//! taken from the batch itself, ordered by name, so relabeling groups never
//! changes a metric.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Aligned ground truth, predictions and group tags.
#[derive(Debug, Clone)]
pub struct EvalBatch {
    pub emotions: Vec<String>,
    truth: Vec<Vec<bool>>,
    pred: Vec<Vec<bool>>,
    /// Group index per sample into `groups`.
    group_of: Vec<usize>,
    groups: Vec<String>,
}

impl EvalBatch {
    pub fn new(
        emotions: Vec<String>,
        truth: Vec<Vec<bool>>,
        pred: Vec<Vec<bool>>,
        groups: Vec<String>,
    ) -> Result<Self> {
        let n = truth.len();
        if n == 0 {
            return Err(Error::InvalidBatch("batch is empty".into()));
        }
        if pred.len() != n || groups.len() != n {
            return Err(Error::InvalidBatch(format!(
                "misaligned batch: {n} truth rows, {} prediction rows, {} group tags",
                pred.len(),
                groups.len()
            )));
        }
        let e = emotions.len();
        if truth.iter().chain(&pred).any(|r| r.len() != e) {
            return Err(Error::InvalidBatch(format!("every row must have {e} classes")));
        }
        let names: Vec<String> = groups
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let group_of = groups
            .iter()
            .map(|g| names.binary_search(g).expect("group in set"))
            .collect();
        Ok(Self {
            emotions,
            truth,
            pred,
            group_of,
            groups: names,
        })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.emotions.len()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn truth(&self) -> &[Vec<bool>] {
        &self.truth
    }

    pub fn pred(&self) -> &[Vec<bool>] {
        &self.pred
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GapOptions {
    /// Drop classes with a (class, group) cell lacking positives instead of failing.
    pub skip_undefined_cells: bool,
}

/// Confusion counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    /// F1, with 0 when the class has no predicted and no actual positives.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn confusion(truth: &[Vec<bool>], pred: &[Vec<bool>], class: usize) -> Confusion {
    let mut c = Confusion::default();
    for (t, p) in truth.iter().zip(pred) {
        match (t[class], p[class]) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Unweighted mean of per-class F1 over label matrices.
pub fn macro_f1_labels(truth: &[Vec<bool>], pred: &[Vec<bool>]) -> f64 {
    let Some(first) = truth.first() else {
        return 0.0;
    };
    let classes = first.len();
    if classes == 0 {
        return 0.0;
    }
    (0..classes)
        .map(|e| confusion(truth, pred, e).f1())
        .sum::<f64>()
        / classes as f64
}

pub fn macro_f1(batch: &EvalBatch) -> f64 {
    macro_f1_labels(&batch.truth, &batch.pred)
}

/// TPR per group for one class; `None` where the group has no positives.
pub fn class_tpr_by_group(batch: &EvalBatch, class: usize) -> Vec<Option<f64>> {
    let mut positives = vec![0usize; batch.groups.len()];
    let mut hits = vec![0usize; batch.groups.len()];
    for i in 0..batch.len() {
        if batch.truth[i][class] {
            let g = batch.group_of[i];
            positives[g] += 1;
            if batch.pred[i][class] {
                hits[g] += 1;
            }
        }
    }
    positives
        .iter()
        .zip(&hits)
        .map(|(&p, &h)| (p > 0).then(|| h as f64 / p as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TprGap {
    pub value: f64,
    /// Classes dropped under `skip_undefined_cells`.
    pub skipped: Vec<usize>,
}

/// Root-mean-square pairwise TPR difference over `classes`.
pub fn tpr_gap_over(batch: &EvalBatch, classes: &[usize], opts: GapOptions) -> Result<TprGap> {
    let z = batch.groups.len();
    if z < 2 {
        return Err(Error::InvalidBatch(
            "TPR-gap needs at least two groups".into(),
        ));
    }
    let mut undefined = Vec::new();
    let mut skipped = Vec::new();
    let mut sum = 0.0;
    let mut used = 0usize;
    for &e in classes {
        let tprs = class_tpr_by_group(batch, e);
        let missing: Vec<usize> = (0..z).filter(|&g| tprs[g].is_none()).collect();
        if !missing.is_empty() {
            if opts.skip_undefined_cells {
                skipped.push(e);
                continue;
            }
            for g in missing {
                undefined.push(format!("({}, {})", batch.emotions[e], batch.groups[g]));
            }
            continue;
        }
        used += 1;
        for i in 0..z {
            for j in i + 1..z {
                let d = tprs[i].unwrap() - tprs[j].unwrap();
                sum += d * d;
            }
        }
    }
    if !undefined.is_empty() {
        return Err(Error::UndefinedTprCells(undefined));
    }
    if used == 0 {
        return Err(Error::InvalidBatch(
            "no class has positives in every group".into(),
        ));
    }
    let pairs = used * z * (z - 1) / 2;
    Ok(TprGap {
        value: (sum / pairs as f64).sqrt(),
        skipped,
    })
}

pub fn tpr_gap(batch: &EvalBatch, opts: GapOptions) -> Result<TprGap> {
    let all: Vec<usize> = (0..batch.num_classes()).collect();
    tpr_gap_over(batch, &all, opts)
}

/// Positive prediction rate per class over all `N` samples.
pub fn global_rates(batch: &EvalBatch) -> Vec<f64> {
    let n = batch.len() as f64;
    (0..batch.num_classes())
        .map(|e| batch.pred.iter().filter(|p| p[e]).count() as f64 / n)
        .collect()
}

/// Positive prediction rate per (class, group).
pub fn group_rates(batch: &EvalBatch) -> Vec<Vec<f64>> {
    let z = batch.groups.len();
    let mut sizes = vec![0usize; z];
    for &g in &batch.group_of {
        sizes[g] += 1;
    }
    (0..batch.num_classes())
        .map(|e| {
            let mut hits = vec![0usize; z];
            for (p, &g) in batch.pred.iter().zip(&batch.group_of) {
                if p[e] {
                    hits[g] += 1;
                }
            }
            hits.iter()
                .zip(&sizes)
                .map(|(&h, &s)| h as f64 / s as f64)
                .collect()
        })
        .collect()
}

/// RMS over `classes` of the largest group deviation from the global rate.
pub fn dp_gap_over(batch: &EvalBatch, classes: &[usize]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidBatch("DP-gap needs N >= 1".into()));
    }
    if classes.is_empty() {
        return Err(Error::InvalidBatch("DP-gap needs at least one class".into()));
    }
    let global = global_rates(batch);
    let by_group = group_rates(batch);
    let sum: f64 = classes
        .iter()
        .map(|&e| {
            by_group[e]
                .iter()
                .map(|r| (r - global[e]).abs())
                .fold(0.0, f64::max)
                .powi(2)
        })
        .sum();
    Ok((sum / classes.len() as f64).sqrt())
}

pub fn dp_gap(batch: &EvalBatch) -> Result<f64> {
    let all: Vec<usize> = (0..batch.num_classes()).collect();
    dp_gap_over(batch, &all)
}

/// One row of the per-emotion breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionRow {
    pub emotion: String,
    pub f1: f64,
    /// `None` when the class was skipped as undefined.
    pub tpr_gap: Option<f64>,
    pub dp_gap: f64,
}

pub fn per_emotion_report(batch: &EvalBatch, opts: GapOptions) -> Result<Vec<EmotionRow>> {
    (0..batch.num_classes())
        .map(|e| {
            let tpr = tpr_gap_over(batch, &[e], opts);
            let tpr_gap = match tpr {
                Ok(t) if t.skipped.is_empty() => Some(t.value),
                Ok(_) => None,
                Err(Error::InvalidBatch(_)) if opts.skip_undefined_cells => None,
                Err(err) => return Err(err),
            };
            Ok(EmotionRow {
                emotion: batch.emotions[e].clone(),
                f1: confusion(&batch.truth, &batch.pred, e).f1(),
                tpr_gap,
                dp_gap: dp_gap_over(batch, &[e])?,
            })
        })
        .collect()
}

/// Performance and fairness of one trained model on one evaluation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub macro_f1: f64,
    pub tpr_gap: f64,
    pub dp_gap: f64,
    pub groups: Vec<String>,
    /// `[class][group]`
    pub tpr_by_group: Vec<Vec<Option<f64>>>,
    pub global_rates: Vec<f64>,
    /// `[class][group]`
    pub group_rates: Vec<Vec<f64>>,
    pub per_emotion: Vec<EmotionRow>,
    pub skipped_classes: Vec<String>,
}

pub fn evaluate(batch: &EvalBatch, opts: GapOptions) -> Result<FairnessReport> {
    let tpr = tpr_gap(batch, opts)?;
    Ok(FairnessReport {
        macro_f1: macro_f1(batch),
        tpr_gap: tpr.value,
        dp_gap: dp_gap(batch)?,
        groups: batch.groups.clone(),
        tpr_by_group: (0..batch.num_classes())
            .map(|e| class_tpr_by_group(batch, e))
            .collect(),
        global_rates: global_rates(batch),
        group_rates: group_rates(batch),
        per_emotion: per_emotion_report(batch, opts)?,
        skipped_classes: tpr
            .skipped
            .iter()
            .map(|&e| batch.emotions[e].clone())
            .collect(),
    })
}
