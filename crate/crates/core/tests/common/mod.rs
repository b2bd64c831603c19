//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use covada::classifier::{ConfidenceTable, Loss, ModelParams};
use covada::partition::{Membership, PartitionRatio, PartitionResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random labelled batch: `(emotions, truth, pred, groups)`.
pub struct RawBatch {
    pub emotions: Vec<String>,
    pub truth: Vec<Vec<bool>>,
    pub pred: Vec<Vec<bool>>,
    pub groups: Vec<String>,
}

pub fn random_batch(r: &mut impl Rng, max_e: usize, max_z: usize, max_n: usize) -> RawBatch {
    let e = r.random_range(1..=max_e);
    let z = r.random_range(2..=max_z);
    let n = r.random_range(z..=max_n);
    let p_truth = r.random_range(0.2..0.8);
    let p_pred = r.random_range(0.1..0.9);
    let mut groups: Vec<String> = (0..n).map(|i| format!("g{}", i % z)).collect();
    for i in (1..n).rev() {
        groups.swap(i, r.random_range(0..=i));
    }
    RawBatch {
        emotions: (0..e).map(|k| format!("e{k}")).collect(),
        truth: (0..n).map(|_| (0..e).map(|_| r.random_bool(p_truth)).collect()).collect(),
        pred: (0..n).map(|_| (0..e).map(|_| r.random_bool(p_pred)).collect()).collect(),
        groups,
    }
}

/// F1 from precision and recall, 0 when the class is never true or predicted.
pub fn oracle_f1(truth: &[bool], pred: &[bool]) -> f64 {
    let tp = truth.iter().zip(pred).filter(|(t, p)| **t && **p).count() as f64;
    let predicted = pred.iter().filter(|p| **p).count() as f64;
    let actual = truth.iter().filter(|t| **t).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / predicted;
    let recall = tp / actual;
    2.0 * precision * recall / (precision + recall)
}

fn column(rows: &[Vec<bool>], k: usize) -> Vec<bool> {
    rows.iter().map(|r| r[k]).collect()
}

pub fn oracle_macro_f1(b: &RawBatch) -> f64 {
    let e = b.emotions.len();
    (0..e)
        .map(|k| oracle_f1(&column(&b.truth, k), &column(&b.pred, k)))
        .sum::<f64>()
        / e as f64
}

fn group_names(b: &RawBatch) -> Vec<String> {
    b.groups.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

fn tpr(b: &RawBatch, k: usize, group: &str) -> Option<f64> {
    let idx: Vec<usize> = (0..b.truth.len())
        .filter(|&i| b.groups[i] == group && b.truth[i][k])
        .collect();
    if idx.is_empty() {
        return None;
    }
    Some(idx.iter().filter(|&&i| b.pred[i][k]).count() as f64 / idx.len() as f64)
}

/// Square root of the mean squared TPR difference over all (class, unordered
/// group pair) combinations; `None` if any cell is undefined.
pub fn oracle_tpr_gap(b: &RawBatch) -> Option<f64> {
    let names = group_names(b);
    let mut diffs = Vec::new();
    for k in 0..b.emotions.len() {
        for (a, ga) in names.iter().enumerate() {
            for gb in &names[a + 1..] {
                let d = tpr(b, k, ga)? - tpr(b, k, gb)?;
                diffs.push(d * d);
            }
        }
    }
    Some((diffs.iter().sum::<f64>() / diffs.len() as f64).sqrt())
}

pub fn oracle_dp_gap(b: &RawBatch) -> f64 {
    let names = group_names(b);
    let n = b.pred.len() as f64;
    let e = b.emotions.len();
    let mut total = 0.0;
    for k in 0..e {
        let global = b.pred.iter().filter(|p| p[k]).count() as f64 / n;
        let mut worst: f64 = 0.0;
        for g in &names {
            let members: Vec<&Vec<bool>> = b
                .pred
                .iter()
                .zip(&b.groups)
                .filter(|(_, gg)| *gg == g)
                .map(|(p, _)| p)
                .collect();
            let rate = members.iter().filter(|p| p[k]).count() as f64 / members.len() as f64;
            worst = worst.max((rate - global).abs());
        }
        total += worst * worst;
    }
    (total / e as f64).sqrt()
}

/// Central finite differences of the per-sample loss.
pub fn numeric_gradient(params: &ModelParams, x: &[f64], y: &[bool], loss: Loss, step: f64) -> Vec<f64> {
    let flat = params.flatten();
    let (d, h, e) = (params.d, params.h, params.e);
    let eval = |theta: &[f64]| {
        let p = ModelParams::from_flat(d, h, e, theta).unwrap();
        p.loss_gradient(x, y, loss, None).unwrap().0
    };
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += step;
            minus[i] -= step;
            (eval(&plus) - eval(&minus)) / (2.0 * step)
        })
        .collect()
}

pub fn random_network(r: &mut impl Rng) -> (ModelParams, Vec<f64>, Vec<bool>) {
    let d = r.random_range(1..=5);
    let h = r.random_range(1..=4);
    let e = r.random_range(1..=4);
    let n = d * h + h + e * h + e;
    let flat: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let x = (0..d).map(|_| r.random_range(-1.5..1.5)).collect();
    let y = (0..e).map(|_| r.random_bool(0.5)).collect();
    (ModelParams::from_flat(d, h, e, &flat).unwrap(), x, y)
}

/// Largest elementwise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// A random single- or multi-emotion partition problem.
pub fn random_partition_instance(r: &mut impl Rng) -> (ConfidenceTable, Membership) {
    let e = r.random_range(1..=4);
    let pool = r.random_range(1..=60);
    let tie_levels = r.random_range(1..=8);
    let mut table = ConfidenceTable {
        per_emotion: vec![BTreeMap::new(); e],
    };
    let mut membership = Membership {
        per_emotion: vec![Vec::new(); e],
    };
    for i in 0..pool {
        let id = format!("s{i:03}");
        for k in 0..e {
            if r.random_bool(0.6) {
                let loss = if r.random_bool(0.3) {
                    r.random_range(0..tie_levels) as f64 * 0.25
                } else {
                    r.random_range(0.0..5.0)
                };
                table.per_emotion[k].insert(id.clone(), loss);
                membership.per_emotion[k].push(id.clone());
            }
        }
    }
    (table, membership)
}

pub fn random_ratio(r: &mut impl Rng) -> PartitionRatio {
    let c = r.random_range(1..=9);
    let g = r.random_range(1..=10 - c);
    PartitionRatio::new(c, 10 - c - g, g).unwrap()
}

/// Checks disjointness, exhaustiveness, loss ordering and set sizes.
pub fn check_partition(
    table: &ConfidenceTable,
    membership: &Membership,
    ratio: PartitionRatio,
    result: &PartitionResult,
) -> Result<(), String> {
    if result.emotions.len() != membership.per_emotion.len() {
        return Err("wrong number of emotions".into());
    }
    for (k, ep) in result.emotions.iter().enumerate() {
        let members: BTreeSet<&str> = membership.per_emotion[k].iter().map(String::as_str).collect();
        let sets = [&ep.guiding, &ep.unused, &ep.contrary];
        let mut seen = BTreeSet::new();
        for set in sets {
            for (id, loss) in set {
                if !seen.insert(id.as_str()) {
                    return Err(format!("emotion {k}: `{id}` appears twice"));
                }
                if table.per_emotion[k][id] != *loss {
                    return Err(format!("emotion {k}: `{id}` carries the wrong loss"));
                }
            }
        }
        if seen != members {
            return Err(format!("emotion {k}: sets do not cover D_e exactly"));
        }
        let n = members.len();
        if n < 2 {
            if !ep.excluded || !ep.guiding.is_empty() || !ep.contrary.is_empty() {
                return Err(format!("emotion {k}: tiny subset not excluded"));
            }
            continue;
        }
        if ep.guiding.len() != n * ratio.guiding as usize / 10
            || ep.contrary.len() != n * ratio.contrary as usize / 10
        {
            return Err(format!(
                "emotion {k}: sizes {}/{}/{} for n={n} and ratio {ratio}",
                ep.guiding.len(),
                ep.unused.len(),
                ep.contrary.len()
            ));
        }
        let key = |(id, loss): &(String, f64)| (*loss, id.clone());
        let ordered: Vec<(f64, String)> = sets.iter().flat_map(|s| s.iter().map(key)).collect();
        for w in ordered.windows(2) {
            if w[0].0 > w[1].0 || (w[0].0 == w[1].0 && w[0].1 > w[1].1) {
                return Err(format!("emotion {k}: `{}` ranked before `{}`", w[0].1, w[1].1));
            }
        }
    }
    Ok(())
}
