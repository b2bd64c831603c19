//! Two-layer multi-label classifier trained with CE or class-balanced GCE.
//!
//! The network is `d → tanh(h) → |E|` logits with an element-wise logistic
//! output, so every class is an independent Bernoulli prediction.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainView;
use crate::error::{Error, Result};
use crate::metrics::macro_f1_labels;
use crate::partition::{binarize, Membership};
use crate::records::fmt_f64;
use crate::seed;

/// Probability clamp applied inside both losses.
pub const PROB_EPS: f64 = 1e-7;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Weights and biases, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub h: usize,
    pub e: usize,
    /// `h × d`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `e × h`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn logistic(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl ModelParams {
    pub fn zeros(d: usize, h: usize, e: usize) -> Self {
        Self {
            d,
            h,
            e,
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; e * h],
            b2: vec![0.0; e],
        }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(d: usize, h: usize, e: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut p = Self::zeros(d, h, e);
        let l1 = (6.0 / (d + h) as f64).sqrt();
        let l2 = (6.0 / (h + e) as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.random_range(-l1..l1));
        p.w2.iter_mut().for_each(|w| *w = rng.random_range(-l2..l2));
        p
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters as one flat slice order: w1, b1, w2, b2.
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn from_flat(d: usize, h: usize, e: usize, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(d, h, e);
        if flat.len() != p.num_params() {
            return Err(Error::Dimension {
                expected: p.num_params(),
                actual: flat.len(),
            });
        }
        let (a, rest) = flat.split_at(h * d);
        let (b, rest) = rest.split_at(h);
        let (c, rest) = rest.split_at(e * h);
        p.w1.copy_from_slice(a);
        p.b1.copy_from_slice(b);
        p.w2.copy_from_slice(c);
        p.b2.copy_from_slice(rest);
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..self.h)
            .map(|j| {
                let row = &self.w1[j * self.d..(j + 1) * self.d];
                let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
                pre.tanh()
            })
            .collect()
    }

    fn logits(&self, a: &[f64]) -> Vec<f64> {
        (0..self.e)
            .map(|k| {
                let row = &self.w2[k * self.h..(k + 1) * self.h];
                row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>() + self.b2[k]
            })
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Per-class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits(&self.hidden(x)).into_iter().map(logistic).collect())
    }

    /// Loss of one sample and its gradient with respect to every parameter.
    pub fn loss_gradient(
        &self,
        x: &[f64],
        y: &[bool],
        loss: Loss,
        class_weights: Option<&[f64]>,
    ) -> Result<(f64, ModelParams)> {
        self.check_dim(x)?;
        let mut grad = ModelParams::zeros(self.d, self.h, self.e);
        let value = self.accumulate(x, y, loss, class_weights, 1.0, &mut grad);
        Ok((value, grad))
    }

    /// Adds `scale · ∂loss/∂θ` into `grad` and returns the unscaled loss.
    fn accumulate(
        &self,
        x: &[f64],
        y: &[bool],
        loss: Loss,
        class_weights: Option<&[f64]>,
        scale: f64,
        grad: &mut ModelParams,
    ) -> f64 {
        let a = self.hidden(x);
        let z = self.logits(&a);
        let inv_e = 1.0 / self.e as f64;
        let mut total = 0.0;
        let mut dz = vec![0.0; self.e];
        for k in 0..self.e {
            let cw = class_weights.map_or(1.0, |w| w[k]);
            let (l, g) = loss.term_and_grad(logistic(z[k]), y[k]);
            total += cw * l;
            dz[k] = scale * cw * g * inv_e;
        }
        for k in 0..self.e {
            for j in 0..self.h {
                grad.w2[k * self.h + j] += dz[k] * a[j];
            }
            grad.b2[k] += dz[k];
        }
        for j in 0..self.h {
            let da: f64 = (0..self.e).map(|k| self.w2[k * self.h + j] * dz[k]).sum();
            let dpre = da * (1.0 - a[j] * a[j]);
            for i in 0..self.d {
                grad.w1[j * self.d + i] += dpre * x[i];
            }
            grad.b1[j] += dpre;
        }
        total * inv_e
    }

    /// Text checkpoint; parsing it back reproduces every bit.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("covada-model 1\n");
        let _ = writeln!(out, "dims {} {} {}", self.d, self.h, self.e);
        for (name, values) in [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)] {
            out.push_str(name);
            for v in values {
                out.push(' ');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("covada-model 1") {
            return Err(bad("unsupported header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims "))
            .ok_or_else(|| bad("missing dims"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad dims")))
            .collect::<Result<_>>()?;
        let [d, h, e] = dims[..] else {
            return Err(bad("dims needs three values"));
        };
        let mut flat = Vec::new();
        for name in ["w1", "b1", "w2", "b2"] {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut tokens = line.split_whitespace();
            if tokens.next() != Some(name) {
                return Err(bad(&format!("expected `{name}`")));
            }
            for t in tokens {
                flat.push(t.parse::<f64>().map_err(|_| bad("bad number"))?);
            }
        }
        let params = Self::from_flat(d, h, e, &flat)?;
        if !params.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

/// Binary label vector from thresholded probabilities (strict `>`).
pub fn predict(params: &ModelParams, features: &[f64], threshold: f64) -> Result<Vec<bool>> {
    Ok(params
        .forward(features)?
        .into_iter()
        .map(|p| p > threshold)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Ce,
    Gce { q: f64 },
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Gce { q } if !(q > 0.0 && q <= 1.0) => Err(Error::InvalidConfig(format!(
                "GCE exponent q must be in (0, 1], got {q}"
            ))),
            _ => Ok(()),
        }
    }

    /// Per-class term and its derivative with respect to the logit.
    fn term_and_grad(&self, p: f64, y: bool) -> (f64, f64) {
        let clamped = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let m = if y { clamped } else { 1.0 - clamped };
        let sign = if y { 1.0 } else { -1.0 };
        let active = if clamped == p { 1.0 } else { 0.0 };
        match *self {
            Loss::Ce => (-m.ln(), -active * sign * (1.0 - m)),
            Loss::Gce { q } => {
                let mq = m.powf(q);
                ((1.0 - mq) / q, -active * sign * mq * (1.0 - m))
            }
        }
    }

    pub fn term(&self, p: f64, y: bool) -> f64 {
        self.term_and_grad(p, y).0
    }
}

/// Per-class and averaged loss of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub per_class: Vec<f64>,
    pub total: f64,
}

fn loss_value(loss: Loss, p: &[f64], y: &[bool], class_weights: Option<&[f64]>) -> LossValue {
    let per_class: Vec<f64> = p
        .iter()
        .zip(y)
        .enumerate()
        .map(|(k, (&p, &y))| class_weights.map_or(1.0, |w| w[k]) * loss.term(p, y))
        .collect();
    let total = per_class.iter().sum::<f64>() / per_class.len().max(1) as f64;
    LossValue { per_class, total }
}

pub fn ce_loss(p: &[f64], y: &[bool], class_weights: Option<&[f64]>) -> LossValue {
    loss_value(Loss::Ce, p, y, class_weights)
}

pub fn gce_loss(p: &[f64], y: &[bool], q: f64, class_weights: Option<&[f64]>) -> LossValue {
    loss_value(Loss::Gce { q }, p, y, class_weights)
}

/// `N / (|E| · N_pos(e))`, rescaled to mean 1.
pub fn class_balance_weights(train: TrainView<'_>) -> Result<Vec<f64>> {
    let e = train.num_emotions();
    let threshold = 1.0 / e as f64;
    let mut positives = vec![0usize; e];
    for s in train.iter() {
        for (k, on) in binarize(s.soft_labels, threshold).into_iter().enumerate() {
            positives[k] += usize::from(on);
        }
    }
    if let Some(k) = positives.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(train.emotions()[k].clone()));
    }
    let n = train.len() as f64;
    let raw: Vec<f64> = positives
        .iter()
        .map(|&c| n / (e as f64 * c as f64))
        .collect();
    let mean = raw.iter().sum::<f64>() / e as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

fn default_hidden() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Loss,
    #[serde(default)]
    pub class_balance: bool,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_f1: Option<f64>,
    /// Prediction threshold for dev Macro F1; `1/|E|` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_threshold: Option<f64>,
    /// Per-sample loss multipliers aligned with the train view.
    #[serde(skip)]
    pub sample_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::Ce,
            class_balance: false,
            hidden: default_hidden(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            early_stop_f1: None,
            eval_threshold: None,
            sample_weights: None,
        }
    }
}

impl TrainConfig {
    /// Class-balanced GCE with `q = 0.7`, as used for the bias-selection model.
    pub fn bias_selection(early_stop_f1: f64) -> Self {
        Self {
            loss: Loss::Gce { q: 0.7 },
            class_balance: true,
            early_stop_f1: Some(early_stop_f1),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if let Some(t) = self.early_stop_f1 {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("early_stop_f1 must be in (0, 1), got {t}"));
            }
        }
        if let Some(t) = self.eval_threshold {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("eval_threshold must be in (0, 1), got {t}"));
            }
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch_size and hidden must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if let Some(w) = &self.sample_weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("sample weights must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: Option<f64>,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,dev_macro_f1,stopped";

    pub fn stop_epoch(&self) -> Option<usize> {
        self.epochs.iter().find(|r| r.stopped).map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            let f1 = r.dev_macro_f1.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.epoch, fmt_f64(r.train_loss), f1, r.stopped);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ModelParams,
    pub trace: TrainingTrace,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

fn label_matrix(view: TrainView<'_>, threshold: f64) -> Vec<Vec<bool>> {
    view.iter().map(|s| binarize(s.soft_labels, threshold)).collect()
}

/// Binary predictions for every sample of a view.
pub fn predict_all(params: &ModelParams, view: TrainView<'_>, threshold: f64) -> Result<Vec<Vec<bool>>> {
    view.iter().map(|s| predict(params, s.features, threshold)).collect()
}

/// Mini-batch Adam training with optional early stopping on dev Macro F1.
pub fn train(
    train: TrainView<'_>,
    dev: Option<TrainView<'_>>,
    config: &TrainConfig,
    seed: u64,
) -> Result<Trained> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let dev = dev.filter(|d| !d.is_empty());
    if config.early_stop_f1.is_some() && dev.is_none() {
        return Err(Error::InvalidConfig("early stopping needs a non-empty dev set".into()));
    }
    if let Some(w) = &config.sample_weights {
        if w.len() != train.len() {
            return Err(Error::Dimension {
                expected: train.len(),
                actual: w.len(),
            });
        }
    }
    let (d, e) = (train.dim(), train.num_emotions());
    if let Some(dv) = dev {
        if dv.dim() != d || dv.num_emotions() != e {
            return Err(Error::Dimension {
                expected: d,
                actual: dv.dim(),
            });
        }
    }
    let label_threshold = 1.0 / e as f64;
    let eval_threshold = config.eval_threshold.unwrap_or(label_threshold);
    let labels = label_matrix(train, label_threshold);
    let dev_labels = dev.map(|dv| label_matrix(dv, label_threshold));
    let class_weights = if config.class_balance {
        Some(class_balance_weights(train)?)
    } else {
        None
    };

    let mut params = ModelParams::init(d, config.hidden, e, seed::derive(seed, "init"));
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    let mut rng = seed::rng(seed::derive(seed, "shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = TrainingTrace::default();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_weight = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let weight_sum: f64 = batch
                .iter()
                .map(|&i| config.sample_weights.as_ref().map_or(1.0, |w| w[i]))
                .sum();
            if weight_sum == 0.0 {
                continue;
            }
            let mut grad = ModelParams::zeros(d, config.hidden, e);
            let mut batch_loss = 0.0;
            for &i in batch {
                let w = config.sample_weights.as_ref().map_or(1.0, |w| w[i]);
                let l = params.accumulate(
                    train.get(i).features,
                    &labels[i],
                    config.loss,
                    class_weights.as_deref(),
                    w / weight_sum,
                    &mut grad,
                );
                batch_loss += w * l;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += batch_loss;
            epoch_weight += weight_sum;
            adam.step(&mut flat, &grad.flatten(), config.learning_rate);
            params = ModelParams::from_flat(d, config.hidden, e, &flat)?;
        }

        let dev_macro_f1 = match (dev, &dev_labels) {
            (Some(dv), Some(truth)) => {
                Some(macro_f1_labels(truth, &predict_all(&params, dv, eval_threshold)?))
            }
            _ => None,
        };
        let stopped = matches!((config.early_stop_f1, dev_macro_f1), (Some(t), Some(f)) if f > t);
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss: if epoch_weight > 0.0 { epoch_loss / epoch_weight } else { 0.0 },
            dev_macro_f1,
            stopped,
        });
        if stopped {
            break;
        }
    }
    if config.early_stop_f1.is_some() && trace.stop_epoch().is_none() {
        log::warn!(
            "early-stop threshold {:?} never exceeded in {} epochs",
            config.early_stop_f1,
            config.max_epochs
        );
    }
    Ok(Trained { params, trace })
}

/// Per-emotion CE loss of each member, the confidence signal used for ranking.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfidenceTable {
    /// `per_emotion[e][id] = loss`
    pub per_emotion: Vec<BTreeMap<String, f64>>,
}

impl ConfidenceTable {
    pub fn loss(&self, id: &str, emotion: usize) -> Option<f64> {
        self.per_emotion.get(emotion)?.get(id).copied()
    }
}

/// Records the unweighted CE term of class `e` for every member of `D_e`.
pub fn confidence_table(
    params: &ModelParams,
    train: TrainView<'_>,
    membership: &Membership,
) -> Result<ConfidenceTable> {
    let index = train.index_of();
    let mut per_emotion = vec![BTreeMap::new(); membership.per_emotion.len()];
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (e, members) in membership.per_emotion.iter().enumerate() {
        for id in members {
            let i = *index.get(id.as_str()).ok_or_else(|| {
                Error::InvalidDataset(format!("member `{id}` is not in the training view"))
            })?;
            let p = match cache.get(&i) {
                Some(p) => p.clone(),
                None => {
                    let p = params.forward(train.get(i).features)?;
                    cache.insert(i, p.clone());
                    p
                }
            };
            per_emotion[e].insert(id.clone(), Loss::Ce.term(p[e], true));
        }
    }
    Ok(ConfidenceTable { per_emotion })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_one_half() {
        let p = ModelParams::zeros(3, 4, 2);
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let p = ModelParams::zeros(3, 4, 2);
        assert!(matches!(p.forward(&[1.0]), Err(Error::Dimension { expected: 3, actual: 1 })));
    }

    #[test]
    fn forward_matches_hand_multiply() {
        // d=2, h=2, e=1
        let p = ModelParams {
            d: 2,
            h: 2,
            e: 1,
            w1: vec![0.5, -1.0, 2.0, 0.25],
            b1: vec![0.1, -0.2],
            w2: vec![1.5, -0.5],
            b2: vec![0.3],
        };
        let x = [1.0, 2.0];
        let a0 = (0.5 * 1.0 - 1.0 * 2.0 + 0.1f64).tanh();
        let a1 = (2.0 * 1.0 + 0.25 * 2.0 - 0.2f64).tanh();
        let z = 1.5 * a0 - 0.5 * a1 + 0.3;
        let expected = 1.0 / (1.0 + (-z).exp());
        assert!((p.forward(&x).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn ce_at_one_half_is_ln2() {
        let v = ce_loss(&[0.5, 0.5], &[true, false], None);
        for t in v.per_class {
            assert!((t - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn ce_near_perfect_and_symmetric() {
        let v = ce_loss(&[1.0 - PROB_EPS], &[true], None);
        assert!((v.total - 1e-7).abs() < 1e-12);
        let a = ce_loss(&[0.3, 0.8], &[true, false], None);
        let b = ce_loss(&[0.7, 0.2], &[false, true], None);
        for (x, y) in a.per_class.iter().zip(&b.per_class) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn gce_q1_is_one_minus_p() {
        for p in [0.1, 0.4, 0.9] {
            let v = gce_loss(&[p], &[true], 1.0, None);
            assert!((v.total - (1.0 - p)).abs() < 1e-15);
        }
        let v = gce_loss(&[1.0 - PROB_EPS], &[true], 0.7, None);
        assert!(v.total < 1e-6);
    }

    #[test]
    fn class_weights_scale_terms() {
        let v = ce_loss(&[0.5, 0.5], &[true, true], Some(&[2.0, 0.0]));
        assert!((v.per_class[0] - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(v.per_class[1], 0.0);
    }

    #[test]
    fn predict_is_strict() {
        let p = ModelParams::zeros(1, 1, 2);
        assert_eq!(predict(&p, &[0.0], 0.5).unwrap(), vec![false, false]);
        assert_eq!(predict(&p, &[0.0], 0.4).unwrap(), vec![true, true]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = ModelParams::init(5, 7, 3, 42);
        let back = ModelParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(back, p);
        assert!(ModelParams::from_checkpoint("covada-model 2\n").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::bias_selection(0.5);
        assert!(c.validate().is_ok());
        c.early_stop_f1 = Some(1.0);
        assert!(c.validate().is_err());
        c.early_stop_f1 = None;
        c.loss = Loss::Gce { q: 0.0 };
        assert!(c.validate().is_err());
    }
}
