//! Per-emotion membership sets and the loss-ranked guiding/unused/contrary split.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classifier::ConfidenceTable;
use crate::dataset::TrainView;
use crate::error::{Error, Result};
use crate::records;

/// `soft > threshold`, element-wise.
pub fn binarize(soft: &[f64], threshold: f64) -> Vec<bool> {
    soft.iter().map(|&v| v > threshold).collect()
}

/// Member ids of each emotion subset, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Membership {
    pub per_emotion: Vec<Vec<String>>,
}

impl Membership {
    pub fn empty_emotions(&self) -> Vec<usize> {
        (0..self.per_emotion.len())
            .filter(|&e| self.per_emotion[e].is_empty())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.per_emotion.iter().map(Vec::len).sum()
    }
}

/// A sample belongs to `D_e` when its soft label for `e` exceeds `threshold`
/// (default `1/|E|`). Multi-label samples land in several subsets.
pub fn emotion_subsets(view: TrainView<'_>, threshold: Option<f64>) -> Membership {
    let e = view.num_emotions();
    let threshold = threshold.unwrap_or(1.0 / e as f64);
    let mut per_emotion = vec![Vec::new(); e];
    for s in view.iter() {
        for (k, on) in binarize(s.soft_labels, threshold).into_iter().enumerate() {
            if on {
                per_emotion[k].push(s.id.to_string());
            }
        }
    }
    let membership = Membership { per_emotion };
    for k in membership.empty_emotions() {
        log::warn!("emotion subset `{}` is empty", view.emotions()[k]);
    }
    membership
}

/// `contrary:unused:guiding` shares out of ten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartitionRatio {
    pub contrary: u32,
    pub unused: u32,
    pub guiding: u32,
}

impl PartitionRatio {
    pub fn new(contrary: u32, unused: u32, guiding: u32) -> Result<Self> {
        let r = Self {
            contrary,
            unused,
            guiding,
        };
        if contrary + unused + guiding != 10 || guiding < 1 || contrary < 1 {
            return Err(Error::InvalidRatio(r.to_string()));
        }
        Ok(r)
    }
}

impl Default for PartitionRatio {
    fn default() -> Self {
        Self {
            contrary: 5,
            unused: 0,
            guiding: 5,
        }
    }
}

impl fmt::Display for PartitionRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.contrary, self.unused, self.guiding)
    }
}

impl FromStr for PartitionRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u32> = s
            .split(':')
            .map(|p| p.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidRatio(s.to_string()))?;
        match parts[..] {
            [c, u, g] => Self::new(c, u, g),
            _ => Err(Error::InvalidRatio(s.to_string())),
        }
    }
}

impl Serialize for PartitionRatio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PartitionRatio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The three sets of one emotion, each as `(id, loss)` in ascending-loss order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmotionPartition {
    pub emotion: usize,
    pub guiding: Vec<(String, f64)>,
    pub unused: Vec<(String, f64)>,
    pub contrary: Vec<(String, f64)>,
    /// Fewer than two members; excluded from augmentation.
    pub excluded: bool,
}

impl EmotionPartition {
    pub fn len(&self) -> usize {
        self.guiding.len() + self.unused.len() + self.contrary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionResult {
    pub ratio: PartitionRatio,
    pub emotions: Vec<EmotionPartition>,
}

impl PartitionResult {
    /// Audit records: one line per `(emotion, id, set, loss)`.
    pub fn to_records(&self, emotion_names: &[String]) -> String {
        let mut out = String::new();
        for ep in &self.emotions {
            for (set, members) in [
                ("guiding", &ep.guiding),
                ("unused", &ep.unused),
                ("contrary", &ep.contrary),
            ] {
                for (id, loss) in members {
                    out.push('{');
                    records::push_key(&mut out, "emotion", true);
                    records::push_str(&mut out, &emotion_names[ep.emotion]);
                    records::push_key(&mut out, "id", false);
                    records::push_str(&mut out, id);
                    records::push_key(&mut out, "set", false);
                    records::push_str(&mut out, set);
                    records::push_key(&mut out, "loss", false);
                    out.push_str(&records::fmt_f64(*loss));
                    out.push_str("}\n");
                }
            }
        }
        out
    }
}

fn by_loss_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}

/// Ranks every `D_e` by ascending loss (ties by id) and cuts off
/// `⌊|D_e|·guiding/10⌋` lowest as guiding and `⌊|D_e|·contrary/10⌋` highest as
/// contrary; the rest is unused.
pub fn split_by_confidence(
    table: &ConfidenceTable,
    membership: &Membership,
    ratio: PartitionRatio,
) -> Result<PartitionResult> {
    let mut emotions = Vec::with_capacity(membership.per_emotion.len());
    for (e, members) in membership.per_emotion.iter().enumerate() {
        let mut ranked = members
            .iter()
            .map(|id| {
                let loss = table.loss(id, e).ok_or_else(|| Error::MissingLoss {
                    id: id.clone(),
                    emotion: e,
                })?;
                if !loss.is_finite() {
                    return Err(Error::InvalidDataset(format!(
                        "non-finite loss for `{id}` in emotion {e}"
                    )));
                }
                Ok((id.clone(), loss))
            })
            .collect::<Result<Vec<_>>>()?;
        ranked.sort_by(by_loss_then_id);

        let n = ranked.len();
        if n < 2 {
            log::warn!("emotion {e} has {n} member(s); excluded from augmentation");
            emotions.push(EmotionPartition {
                emotion: e,
                unused: ranked,
                excluded: true,
                ..Default::default()
            });
            continue;
        }
        let n_guiding = n * ratio.guiding as usize / 10;
        let n_contrary = n * ratio.contrary as usize / 10;
        let contrary = ranked.split_off(n - n_contrary);
        let unused = ranked.split_off(n_guiding);
        emotions.push(EmotionPartition {
            emotion: e,
            guiding: ranked,
            unused,
            contrary,
            excluded: false,
        });
    }
    Ok(PartitionResult { ratio, emotions })
}
