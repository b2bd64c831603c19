//! Samples, synthetic biased datasets and the line-delimited sample file.
//!
//! Synthetic samples are laid out as three feature blocks:
//!
//! ```text
//! [ emotion block (d_emotion) | speaker block (d_speaker) | noise block (d_noise) ]
//! ```
//!
//! Emotion and group means sit on scaled coordinate axes, so the speaker block
//! carries group identity and nothing about emotion. Skewing the train and dev
//! splits makes the speaker block spuriously predictive of emotion.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::records::{self, Fields};
use crate::seed;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Augmented {
        source: String,
        target: String,
        converter: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub soft_labels: Vec<f64>,
    /// Demographic tag. Only `metrics` and the harness evaluation step read it.
    pub group: Option<String>,
    pub provenance: Provenance,
}

impl Sample {
    /// Index of the largest soft label (lowest index on ties).
    pub fn primary_emotion(&self) -> usize {
        primary_emotion(&self.soft_labels)
    }
}

pub(crate) fn primary_emotion(labels: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in labels.iter().enumerate() {
        if v > labels[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Parameters of the synthetic generator.
///
/// Separations are expressed in units of `noise_sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub emotions: Vec<String>,
    pub groups: Vec<String>,
    pub d_emotion: usize,
    pub d_speaker: usize,
    pub d_noise: usize,
    /// Train samples per emotion after skewing.
    pub n_per_emotion: usize,
    pub n_dev_per_emotion: usize,
    /// Test samples per (emotion, group) cell; the test split is balanced.
    pub n_test_per_group: usize,
    /// Majority:minority count ratio per emotion in train and dev.
    pub skew_ratio: f64,
    pub noise_sigma: f64,
    pub emotion_separation: f64,
    pub group_separation: f64,
    /// Mass moved off the generating emotion and spread over the others.
    pub label_smoothing: f64,
    /// Fraction of train/dev samples whose emotion block is drawn from a
    /// different emotion than their label.
    pub label_noise: f64,
    /// Majority group index per emotion. Empty means contiguous blocks
    /// (first emotions to group 0, next to group 1, ...).
    pub majority: Vec<usize>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            emotions: ["angry", "disgust", "neutral", "fear", "happy", "sad"]
                .map(String::from)
                .to_vec(),
            groups: vec!["male".into(), "female".into()],
            d_emotion: 6,
            d_speaker: 2,
            d_noise: 4,
            n_per_emotion: 252,
            n_dev_per_emotion: 105,
            n_test_per_group: 60,
            skew_ratio: 20.0,
            noise_sigma: 1.0,
            emotion_separation: 3.0,
            group_separation: 3.0,
            label_smoothing: 0.0,
            label_noise: 0.0,
            majority: Vec::new(),
            seed: 0,
        }
    }
}

/// Positions of the three feature blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub d_emotion: usize,
    pub d_speaker: usize,
    pub d_noise: usize,
}

impl FeatureLayout {
    pub fn dim(&self) -> usize {
        self.d_emotion + self.d_speaker + self.d_noise
    }
    pub fn emotion(&self) -> std::ops::Range<usize> {
        0..self.d_emotion
    }
    pub fn speaker(&self) -> std::ops::Range<usize> {
        self.d_emotion..self.d_emotion + self.d_speaker
    }
    pub fn noise(&self) -> std::ops::Range<usize> {
        self.d_emotion + self.d_speaker..self.dim()
    }
}

impl SyntheticSpec {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            d_emotion: self.d_emotion,
            d_speaker: self.d_speaker,
            d_noise: self.d_noise,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn num_emotions(&self) -> usize {
        self.emotions.len()
    }

    pub fn majority_group(&self, emotion: usize) -> usize {
        if self.majority.is_empty() {
            emotion * self.groups.len() / self.emotions.len()
        } else {
            self.majority[emotion]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.emotions.is_empty() {
            return bad("at least one emotion is required".into());
        }
        if self.groups.len() < 2 {
            return bad("at least two groups are required".into());
        }
        if unique(&self.emotions).is_err() || unique(&self.groups).is_err() {
            return bad("emotion and group names must be unique".into());
        }
        if self.d_emotion == 0 || 2 * self.d_emotion < self.emotions.len() {
            return bad(format!(
                "d_emotion = {} cannot place {} distinct emotion means",
                self.d_emotion,
                self.emotions.len()
            ));
        }
        if self.d_speaker == 0 || 2 * self.d_speaker < self.groups.len() {
            return bad(format!(
                "d_speaker = {} cannot place {} distinct group means",
                self.d_speaker,
                self.groups.len()
            ));
        }
        if !(self.skew_ratio >= 1.0 && self.skew_ratio.is_finite()) {
            return bad(format!("skew_ratio must be >= 1, got {}", self.skew_ratio));
        }
        if self.n_per_emotion < self.groups.len() {
            return bad(format!(
                "n_per_emotion = {} is smaller than the number of groups",
                self.n_per_emotion
            ));
        }
        if self.n_test_per_group == 0 {
            return bad("n_test_per_group must be positive".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be positive".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label_noise must be in [0, 1]".into());
        }
        if self.label_noise > 0.0 && self.emotions.len() < 2 {
            return bad("label_noise needs at least two emotions".into());
        }
        if !self.majority.is_empty() {
            if self.majority.len() != self.emotions.len() {
                return bad("majority must list one group per emotion".into());
            }
            if self.majority.iter().any(|&g| g >= self.groups.len()) {
                return bad("majority group index out of range".into());
            }
        }
        Ok(())
    }
}

fn unique(names: &[String]) -> std::result::Result<(), ()> {
    let set: HashSet<&String> = names.iter().collect();
    if set.len() == names.len() {
        Ok(())
    } else {
        Err(())
    }
}

/// Per-group counts for one emotion: the majority group gets `n - (|Z|-1)·m`
/// and every other group gets `m = round(n / (ρ + |Z| - 1))`.
pub fn skew_counts(
    n: usize,
    ratio: f64,
    n_groups: usize,
    majority: usize,
    split: Split,
) -> Result<Vec<usize>> {
    let minority = ((n as f64 / (ratio + (n_groups - 1) as f64)).round() as usize).min(n / n_groups);
    let majority_count = n.checked_sub((n_groups - 1) * minority);
    match majority_count {
        Some(m) if minority >= 1 && m >= minority => {
            let mut counts = vec![minority; n_groups];
            counts[majority] = m;
            Ok(counts)
        }
        _ => Err(Error::ImpossibleSkew {
            split: split.as_str().into(),
            per_emotion: n,
            ratio,
        }),
    }
}

/// Where a dataset's samples came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schema {
    Synthetic(SyntheticSpec),
    External {
        emotions: Vec<String>,
        source: String,
    },
}

impl Schema {
    pub fn emotions(&self) -> &[String] {
        match self {
            Schema::Synthetic(s) => &s.emotions,
            Schema::External { emotions, .. } => emotions,
        }
    }

    pub fn synthetic(&self) -> Option<&SyntheticSpec> {
        match self {
            Schema::Synthetic(s) => Some(s),
            Schema::External { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub schema: Schema,
    pub split: Split,
}

impl Dataset {
    /// Builds a dataset after checking ids, label ranges and dimensions.
    pub fn new(samples: Vec<Sample>, schema: Schema, split: Split) -> Result<Self> {
        let ds = Self {
            samples,
            schema,
            split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n_emotions = self.num_emotions();
        let mut ids = HashSet::with_capacity(self.samples.len());
        let dim = self.samples.first().map(|s| s.features.len());
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate id `{}`", s.id)));
            }
            if s.soft_labels.len() != n_emotions {
                return Err(Error::InvalidDataset(format!(
                    "sample `{}` has {} soft labels, expected {}",
                    s.id,
                    s.soft_labels.len(),
                    n_emotions
                )));
            }
            if s.soft_labels.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidDataset(format!(
                    "sample `{}`: soft_labels out of range",
                    s.id
                )));
            }
            if Some(s.features.len()) != dim || s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "sample `{}` has inconsistent or non-finite features",
                    s.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_emotions(&self) -> usize {
        self.schema.emotions().len()
    }

    pub fn emotions(&self) -> &[String] {
        self.schema.emotions()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    /// Group-blind view handed to training, partitioning and augmentation.
    pub fn view(&self) -> TrainView<'_> {
        TrainView { dataset: self }
    }

    /// Group tags in sample order; the only accessor for demographic data.
    pub fn group_tags(&self) -> Vec<Option<&str>> {
        self.samples.iter().map(|s| s.group.as_deref()).collect()
    }

    /// Counts per (primary emotion, group).
    pub fn group_counts(&self) -> BTreeMap<(usize, String), usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            let g = s.group.clone().unwrap_or_default();
            *counts.entry((s.primary_emotion(), g)).or_insert(0) += 1;
        }
        counts
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_records().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Serializes to the line-delimited format: one header record followed by one
    /// record per sample.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "dataset": { "split": self.split, "schema": self.schema }
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for s in &self.samples {
            write_sample(&mut out, s);
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_records(&text, &path.display().to_string())
    }

    /// Parses the line-delimited format. Without a header record the file is
    /// treated as an external import: the split defaults to train and the
    /// emotion names to `e0..`.
    pub fn from_records(text: &str, origin: &str) -> Result<Self> {
        let record_err = |line: usize, (field, message): (String, String)| Error::Record {
            path: origin.to_string(),
            line,
            field,
            message,
        };
        let mut header: Option<(Split, Schema)> = None;
        let mut samples: Vec<Sample> = Vec::new();
        let mut ids: HashSet<String> = HashSet::new();
        let mut n_labels: Option<usize> = None;
        let mut dim: Option<usize> = None;

        for (idx, raw) in text.split('\n').enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(raw)
                .map_err(|e| record_err(line, ("<record>".into(), e.to_string())))?;
            let fields = Fields::new(&value).map_err(|e| record_err(line, e))?;

            if fields.has("dataset") {
                if line != 1 {
                    return Err(record_err(
                        line,
                        ("dataset".into(), "header record must be the first line".into()),
                    ));
                }
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Header {
                    split: Split,
                    schema: Schema,
                }
                let h: Header = serde_json::from_value(value["dataset"].clone())
                    .map_err(|e| record_err(line, ("dataset".into(), e.to_string())))?;
                header = Some((h.split, h.schema));
                continue;
            }

            for key in fields.keys() {
                if !["id", "features", "soft_labels", "group", "provenance"].contains(&key.as_str()) {
                    return Err(record_err(line, (key.clone(), "unknown field".into())));
                }
            }
            let id = fields.string("id").map_err(|e| record_err(line, e))?;
            if !ids.insert(id.clone()) {
                return Err(record_err(line, ("id".into(), format!("duplicate id `{id}`"))));
            }
            let features = fields.numbers("features").map_err(|e| record_err(line, e))?;
            if features.iter().any(|v| !v.is_finite()) {
                return Err(record_err(line, ("features".into(), "non-finite value".into())));
            }
            match dim {
                Some(d) if d != features.len() => {
                    return Err(record_err(
                        line,
                        (
                            "features".into(),
                            format!("dimension {} differs from {d}", features.len()),
                        ),
                    ))
                }
                _ => dim = Some(features.len()),
            }
            let soft_labels = fields.numbers("soft_labels").map_err(|e| record_err(line, e))?;
            if soft_labels.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(record_err(
                    line,
                    ("soft_labels".into(), "soft_labels out of range".into()),
                ));
            }
            match n_labels {
                Some(n) if n != soft_labels.len() => {
                    return Err(record_err(
                        line,
                        (
                            "soft_labels".into(),
                            format!("length {} differs from {n}", soft_labels.len()),
                        ),
                    ))
                }
                _ => n_labels = Some(soft_labels.len()),
            }
            let group = fields.opt_string("group").map_err(|e| record_err(line, e))?;
            let provenance = match fields.get("provenance") {
                Some(p) => serde_json::from_value(p.clone())
                    .map_err(|e| record_err(line, ("provenance".into(), e.to_string())))?,
                None => Provenance::Original,
            };
            samples.push(Sample {
                id,
                features,
                soft_labels,
                group,
                provenance,
            });
        }

        let (split, schema) = match header {
            Some(h) => h,
            None => (
                Split::Train,
                Schema::External {
                    emotions: (0..n_labels.unwrap_or(0)).map(|i| format!("e{i}")).collect(),
                    source: origin.to_string(),
                },
            ),
        };
        Dataset::new(samples, schema, split)
    }
}

fn write_sample(out: &mut String, s: &Sample) {
    out.push('{');
    records::push_key(out, "id", true);
    records::push_str(out, &s.id);
    records::push_key(out, "features", false);
    records::push_f64_array(out, &s.features);
    records::push_key(out, "soft_labels", false);
    records::push_f64_array(out, &s.soft_labels);
    records::push_key(out, "group", false);
    match &s.group {
        Some(g) => records::push_str(out, g),
        None => out.push_str("null"),
    }
    records::push_key(out, "provenance", false);
    out.push_str(&serde_json::to_string(&s.provenance).expect("provenance serialization"));
    out.push('}');
}

/// Read-only, group-blind access to a dataset.
///
/// There is deliberately no way to reach a sample's group through this type:
///
/// ```compile_fail
/// # use covada::dataset::{generate_synthetic, SyntheticSpec};
/// let (train, _, _) = generate_synthetic(&SyntheticSpec::default()).unwrap();
/// let view = train.view();
/// let _ = view.get(0).group;
/// ```
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    dataset: &'a Dataset,
}

/// One sample as seen by group-blind code.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    pub id: &'a str,
    pub features: &'a [f64],
    pub soft_labels: &'a [f64],
    pub provenance: &'a Provenance,
}

impl<'a> TrainView<'a> {
    pub fn len(&self) -> usize {
        self.dataset.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }
    pub fn num_emotions(&self) -> usize {
        self.dataset.num_emotions()
    }
    pub fn emotions(&self) -> &'a [String] {
        self.dataset.emotions()
    }
    pub fn schema(&self) -> &'a Schema {
        &self.dataset.schema
    }
    pub fn get(&self, i: usize) -> SampleRef<'a> {
        let s = &self.dataset.samples[i];
        SampleRef {
            id: &s.id,
            features: &s.features,
            soft_labels: &s.soft_labels,
            provenance: &s.provenance,
        }
    }
    pub fn iter(&self) -> impl Iterator<Item = SampleRef<'a>> + 'a {
        let ds = self.dataset;
        (0..ds.len()).map(move |i| TrainView { dataset: ds }.get(i))
    }
    /// Index lookup by id.
    pub fn index_of(&self) -> std::collections::HashMap<&'a str, usize> {
        self.dataset
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }
}

fn axis_mean(index: usize, dims: usize, scale: f64, out: &mut [f64]) {
    let axis = index % dims;
    let sign = if (index / dims) % 2 == 0 { 1.0 } else { -1.0 };
    out[axis] += sign * scale;
}

fn draw_sample(
    spec: &SyntheticSpec,
    rng: &mut impl Rng,
    label_emotion: usize,
    feature_emotion: usize,
    group: usize,
) -> Sample {
    let layout = spec.layout();
    let sigma = spec.noise_sigma;
    let mut features: Vec<f64> = (0..layout.dim())
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    axis_mean(
        feature_emotion,
        spec.d_emotion,
        spec.emotion_separation * sigma,
        &mut features[layout.emotion()],
    );
    axis_mean(
        group,
        spec.d_speaker,
        spec.group_separation * sigma,
        &mut features[layout.speaker()],
    );
    let e = spec.num_emotions();
    let eps = spec.label_smoothing;
    let soft_labels = (0..e)
        .map(|k| {
            if k == label_emotion {
                1.0 - eps
            } else if e > 1 {
                eps / (e - 1) as f64
            } else {
                0.0
            }
        })
        .collect();
    Sample {
        id: String::new(),
        features,
        soft_labels,
        group: Some(spec.groups[group].clone()),
        provenance: Provenance::Original,
    }
}

fn generate_split(spec: &SyntheticSpec, split: Split) -> Result<Dataset> {
    let stream = match split {
        Split::Train => 0,
        Split::Dev => 1,
        Split::Test => 2,
    };
    let mut rng = seed::stream_rng(spec.seed, stream);
    let n_groups = spec.groups.len();
    let mut samples = Vec::new();
    for emotion in 0..spec.num_emotions() {
        let counts = match split {
            Split::Train => skew_counts(
                spec.n_per_emotion,
                spec.skew_ratio,
                n_groups,
                spec.majority_group(emotion),
                split,
            )?,
            Split::Dev if spec.n_dev_per_emotion == 0 => vec![0; n_groups],
            Split::Dev => skew_counts(
                spec.n_dev_per_emotion,
                spec.skew_ratio,
                n_groups,
                spec.majority_group(emotion),
                split,
            )?,
            Split::Test => vec![spec.n_test_per_group; n_groups],
        };
        for (group, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let noisy = split != Split::Test && rng.random::<f64>() < spec.label_noise;
                let feature_emotion = if noisy {
                    let other = rng.random_range(0..spec.num_emotions() - 1);
                    if other >= emotion {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    emotion
                };
                samples.push(draw_sample(spec, &mut rng, emotion, feature_emotion, group));
            }
        }
    }
    samples.shuffle(&mut rng);
    for (i, s) in samples.iter_mut().enumerate() {
        s.id = format!("{}-{i:05}", split.as_str());
    }
    Dataset::new(samples, Schema::Synthetic(spec.clone()), split)
}

/// Generates skewed train/dev splits and a group-balanced test split.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    Ok((
        generate_split(spec, Split::Train)?,
        generate_split(spec, Split::Dev)?,
        generate_split(spec, Split::Test)?,
    ))
}

/// Result of [`inject_skew`].
#[derive(Debug, Clone)]
pub struct SkewOutcome {
    pub dataset: Dataset,
    /// Emotions left untouched because only one group was present.
    pub skipped: Vec<usize>,
}

/// Subsamples every non-majority group of each emotion down to
/// `max(1, ⌊majority / ρ⌋)` samples. Emotions are keyed by primary emotion.
pub fn inject_skew(
    dataset: &Dataset,
    ratio: f64,
    majority: &[String],
    seed: u64,
) -> Result<SkewOutcome> {
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(Error::InvalidSpec(format!("skew ratio must be >= 1, got {ratio}")));
    }
    let n_emotions = dataset.num_emotions();
    if majority.len() != n_emotions {
        return Err(Error::InvalidSpec(format!(
            "majority assignment lists {} groups for {n_emotions} emotions",
            majority.len()
        )));
    }
    if dataset.samples.iter().any(|s| s.group.is_none()) {
        return Err(Error::InvalidDataset("inject_skew requires group tags on every sample".into()));
    }

    let mut rng = seed::rng(seed::derive(seed, "inject_skew"));
    let mut keep = vec![true; dataset.len()];
    let mut skipped = Vec::new();
    for (emotion, majority_group) in majority.iter().enumerate() {
        let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in dataset.samples.iter().enumerate() {
            if s.primary_emotion() == emotion {
                by_group.entry(s.group.as_deref().unwrap()).or_default().push(i);
            }
        }
        if by_group.len() < 2 {
            log::warn!(
                "emotion {} has a single group present; left unchanged",
                dataset.emotions()[emotion]
            );
            skipped.push(emotion);
            continue;
        }
        let majority_count = by_group.get(majority_group.as_str()).map_or(0, Vec::len);
        let target = ((majority_count as f64 / ratio).floor() as usize).max(1);
        for (group, mut members) in by_group {
            if group == majority_group || members.len() <= target {
                continue;
            }
            members.shuffle(&mut rng);
            for &i in &members[target..] {
                keep[i] = false;
            }
        }
    }
    let samples = dataset
        .samples
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| s.clone())
        .collect();
    Ok(SkewOutcome {
        dataset: Dataset::new(samples, dataset.schema.clone(), dataset.split)?,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(ds: &Dataset, emotion: usize, group: &str) -> usize {
        ds.group_counts()
            .get(&(emotion, group.to_string()))
            .copied()
            .unwrap_or(0)
    }

    #[test]
    fn angry_row_matches_skewed_table() {
        let spec = SyntheticSpec::default();
        let (train, dev, test) = generate_synthetic(&spec).unwrap();
        assert_eq!(count(&train, 0, "male"), 240);
        assert_eq!(count(&train, 0, "female"), 12);
        // emotions 3..6 are female-majority
        assert_eq!(count(&train, 4, "female"), 240);
        assert_eq!(count(&dev, 0, "male"), 100);
        assert_eq!(count(&dev, 0, "female"), 5);
        for e in 0..6 {
            assert_eq!(count(&test, e, "male"), count(&test, e, "female"));
        }
    }

    #[test]
    fn unit_ratio_is_balanced() {
        let spec = SyntheticSpec {
            skew_ratio: 1.0,
            ..Default::default()
        };
        let (train, _, _) = generate_synthetic(&spec).unwrap();
        for e in 0..6 {
            assert_eq!(count(&train, e, "male"), 126);
            assert_eq!(count(&train, e, "female"), 126);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            seed: 11,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.0.to_records(), b.0.to_records());
        assert_eq!(a.2.to_records(), b.2.to_records());
    }

    #[test]
    fn impossible_skew_is_rejected() {
        let spec = SyntheticSpec {
            n_per_emotion: 10,
            ..Default::default()
        };
        let err = generate_synthetic(&spec).unwrap_err();
        assert!(matches!(err, Error::ImpossibleSkew { .. }), "{err}");
    }

    #[test]
    fn blocks_carry_their_means() {
        let spec = SyntheticSpec {
            noise_sigma: 1e-9,
            ..Default::default()
        };
        let (train, _, _) = generate_synthetic(&spec).unwrap();
        let layout = spec.layout();
        for s in &train.samples {
            let e = s.primary_emotion();
            let g = spec.groups.iter().position(|g| Some(g) == s.group.as_ref()).unwrap();
            let emo = &s.features[layout.emotion()];
            let spk = &s.features[layout.speaker()];
            assert!((emo[e] - 3e-9).abs() < 1e-8);
            assert!((spk[g] - 3e-9).abs() < 1e-8);
        }
    }

    fn tagged(n_major: usize, n_minor: usize) -> Dataset {
        let mut spec = SyntheticSpec {
            emotions: vec!["neutral".into()],
            skew_ratio: 1.0,
            n_per_emotion: n_major + n_minor,
            ..Default::default()
        };
        spec.validate().unwrap();
        let mut rng = seed::rng(1);
        let mut samples = Vec::new();
        for i in 0..n_major + n_minor {
            let g = usize::from(i >= n_major);
            let mut s = draw_sample(&spec, &mut rng, 0, 0, g);
            s.id = format!("s{i}");
            samples.push(s);
        }
        spec.majority = vec![0];
        Dataset::new(samples, Schema::Synthetic(spec), Split::Train).unwrap()
    }

    #[test]
    fn inject_skew_neutral_row() {
        let ds = tagged(1080, 1080);
        let out = inject_skew(&ds, 20.0, &["male".into()], 3).unwrap();
        assert_eq!(count(&out.dataset, 0, "male"), 1080);
        assert_eq!(count(&out.dataset, 0, "female"), 54);
    }

    #[test]
    fn inject_skew_floor_and_identity() {
        let ds = tagged(100, 100);
        let out = inject_skew(&ds, 3.0, &["male".into()], 3).unwrap();
        assert_eq!(count(&out.dataset, 0, "female"), 33);
        let same = inject_skew(&ds, 1.0, &["male".into()], 3).unwrap();
        assert_eq!(same.dataset, ds);
    }

    #[test]
    fn inject_skew_single_group_is_skipped() {
        let ds = tagged(50, 0);
        let out = inject_skew(&ds, 5.0, &["male".into()], 3).unwrap();
        assert_eq!(out.skipped, vec![0]);
        assert_eq!(out.dataset.len(), 50);
    }

    #[test]
    fn round_trip_is_exact() {
        let (train, _, _) = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let back = Dataset::from_records(&train.to_records(), "mem").unwrap();
        assert_eq!(back, train);
    }

    #[test]
    fn out_of_range_label_names_line_and_field() {
        let text = "{\"id\":\"a\",\"features\":[1.0],\"soft_labels\":[0.5,0.2],\"group\":null}\n\
                    {\"id\":\"b\",\"features\":[1.0],\"soft_labels\":[1.3,0.2],\"group\":null}\n";
        let err = Dataset::from_records(text, "f.jsonl").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("f.jsonl:2"), "{msg}");
        assert!(msg.contains("soft_labels out of range"), "{msg}");
    }

    #[test]
    fn import_without_group_column() {
        let text = "{\"id\":\"a\",\"features\":[1.0,2.0],\"soft_labels\":[1.0,0.0]}\n";
        let ds = Dataset::from_records(text, "ext").unwrap();
        assert_eq!(ds.samples[0].group, None);
        assert!(matches!(ds.schema, Schema::External { .. }));
        assert_eq!(ds.emotions(), ["e0", "e1"]);
    }

    #[test]
    fn label_smoothing_spreads_mass() {
        let spec = SyntheticSpec {
            label_smoothing: 0.25,
            ..Default::default()
        };
        let (train, _, _) = generate_synthetic(&spec).unwrap();
        let s = &train.samples[0];
        let e = s.primary_emotion();
        assert_eq!(s.soft_labels[e], 0.75);
        assert!((s.soft_labels.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
