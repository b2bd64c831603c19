//! Pair sampling, converters and augmented-set assembly.
//!
//! A converter produces a feature vector that keeps the source's emotional
//! content and takes the target's speaker attributes. Converted samples inherit
//! the source's soft labels verbatim.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{Dataset, FeatureLayout, Provenance, Sample, SampleRef, SyntheticSpec, TrainView};
use crate::error::{Error, Result};
use crate::partition::{Membership, PartitionResult};
use crate::records::{self, Fields};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionJob {
    pub job_id: String,
    pub emotion: usize,
    /// Drawn from the guiding set; provides content and labels.
    pub source_id: String,
    /// Drawn from the contrary set; provides speaker attributes.
    pub target_id: String,
}

fn job_id(index: usize) -> String {
    format!("{index:06}")
}

/// `|D_e|` jobs per emotion, source uniform over `G_e` and target uniform over
/// `C_e`, drawn independently with replacement.
pub fn sample_pairs(partition: &PartitionResult, seed: u64) -> Vec<ConversionJob> {
    let mut rng = seed::rng(seed::derive(seed, "pairs"));
    let mut jobs = Vec::new();
    for ep in &partition.emotions {
        if ep.excluded || ep.guiding.is_empty() || ep.contrary.is_empty() {
            log::warn!("emotion {} skipped: empty guiding or contrary set", ep.emotion);
            continue;
        }
        for _ in 0..ep.len() {
            let s = &ep.guiding[rng.random_range(0..ep.guiding.len())].0;
            let t = &ep.contrary[rng.random_range(0..ep.contrary.len())].0;
            jobs.push(ConversionJob {
                job_id: job_id(jobs.len()),
                emotion: ep.emotion,
                source_id: s.clone(),
                target_id: t.clone(),
            });
        }
    }
    jobs
}

/// `|D_e|` jobs per emotion with both partners drawn uniformly from `D_e`,
/// ignoring confidence; the two partners of a pair are always distinct.
pub fn sample_random_pairs(membership: &Membership, seed: u64) -> Vec<ConversionJob> {
    let mut rng = seed::rng(seed::derive(seed, "random-pairs"));
    let mut jobs = Vec::new();
    for (e, members) in membership.per_emotion.iter().enumerate() {
        let n = members.len();
        if n < 2 {
            log::warn!("emotion {e} skipped: fewer than two members");
            continue;
        }
        for _ in 0..n {
            let s = rng.random_range(0..n);
            let mut t = rng.random_range(0..n - 1);
            if t >= s {
                t += 1;
            }
            jobs.push(ConversionJob {
                job_id: job_id(jobs.len()),
                emotion: e,
                source_id: members[s].clone(),
                target_id: members[t].clone(),
            });
        }
    }
    jobs
}

/// Counts reported alongside each run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairStats {
    pub jobs: usize,
    pub jobs_per_emotion: Vec<usize>,
    /// Jobs repeating an earlier (emotion, source, target) triple.
    pub duplicate_pairs: usize,
    /// Samples that appear as a partner in more than one emotion.
    pub cross_emotion_partners: usize,
}

pub fn pair_stats(jobs: &[ConversionJob], n_emotions: usize) -> PairStats {
    let mut per = vec![0; n_emotions];
    let mut seen = BTreeSet::new();
    let mut duplicates = 0;
    let mut partner_emotions: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for j in jobs {
        per[j.emotion] += 1;
        if !seen.insert((j.emotion, &j.source_id, &j.target_id)) {
            duplicates += 1;
        }
        for id in [&j.source_id, &j.target_id] {
            partner_emotions.entry(id).or_default().insert(j.emotion);
        }
    }
    PairStats {
        jobs: jobs.len(),
        jobs_per_emotion: per,
        duplicate_pairs: duplicates,
        cross_emotion_partners: partner_emotions.values().filter(|s| s.len() > 1).count(),
    }
}

/// Source content + target speaker attributes.
pub trait Converter: Sync {
    /// Identity recorded in the provenance of every converted sample.
    fn name(&self) -> String;

    /// Must not read labels from `target`; deterministic per `(source, target, seed)`.
    fn convert(&self, source: SampleRef<'_>, target: SampleRef<'_>, seed: u64) -> Result<Vec<f64>>;
}

fn check_schema(layout: FeatureLayout, s: &[f64]) -> Result<()> {
    if s.len() != layout.dim() {
        return Err(Error::Conversion(format!(
            "schema mismatch: sample has {} features, layout expects {}",
            s.len(),
            layout.dim()
        )));
    }
    Ok(())
}

fn fresh_noise(layout: FeatureLayout, sigma: f64, rng: &mut impl Rng, out: &mut [f64]) {
    for v in &mut out[layout.noise()] {
        *v = sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

/// `[source emotion block ‖ target speaker block ‖ fresh noise]`.
pub fn synthetic_swap_convert(
    source: &[f64],
    target: &[f64],
    spec: &SyntheticSpec,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let layout = spec.layout();
    check_schema(layout, source)?;
    check_schema(layout, target)?;
    let mut out = vec![0.0; layout.dim()];
    out[layout.emotion()].copy_from_slice(&source[layout.emotion()]);
    out[layout.speaker()].copy_from_slice(&target[layout.speaker()]);
    fresh_noise(layout, spec.noise_sigma, rng, &mut out);
    Ok(out)
}

/// Imperfect converter: the emotion block leaks `leak` of the target's content
/// and every dimension gets Gaussian jitter of scale `sigma`.
pub fn noisy_swap_convert(
    source: &[f64],
    target: &[f64],
    spec: &SyntheticSpec,
    leak: f64,
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&leak) || !(sigma >= 0.0) {
        return Err(Error::Conversion(format!(
            "noisy swap needs leak in [0, 1] and sigma >= 0, got {leak}, {sigma}"
        )));
    }
    let mut out = synthetic_swap_convert(source, target, spec, rng)?;
    let layout = spec.layout();
    for i in layout.emotion() {
        out[i] = (1.0 - leak) * source[i] + leak * target[i];
    }
    if sigma > 0.0 {
        for v in &mut out {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SyntheticSwap {
    pub spec: SyntheticSpec,
}

impl Converter for SyntheticSwap {
    fn name(&self) -> String {
        "synthetic_swap".into()
    }

    fn convert(&self, source: SampleRef<'_>, target: SampleRef<'_>, seed: u64) -> Result<Vec<f64>> {
        synthetic_swap_convert(source.features, target.features, &self.spec, &mut seed::rng(seed))
    }
}

#[derive(Debug, Clone)]
pub struct NoisySwap {
    pub spec: SyntheticSpec,
    pub leak: f64,
    pub sigma: f64,
}

impl Converter for NoisySwap {
    fn name(&self) -> String {
        format!("noisy_swap({},{})", self.leak, self.sigma)
    }

    fn convert(&self, source: SampleRef<'_>, target: SampleRef<'_>, seed: u64) -> Result<Vec<f64>> {
        noisy_swap_convert(
            source.features,
            target.features,
            &self.spec,
            self.leak,
            self.sigma,
            &mut seed::rng(seed),
        )
    }
}

/// Returns the source features unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct Echo;

impl Converter for Echo {
    fn name(&self) -> String {
        "echo".into()
    }

    fn convert(&self, source: SampleRef<'_>, _target: SampleRef<'_>, _seed: u64) -> Result<Vec<f64>> {
        Ok(source.features.to_vec())
    }
}

/// Converted features per job; `None` for jobs dropped under partial mode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvertedTable {
    pub converter: String,
    pub features: Vec<Option<Vec<f64>>>,
    pub errors: Vec<String>,
}

fn lookup<'a>(
    view: TrainView<'a>,
    index: &HashMap<&'a str, usize>,
    id: &str,
) -> Result<SampleRef<'a>> {
    index
        .get(id)
        .map(|&i| view.get(i))
        .ok_or_else(|| Error::Conversion(format!("job references unknown sample `{id}`")))
}

/// Runs an in-process converter over all jobs. Jobs run in parallel; each job
/// draws from its own stream so results do not depend on scheduling.
pub fn run_converter(
    jobs: &[ConversionJob],
    view: TrainView<'_>,
    converter: &dyn Converter,
    seed: u64,
) -> Result<ConvertedTable> {
    let index = view.index_of();
    let base = seed::derive(seed, "convert");
    let features = jobs
        .par_iter()
        .enumerate()
        .map(|(k, job)| {
            let s = lookup(view, &index, &job.source_id)?;
            let t = lookup(view, &index, &job.target_id)?;
            converter
                .convert(s, t, seed::mix(base ^ k as u64))
                .map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvertedTable {
        converter: converter.name(),
        features,
        errors: Vec::new(),
    })
}

/// Out-of-process converter reached through the manifest exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    /// Backend program and leading arguments; `--manifest` and `--out` are appended.
    pub command: Vec<String>,
    /// Directory for `jobs.manifest` and `results.manifest`.
    pub work_dir: PathBuf,
    /// Keep successful jobs when some fail instead of aborting.
    pub allow_partial: bool,
}

pub const JOBS_MANIFEST: &str = "jobs.manifest";
pub const RESULTS_MANIFEST: &str = "results.manifest";

/// One `jobs.manifest` line per job with inline source and target features.
pub fn write_jobs_manifest(
    jobs: &[ConversionJob],
    view: TrainView<'_>,
) -> Result<String> {
    let index = view.index_of();
    let mut out = String::new();
    for job in jobs {
        let s = lookup(view, &index, &job.source_id)?;
        let t = lookup(view, &index, &job.target_id)?;
        out.push('{');
        records::push_key(&mut out, "job_id", true);
        records::push_str(&mut out, &job.job_id);
        records::push_key(&mut out, "emotion", false);
        records::push_str(&mut out, &view.emotions()[job.emotion]);
        records::push_key(&mut out, "source", false);
        records::push_f64_array(&mut out, s.features);
        records::push_key(&mut out, "target", false);
        records::push_f64_array(&mut out, t.features);
        out.push_str("}\n");
    }
    Ok(out)
}

/// A job as read back from `jobs.manifest`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestJob {
    pub job_id: String,
    pub emotion: String,
    pub source: ManifestInput,
    pub target: ManifestInput,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ManifestInput {
    Features(Vec<f64>),
    Path(String),
}

fn manifest_input(v: Option<&Value>, field: &str) -> std::result::Result<ManifestInput, (String, String)> {
    match v {
        Some(Value::String(p)) => Ok(ManifestInput::Path(p.clone())),
        Some(v @ Value::Array(_)) => records::numbers(v)
            .map(ManifestInput::Features)
            .map_err(|m| (field.to_string(), m)),
        Some(_) => Err((field.into(), "expected a feature array or a path".into())),
        None => Err((field.into(), "missing".into())),
    }
}

pub fn parse_jobs_manifest(text: &str) -> Result<Vec<ManifestJob>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |(field, message): (String, String)| Error::Record {
            path: JOBS_MANIFEST.into(),
            line: idx + 1,
            field,
            message,
        };
        let value: Value =
            serde_json::from_str(line).map_err(|e| err(("<record>".into(), e.to_string())))?;
        let f = Fields::new(&value).map_err(err)?;
        out.push(ManifestJob {
            job_id: f.string("job_id").map_err(err)?,
            emotion: f.string("emotion").map_err(err)?,
            source: manifest_input(f.get("source"), "source").map_err(err)?,
            target: manifest_input(f.get("target"), "target").map_err(err)?,
        });
    }
    Ok(out)
}

/// One line of `results.manifest`.
#[derive(Debug, Clone, PartialEq)]
pub enum ResultRecord {
    Features(Vec<f64>),
    AudioPath(String),
    Error(String),
}

pub fn write_results_manifest(results: &[(String, ResultRecord)]) -> String {
    let mut out = String::new();
    for (id, r) in results {
        out.push('{');
        records::push_key(&mut out, "job_id", true);
        records::push_str(&mut out, id);
        match r {
            ResultRecord::Features(f) => {
                records::push_key(&mut out, "features", false);
                records::push_f64_array(&mut out, f);
            }
            ResultRecord::AudioPath(p) => {
                records::push_key(&mut out, "audio_path", false);
                records::push_str(&mut out, p);
            }
            ResultRecord::Error(m) => {
                records::push_key(&mut out, "error", false);
                records::push_str(&mut out, m);
            }
        }
        out.push_str("}\n");
    }
    out
}

pub fn parse_results_manifest(text: &str) -> Result<Vec<(String, ResultRecord)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |(field, message): (String, String)| Error::Record {
            path: RESULTS_MANIFEST.into(),
            line: idx + 1,
            field,
            message,
        };
        let value: Value =
            serde_json::from_str(line).map_err(|e| err(("<record>".into(), e.to_string())))?;
        let f = Fields::new(&value).map_err(err)?;
        let id = f.string("job_id").map_err(err)?;
        let record = if f.get("features").is_some() {
            ResultRecord::Features(f.numbers("features").map_err(err)?)
        } else if f.get("audio_path").is_some() {
            ResultRecord::AudioPath(f.string("audio_path").map_err(err)?)
        } else if f.get("error").is_some() {
            ResultRecord::Error(f.string("error").map_err(err)?)
        } else {
            return Err(err(("features".into(), "missing features, audio_path or error".into())));
        };
        out.push((id, record));
    }
    Ok(out)
}

/// Checks a results file against the submitted jobs: every job answered
/// exactly once with a feature vector of dimension `dim`.
pub fn validate_results(
    jobs: &[ConversionJob],
    results: Vec<(String, ResultRecord)>,
    dim: usize,
) -> (Vec<Option<Vec<f64>>>, Vec<String>) {
    let position: HashMap<&str, usize> = jobs
        .iter()
        .enumerate()
        .map(|(i, j)| (j.job_id.as_str(), i))
        .collect();
    let mut features: Vec<Option<Vec<f64>>> = vec![None; jobs.len()];
    let mut answered = vec![false; jobs.len()];
    let mut errors = Vec::new();
    for (id, record) in results {
        let Some(&k) = position.get(id.as_str()) else {
            errors.push(format!("unknown job id {id}"));
            continue;
        };
        if answered[k] {
            errors.push(format!("job {id} answered more than once"));
            features[k] = None;
            continue;
        }
        answered[k] = true;
        match record {
            ResultRecord::Features(f) if f.len() != dim => errors.push(format!(
                "job {id}: dimension mismatch (expected {dim}, got {})",
                f.len()
            )),
            ResultRecord::Features(f) if f.iter().any(|v| !v.is_finite()) => {
                errors.push(format!("job {id}: non-finite features"))
            }
            ResultRecord::Features(f) => features[k] = Some(f),
            ResultRecord::AudioPath(p) => errors.push(format!(
                "job {id}: audio result `{p}` cannot be used by the feature pipeline"
            )),
            ResultRecord::Error(m) => errors.push(format!("job {id}: backend error: {m}")),
        }
    }
    for (k, done) in answered.iter().enumerate() {
        if !done {
            errors.push(format!("missing result for job {}", jobs[k].job_id));
        }
    }
    (features, errors)
}

/// Writes `jobs.manifest`, runs `<backend> --manifest jobs.manifest --out
/// results.manifest` and validates the results.
pub fn external_convert(
    jobs: &[ConversionJob],
    view: TrainView<'_>,
    config: &ExternalConfig,
) -> Result<ConvertedTable> {
    let Some((program, args)) = config.command.split_first() else {
        return Err(Error::Conversion("external converter command is empty".into()));
    };
    std::fs::create_dir_all(&config.work_dir).map_err(|e| Error::io(&config.work_dir, e))?;
    let manifest = config.work_dir.join(JOBS_MANIFEST);
    let results = config.work_dir.join(RESULTS_MANIFEST);
    std::fs::write(&manifest, write_jobs_manifest(jobs, view)?).map_err(|e| Error::io(&manifest, e))?;
    if results.exists() {
        std::fs::remove_file(&results).map_err(|e| Error::io(&results, e))?;
    }

    let output = Command::new(program)
        .args(args)
        .arg("--manifest")
        .arg(&manifest)
        .arg("--out")
        .arg(&results)
        .output()
        .map_err(|e| Error::Conversion(format!("could not start `{program}`: {e}")))?;

    let mut errors = Vec::new();
    if !output.status.success() {
        let mut msg = format!("backend exited with {}", output.status);
        let stderr = String::from_utf8_lossy(&output.stderr);
        if !stderr.trim().is_empty() {
            let _ = write!(msg, ": {}", stderr.trim());
        }
        errors.push(msg);
    }
    let parsed = match std::fs::read_to_string(&results) {
        Ok(text) => parse_results_manifest(&text)?,
        Err(e) => {
            errors.push(format!("could not read {}: {e}", results.display()));
            Vec::new()
        }
    };
    let (features, job_errors) = validate_results(jobs, parsed, view.dim());
    errors.extend(job_errors);
    if !errors.is_empty() && !config.allow_partial {
        return Err(Error::ConverterJobs(errors));
    }
    for e in &errors {
        log::warn!("external converter: {e}");
    }
    Ok(ConvertedTable {
        converter: format!("external({})", config.command.join(" ")),
        features,
        errors,
    })
}

/// Appends one converted sample per job to the originals. Converted samples
/// copy their source's soft labels, carry no group and record both parents.
pub fn build_augmented_set(
    train: &Dataset,
    jobs: &[ConversionJob],
    converted: &ConvertedTable,
) -> Result<Dataset> {
    if converted.features.len() != jobs.len() {
        return Err(Error::Dimension {
            expected: jobs.len(),
            actual: converted.features.len(),
        });
    }
    let view = train.view();
    let index = view.index_of();
    let mut samples = train.samples.clone();
    for (job, features) in jobs.iter().zip(&converted.features) {
        let Some(features) = features else { continue };
        let source = lookup(view, &index, &job.source_id)?;
        samples.push(Sample {
            id: format!("aug-{}", job.job_id),
            features: features.clone(),
            soft_labels: source.soft_labels.to_vec(),
            group: None,
            provenance: Provenance::Augmented {
                source: job.source_id.clone(),
                target: job.target_id.clone(),
                converter: converted.converter.clone(),
            },
        });
    }
    Dataset::new(samples, train.schema.clone(), train.split)
}
