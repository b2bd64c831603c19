//! End-to-end experiment runner: erm, bs_only, vc_only and covada modes,
//! ablation grids and the CSV tables they produce.
//!
//! Every run is a pure function of `(config, seed)`. Wall-clock timings are
//! kept out of the result tables and written to `timings.csv` instead.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::augment::{self, ConversionJob, ConvertedTable, Converter, ExternalConfig, NoisySwap, PairStats, SyntheticSwap};
use crate::classifier::{self, TrainConfig, TrainingTrace};
use crate::config::{ConverterSpec, DatasetSource, ExperimentConfig, Mode};
use crate::dataset::{generate_synthetic, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalBatch, FairnessReport, GapOptions};
use crate::partition::{self, binarize, PartitionRatio, PartitionResult};
use crate::records::fmt_f64;
use crate::seed;

/// Which pipeline stages a run touched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageCounters {
    pub bias_trainings: usize,
    pub partitions: usize,
    pub pair_samplings: usize,
    pub conversions: usize,
    pub final_trainings: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentCounts {
    pub n_original: usize,
    pub n_augmented: usize,
    pub pairs: PairStats,
    pub bias_stop_epoch: Option<usize>,
    pub converter_errors: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub bias_ms: f64,
    pub augment_ms: f64,
    pub final_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub mode: Mode,
    pub report: FairnessReport,
    pub counts: AugmentCounts,
    pub counters: StageCounters,
    pub timings: Timings,
    pub bias_trace: Option<TrainingTrace>,
    pub final_trace: TrainingTrace,
    pub partition: Option<PartitionResult>,
    pub emotions: Vec<String>,
}

struct Splits {
    train: Dataset,
    dev: Option<Dataset>,
    test: Dataset,
}

fn stage<T>(name: &'static str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        seed,
        source: Box::new(e),
    })
}

fn load_splits(config: &ExperimentConfig, run_seed: u64) -> Result<Splits> {
    match &config.dataset {
        DatasetSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = seed::derive(spec.seed, &format!("dataset-{run_seed}"));
            let (train, dev, test) = generate_synthetic(&spec)?;
            Ok(Splits {
                train,
                dev: (!dev.is_empty()).then_some(dev),
                test,
            })
        }
        DatasetSource::Import { train, dev, test } => Ok(Splits {
            train: Dataset::load(train)?,
            dev: dev.as_ref().map(Dataset::load).transpose()?,
            test: Dataset::load(test)?,
        }),
    }
}

/// Binarized truth and thresholded predictions of `params` on the test split.
pub fn evaluate_model(
    params: &classifier::ModelParams,
    test: &Dataset,
    threshold: Option<f64>,
    opts: GapOptions,
) -> Result<FairnessReport> {
    let e = test.num_emotions();
    let label_threshold = 1.0 / e as f64;
    let threshold = threshold.unwrap_or(label_threshold);
    let groups = test
        .group_tags()
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            g.map(str::to_string).ok_or_else(|| {
                Error::InvalidBatch(format!(
                    "test sample `{}` has no group tag; fairness evaluation refused",
                    test.samples[i].id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = test
        .samples
        .iter()
        .map(|s| binarize(&s.soft_labels, label_threshold))
        .collect();
    let pred = classifier::predict_all(params, test.view(), threshold)?;
    let batch = EvalBatch::new(test.emotions().to_vec(), truth, pred, groups)?;
    metrics::evaluate(&batch, opts)
}

fn make_converter(config: &ExperimentConfig, train: &Dataset) -> Result<Option<Box<dyn Converter>>> {
    let spec = || {
        train
            .schema
            .synthetic()
            .cloned()
            .ok_or_else(|| Error::Config("synthetic converters need a synthetic dataset".into()))
    };
    Ok(match config.converter.as_ref() {
        Some(ConverterSpec::SyntheticSwap) => Some(Box::new(SyntheticSwap { spec: spec()? })),
        Some(ConverterSpec::NoisySwap { leak, sigma }) => Some(Box::new(NoisySwap {
            spec: spec()?,
            leak: *leak,
            sigma: *sigma,
        })),
        _ => None,
    })
}

fn convert(
    config: &ExperimentConfig,
    jobs: &[ConversionJob],
    train: &Dataset,
    run_seed: u64,
    work_dir: &Path,
) -> Result<ConvertedTable> {
    if let Some(ConverterSpec::External {
        command,
        allow_partial,
    }) = &config.converter
    {
        let ext = ExternalConfig {
            command: command.clone(),
            work_dir: work_dir.to_path_buf(),
            allow_partial: *allow_partial,
        };
        return augment::external_convert(jobs, train.view(), &ext);
    }
    let converter = make_converter(config, train)?
        .ok_or_else(|| Error::Config("no converter configured".into()))?;
    augment::run_converter(jobs, train.view(), converter.as_ref(), run_seed)
}

fn work_dir(config: &ExperimentConfig, run_id: &str) -> PathBuf {
    match &config.out_dir {
        Some(d) => d.join("work").join(run_id),
        None => std::env::temp_dir().join(format!("covada-{}-{run_id}", config.hash())),
    }
}

/// Runs one seed of the configured mode.
pub fn run_seed(config: &ExperimentConfig, run_seed: u64) -> Result<RunRecord> {
    let start = Instant::now();
    let mode = config.mode;
    let run_id = format!("{mode}-s{run_seed}");
    let mut counters = StageCounters::default();
    let mut counts = AugmentCounts::default();
    let mut timings = Timings::default();

    let splits = stage("data", run_seed, load_splits(config, run_seed))?;
    let Splits { train, dev, test } = splits;
    let dev_view = dev.as_ref().map(Dataset::view);
    counts.n_original = train.len();

    let mut bias_trace = None;
    let mut partition_result = None;
    let mut sample_weights = None;
    let mut final_train = train.clone();

    if mode.uses_bias_selection() {
        let t0 = Instant::now();
        let bias_config = config.bias_model.as_ref().expect("validated");
        counters.bias_trainings += 1;
        let bias = stage(
            "bias_model",
            run_seed,
            classifier::train(train.view(), dev_view, bias_config, seed::derive(run_seed, "bias")),
        )?;
        counts.bias_stop_epoch = bias.trace.stop_epoch();
        let membership = partition::emotion_subsets(train.view(), None);
        let table = stage(
            "confidence",
            run_seed,
            classifier::confidence_table(&bias.params, train.view(), &membership),
        )?;
        counters.partitions += 1;
        let parts = stage(
            "partition",
            run_seed,
            partition::split_by_confidence(&table, &membership, config.ratio),
        )?;
        bias_trace = Some(bias.trace);
        timings.bias_ms = t0.elapsed().as_secs_f64() * 1e3;

        if mode == Mode::BsOnly {
            let contrary: HashSet<&str> = parts
                .emotions
                .iter()
                .flat_map(|ep| ep.contrary.iter().map(|(id, _)| id.as_str()))
                .collect();
            sample_weights = Some(
                train
                    .samples
                    .iter()
                    .map(|s| if contrary.contains(s.id.as_str()) { config.bs_weight } else { 1.0 })
                    .collect::<Vec<f64>>(),
            );
        }
        partition_result = Some(parts);
    }

    if mode.uses_conversion() {
        let t0 = Instant::now();
        counters.pair_samplings += 1;
        let pair_seed = seed::derive(run_seed, "pairs");
        let jobs = match &partition_result {
            Some(parts) => augment::sample_pairs(parts, pair_seed),
            None => {
                let membership = partition::emotion_subsets(train.view(), None);
                augment::sample_random_pairs(&membership, pair_seed)
            }
        };
        counts.pairs = augment::pair_stats(&jobs, train.num_emotions());
        counters.conversions += 1;
        let converted = stage(
            "convert",
            run_seed,
            convert(config, &jobs, &train, run_seed, &work_dir(config, &run_id)),
        )?;
        counts.converter_errors = converted.errors.len();
        final_train = stage(
            "augment",
            run_seed,
            augment::build_augmented_set(&train, &jobs, &converted),
        )?;
        timings.augment_ms = t0.elapsed().as_secs_f64() * 1e3;
    }
    counts.n_augmented = final_train.len() - counts.n_original;

    let t0 = Instant::now();
    let final_config = TrainConfig {
        sample_weights,
        ..config.final_model.clone()
    };
    counters.final_trainings += 1;
    let model = stage(
        "final_model",
        run_seed,
        classifier::train(final_train.view(), dev_view, &final_config, seed::derive(run_seed, "final")),
    )?;
    timings.final_ms = t0.elapsed().as_secs_f64() * 1e3;

    let opts = GapOptions {
        skip_undefined_cells: config.skip_undefined_cells,
    };
    let report = stage(
        "evaluate",
        run_seed,
        evaluate_model(&model.params, &test, config.final_model.eval_threshold, opts),
    )?;
    timings.total_ms = start.elapsed().as_secs_f64() * 1e3;

    Ok(RunRecord {
        run_id,
        config_hash: config.hash(),
        seed: run_seed,
        mode,
        report,
        counts,
        counters,
        timings,
        bias_trace,
        final_trace: model.trace,
        partition: partition_result,
        emotions: test.emotions().to_vec(),
    })
}

/// Runs every seed (in parallel) and returns records in seed-list order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    config.validate()?;
    config
        .seeds
        .par_iter()
        .map(|&s| run_seed(config, s))
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medians {
    pub macro_f1: f64,
    pub tpr_gap: f64,
    pub dp_gap: f64,
}

pub fn medians(records: &[RunRecord]) -> Medians {
    let mut f1: Vec<f64> = records.iter().map(|r| r.report.macro_f1).collect();
    let mut tpr: Vec<f64> = records.iter().map(|r| r.report.tpr_gap).collect();
    let mut dp: Vec<f64> = records.iter().map(|r| r.report.dp_gap).collect();
    Medians {
        macro_f1: median(&mut f1),
        tpr_gap: median(&mut tpr),
        dp_gap: median(&mut dp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    EarlyStopThreshold,
    Ratio,
    Converter,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationAxis::EarlyStopThreshold => "early_stop_threshold",
            AblationAxis::Ratio => "ratio",
            AblationAxis::Converter => "converter",
        }
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "early_stop_threshold" | "threshold" => Ok(AblationAxis::EarlyStopThreshold),
            "ratio" => Ok(AblationAxis::Ratio),
            "converter" => Ok(AblationAxis::Converter),
            _ => Err(Error::Config(format!("unknown ablation axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub value: String,
    pub medians: Medians,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},macro_f1,tpr_gap,dp_gap,n_seeds\n", self.axis.as_str());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&r.value),
                fmt_f64(r.medians.macro_f1),
                fmt_f64(r.medians.tpr_gap),
                fmt_f64(r.medians.dp_gap),
                r.records.len()
            );
        }
        out
    }
}

/// Applies one ablation value (given in its CLI string form) to a config.
pub fn apply_axis(base: &ExperimentConfig, axis: AblationAxis, value: &str) -> Result<ExperimentConfig> {
    let mut config = base.clone();
    match axis {
        AblationAxis::EarlyStopThreshold => {
            let t: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad threshold `{value}`")))?;
            let bias = config
                .bias_model
                .as_mut()
                .ok_or_else(|| Error::Config("threshold ablation needs [bias_model]".into()))?;
            bias.early_stop_f1 = Some(t);
        }
        AblationAxis::Ratio => config.ratio = value.parse::<PartitionRatio>()?,
        AblationAxis::Converter => config.converter = Some(value.parse()?),
    }
    config.validate()?;
    Ok(config)
}

/// Cartesian run over `values × seeds`, one table row per value.
pub fn ablate(base: &ExperimentConfig, axis: AblationAxis, values: &[String]) -> Result<AblationTable> {
    let configs = values
        .iter()
        .map(|v| apply_axis(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let rows = values
        .iter()
        .zip(&configs)
        .map(|(v, c)| {
            let records = run(c)?;
            Ok(AblationRow {
                value: v.clone(),
                medians: medians(&records),
                records,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { axis, rows })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const SCATTER_HEADER: &str = "mode,seed,macro_f1,tpr_gap,dp_gap";

/// Performance-fairness points, one row per record.
pub fn emit_scatter(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidBatch("no records to plot".into()));
    }
    let mut out = format!("{SCATTER_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.mode,
            r.seed,
            fmt_f64(r.report.macro_f1),
            fmt_f64(r.report.tpr_gap),
            fmt_f64(r.report.dp_gap)
        );
    }
    Ok(out)
}

pub const RESULTS_HEADER: &str = "run_id,mode,seed,config_hash,macro_f1,tpr_gap,dp_gap,n_original,n_augmented,duplicate_pairs,cross_emotion_partners,bias_stop_epoch,converter_errors,skipped_classes";

pub fn results_csv(records: &[RunRecord]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.mode,
            r.seed,
            r.config_hash,
            fmt_f64(r.report.macro_f1),
            fmt_f64(r.report.tpr_gap),
            fmt_f64(r.report.dp_gap),
            r.counts.n_original,
            r.counts.n_augmented,
            r.counts.pairs.duplicate_pairs,
            r.counts.pairs.cross_emotion_partners,
            r.counts.bias_stop_epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.counts.converter_errors,
            csv_field(&r.report.skipped_classes.join(";")),
        );
    }
    out
}

pub const PER_EMOTION_HEADER: &str = "run_id,mode,seed,emotion,macro_f1,tpr_gap,dp_gap";

pub fn per_emotion_csv(records: &[RunRecord]) -> String {
    let mut out = format!("{PER_EMOTION_HEADER}\n");
    for r in records {
        for row in &r.report.per_emotion {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.run_id,
                r.mode,
                r.seed,
                csv_field(&row.emotion),
                fmt_f64(row.f1),
                row.tpr_gap.map(fmt_f64).unwrap_or_default(),
                fmt_f64(row.dp_gap)
            );
        }
    }
    out
}

pub fn timings_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("run_id,bias_ms,augment_ms,final_ms,total_ms\n");
    for r in records {
        let t = r.timings;
        let _ = writeln!(
            out,
            "{},{:.3},{:.3},{:.3},{:.3}",
            r.run_id, t.bias_ms, t.augment_ms, t.final_ms, t.total_ms
        );
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `per_emotion.csv`, `scatter.csv`, `timings.csv`,
/// training traces and partition audits under `dir`.
pub fn write_outputs(records: &[RunRecord], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("results.csv"), &results_csv(records))?;
    write(&dir.join("per_emotion.csv"), &per_emotion_csv(records))?;
    write(&dir.join("scatter.csv"), &emit_scatter(records)?)?;
    write(&dir.join("timings.csv"), &timings_csv(records))?;
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    for r in records {
        write(&traces.join(format!("{}-final.csv", r.run_id)), &r.final_trace.to_csv())?;
        if let Some(t) = &r.bias_trace {
            write(&traces.join(format!("{}-bias.csv", r.run_id)), &t.to_csv())?;
        }
        if let Some(p) = &r.partition {
            write(
                &traces.join(format!("{}-partition.jsonl", r.run_id)),
                &p.to_records(&r.emotions),
            )?;
        }
    }
    Ok(())
}

pub fn write_ablation(table: &AblationTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(format!("ablation_{}.csv", table.axis.as_str())), &table.to_csv())?;
    let mut runs = format!("{},{RESULTS_HEADER}\n", table.axis.as_str());
    for row in &table.rows {
        for line in results_csv(&row.records).lines().skip(1) {
            let _ = writeln!(runs, "{},{line}", csv_field(&row.value));
        }
    }
    write(&dir.join(format!("ablation_{}_runs.csv", table.axis.as_str())), &runs)
}

/// Summary line plus per-emotion rows for a single report.
pub fn report_csv(report: &FairnessReport) -> String {
    let mut out = String::from("macro_f1,tpr_gap,dp_gap,skipped_classes\n");
    let _ = writeln!(
        out,
        "{},{},{},{}",
        fmt_f64(report.macro_f1),
        fmt_f64(report.tpr_gap),
        fmt_f64(report.dp_gap),
        csv_field(&report.skipped_classes.join(";"))
    );
    out.push_str("\nemotion,macro_f1,tpr_gap,dp_gap\n");
    for row in &report.per_emotion {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&row.emotion),
            fmt_f64(row.f1),
            row.tpr_gap.map(fmt_f64).unwrap_or_default(),
            fmt_f64(row.dp_gap)
        );
    }
    out
}

type ScoreTable = (Vec<String>, Vec<(String, Vec<f64>)>);

fn read_scores(path: &Path) -> Result<ScoreTable> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidBatch(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidBatch(format!("{}: {e}", path.display())))?
        .clone();
    if headers.get(0) != Some("id") || headers.len() < 2 {
        return Err(Error::InvalidBatch(format!(
            "{}: header must be `id,<emotion>...`",
            path.display()
        )));
    }
    let emotions: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidBatch(format!("{}: {e}", path.display())))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidBatch(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        if values.len() != emotions.len() {
            return Err(Error::InvalidBatch(format!("{}: row {} has wrong width", path.display(), i + 2)));
        }
        rows.push((rec[0].to_string(), values));
    }
    Ok((emotions, rows))
}

/// Evaluates prediction/truth/group CSV files joined on `id`. Scores in both
/// the prediction and truth files are binarized with the `1/|E|` rule.
pub fn eval_files(pred: &Path, truth: &Path, groups: &Path, opts: GapOptions) -> Result<FairnessReport> {
    let (emotions, truth_rows) = read_scores(truth)?;
    let (pred_emotions, pred_rows) = read_scores(pred)?;
    if pred_emotions != emotions {
        return Err(Error::InvalidBatch("prediction and truth headers differ".into()));
    }
    let mut reader = csv::Reader::from_path(groups)
        .map_err(|e| Error::InvalidBatch(format!("{}: {e}", groups.display())))?;
    let mut group_of = std::collections::HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::InvalidBatch(format!("{}: {e}", groups.display())))?;
        if rec.len() < 2 {
            return Err(Error::InvalidBatch(format!("{}: expected `id,group` rows", groups.display())));
        }
        group_of.insert(rec[0].to_string(), rec[1].to_string());
    }
    let pred_of: std::collections::HashMap<_, _> = pred_rows.into_iter().collect();
    let threshold = 1.0 / emotions.len() as f64;
    let (mut t, mut p, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for (id, scores) in truth_rows {
        let ps = pred_of
            .get(&id)
            .ok_or_else(|| Error::InvalidBatch(format!("no prediction for `{id}`")))?;
        let grp = group_of
            .get(&id)
            .ok_or_else(|| Error::InvalidBatch(format!("no group for `{id}`")))?;
        t.push(binarize(&scores, threshold));
        p.push(binarize(ps, threshold));
        g.push(grp.clone());
    }
    metrics::evaluate(&EvalBatch::new(emotions, t, p, g)?, opts)
}
