//! The manifest exchange with an out-of-process converter.
//!
//! With arguments, they are used as the backend command, e.g.
//!
//! ```text
//! cargo build && cargo run --example external_converter -- target/debug/covada loopback
//! ```
//!
//! Without arguments the example plays the backend itself: it reads
//! `jobs.manifest`, answers every job but one and shows how validation reports
//! the gap.

use covada::augment::{self, ExternalConfig, ManifestInput, ResultRecord};
use covada::config::benchmark_spec;
use covada::dataset::{generate_synthetic, SyntheticSpec};
use covada::partition;

fn main() -> covada::Result<()> {
    let spec = SyntheticSpec {
        n_per_emotion: 21,
        n_dev_per_emotion: 0,
        skew_ratio: 6.0,
        ..benchmark_spec()
    };
    let (train, _, _) = generate_synthetic(&spec)?;
    let membership = partition::emotion_subsets(train.view(), None);
    let jobs = augment::sample_random_pairs(&membership, 7);
    let work_dir = std::env::temp_dir().join("covada-external");
    std::fs::create_dir_all(&work_dir).map_err(|e| covada::Error::io(&work_dir, e))?;

    let command: Vec<String> = std::env::args().skip(1).collect();
    if !command.is_empty() {
        let config = ExternalConfig {
            command,
            work_dir,
            allow_partial: false,
        };
        let table = augment::external_convert(&jobs, train.view(), &config)?;
        let augmented = augment::build_augmented_set(&train, &jobs, &table)?;
        println!("{} answered {} jobs; augmented set has {} samples", table.converter, jobs.len(), augmented.len());
        return Ok(());
    }

    let manifest = augment::write_jobs_manifest(&jobs, train.view())?;
    println!("jobs.manifest, first line:\n  {}", manifest.lines().next().unwrap_or(""));

    // Backend side: echo the source features, skip the last job.
    let results: Vec<(String, ResultRecord)> = augment::parse_jobs_manifest(&manifest)?
        .into_iter()
        .take(jobs.len() - 1)
        .map(|job| {
            let record = match job.source {
                ManifestInput::Features(f) => ResultRecord::Features(f),
                ManifestInput::Path(p) => ResultRecord::AudioPath(p),
            };
            (job.job_id, record)
        })
        .collect();
    let text = augment::write_results_manifest(&results);

    let (features, errors) = augment::validate_results(&jobs, augment::parse_results_manifest(&text)?, train.dim());
    println!(
        "{} of {} jobs usable; problems: {:?}",
        features.iter().filter(|f| f.is_some()).count(),
        jobs.len(),
        errors
    );
    Ok(())
}
