//! Pairs guiding sources with contrary targets, converts them with the
//! attribute-swap converter and assembles the augmented training set.

use covada::augment::{self, NoisySwap, SyntheticSwap};
use covada::classifier::{self, TrainConfig};
use covada::config::benchmark_spec;
use covada::dataset::generate_synthetic;
use covada::partition::{self, PartitionRatio};

fn main() -> covada::Result<()> {
    let spec = benchmark_spec();
    let (train, dev, _) = generate_synthetic(&spec)?;
    let config = TrainConfig {
        learning_rate: 1e-3,
        ..TrainConfig::bias_selection(0.5)
    };
    let bias = classifier::train(train.view(), Some(dev.view()), &config, 1)?;
    let membership = partition::emotion_subsets(train.view(), None);
    let table = classifier::confidence_table(&bias.params, train.view(), &membership)?;
    let parts = partition::split_by_confidence(&table, &membership, PartitionRatio::default())?;

    let jobs = augment::sample_pairs(&parts, 1);
    let stats = augment::pair_stats(&jobs, train.num_emotions());
    println!(
        "{} jobs, per emotion {:?}, {} duplicate pairs",
        stats.jobs, stats.jobs_per_emotion, stats.duplicate_pairs
    );
    println!("first jobs:");
    for job in jobs.iter().take(3) {
        println!("  {} {} <- {} (speaker of {})", job.job_id, train.emotions()[job.emotion], job.source_id, job.target_id);
    }

    let swap = augment::run_converter(&jobs, train.view(), &SyntheticSwap { spec: spec.clone() }, 1)?;
    let augmented = augment::build_augmented_set(&train, &jobs, &swap)?;
    println!("\noriginal {} + converted {} = {}", train.len(), jobs.len(), augmented.len());
    let last = augmented.samples.last().unwrap();
    println!("last sample: id={} group={:?} provenance={:?}", last.id, last.group, last.provenance);

    let noisy = NoisySwap {
        spec,
        leak: 0.2,
        sigma: 0.1,
    };
    let leaky = augment::run_converter(&jobs, train.view(), &noisy, 1)?;
    let shift: f64 = swap.features[0]
        .as_ref()
        .zip(leaky.features[0].as_ref())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .unwrap_or(0.0);
    println!("noisy_swap(0.2,0.1) moves the first converted vector by {shift:.3}");
    Ok(())
}
