//! Splits each emotion subset into guiding, unused and contrary sets and
//! writes the audit trail.
//!
//! ```text
//! cargo run --example partition_audit -- 3:4:3
//! ```

use covada::classifier::{self, TrainConfig};
use covada::config::benchmark_spec;
use covada::dataset::generate_synthetic;
use covada::partition::{self, PartitionRatio};

fn main() -> covada::Result<()> {
    let ratio: PartitionRatio = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => PartitionRatio::default(),
    };
    let (train, dev, _) = generate_synthetic(&benchmark_spec())?;
    let config = TrainConfig {
        learning_rate: 1e-3,
        ..TrainConfig::bias_selection(0.5)
    };
    let bias = classifier::train(train.view(), Some(dev.view()), &config, 1)?;
    let membership = partition::emotion_subsets(train.view(), None);
    let table = classifier::confidence_table(&bias.params, train.view(), &membership)?;
    let result = partition::split_by_confidence(&table, &membership, ratio)?;

    let group_of: std::collections::HashMap<&str, Option<&str>> = train
        .samples
        .iter()
        .map(|s| s.id.as_str())
        .zip(train.group_tags())
        .collect();
    let minority = |set: &[(String, f64)], majority: &str| {
        set.iter().filter(|(id, _)| group_of[id.as_str()] != Some(majority)).count()
    };
    let spec = benchmark_spec();
    println!("ratio {ratio}");
    println!("emotion   guiding unused contrary  minority(guiding/contrary)");
    for ep in &result.emotions {
        let majority = &spec.groups[spec.majority_group(ep.emotion)];
        println!(
            "{:9} {:7} {:6} {:8}  {}/{}",
            train.emotions()[ep.emotion],
            ep.guiding.len(),
            ep.unused.len(),
            ep.contrary.len(),
            minority(&ep.guiding, majority),
            minority(&ep.contrary, majority),
        );
    }

    let path = std::env::temp_dir().join("covada-partition.jsonl");
    std::fs::write(&path, result.to_records(train.emotions())).map_err(|e| covada::Error::io(&path, e))?;
    println!("\naudit records -> {}", path.display());
    Ok(())
}
