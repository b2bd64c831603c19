//! Trains the class-balanced GCE bias model, stops it early on dev Macro F1
//! and shows how its per-emotion losses single out minority-group speakers.

use covada::classifier::{self, TrainConfig};
use covada::config::benchmark_spec;
use covada::dataset::generate_synthetic;
use covada::partition;

fn main() -> covada::Result<()> {
    let (train, dev, _) = generate_synthetic(&benchmark_spec())?;
    let config = TrainConfig {
        learning_rate: 1e-3,
        ..TrainConfig::bias_selection(0.5)
    };
    let bias = classifier::train(train.view(), Some(dev.view()), &config, 1)?;
    print!("{}", bias.trace.to_csv());

    let membership = partition::emotion_subsets(train.view(), None);
    let table = classifier::confidence_table(&bias.params, train.view(), &membership)?;

    // Group tags are read here only to report what the loss ranking found.
    let groups: std::collections::HashMap<&str, &str> = train
        .samples
        .iter()
        .zip(train.group_tags())
        .map(|(s, g)| (s.id.as_str(), g.unwrap_or("?")))
        .collect();
    println!("\nmean CE loss by group within each emotion subset:");
    for (e, emotion) in train.emotions().iter().enumerate() {
        let mut sums: std::collections::BTreeMap<&str, (f64, usize)> = Default::default();
        for (id, loss) in &table.per_emotion[e] {
            let entry = sums.entry(groups[id.as_str()]).or_default();
            entry.0 += loss;
            entry.1 += 1;
        }
        let row: Vec<String> = sums
            .iter()
            .map(|(g, (s, n))| format!("{g}={:.3} (n={n})", s / *n as f64))
            .collect();
        println!("  {emotion:8} {}", row.join("  "));
    }
    Ok(())
}
