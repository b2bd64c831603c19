//! Generates the skewed synthetic benchmark and writes it as line-delimited JSON.
//!
//! ```text
//! cargo run --example generate_dataset -- [out_dir]
//! ```

use std::path::PathBuf;

use covada::config::benchmark_spec;
use covada::dataset::generate_synthetic;

fn main() -> covada::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()).into();
    std::fs::create_dir_all(&out).map_err(|e| covada::Error::io(&out, e))?;

    let spec = benchmark_spec();
    let (train, dev, test) = generate_synthetic(&spec)?;
    for (name, ds) in [("train", &train), ("dev", &dev), ("test", &test)] {
        let path = out.join(format!("{name}.jsonl"));
        ds.save(&path)?;
        println!("{name}: {} samples -> {}", ds.len(), path.display());
    }

    println!("\nper-emotion group counts (train):");
    let counts = train.group_counts();
    for (e, emotion) in train.emotions().iter().enumerate() {
        let row: Vec<String> = spec
            .groups
            .iter()
            .map(|g| format!("{g}={}", counts.get(&(e, g.clone())).unwrap_or(&0)))
            .collect();
        println!("  {emotion:8} {}", row.join("  "));
    }
    Ok(())
}
