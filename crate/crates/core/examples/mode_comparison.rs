//! Desk-scale version of the mode comparison (ERM, bias selection only,
//! conversion only, both) followed by the converter-quality table.
//!
//! ```text
//! cargo run --release --example mode_comparison -- [n_seeds]
//! ```

use covada::config::{ConverterSpec, ExperimentConfig, Mode};
use covada::harness::{self, AblationAxis};

fn main() -> covada::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: Vec<u64> = (1..=n).collect();

    println!("#  mode      macro_f1  tpr_gap  dp_gap");
    let mut all = Vec::new();
    for (i, mode) in Mode::ALL.into_iter().enumerate() {
        let mut config = ExperimentConfig::benchmark(mode);
        config.seeds = seeds.clone();
        let records = harness::run(&config)?;
        let m = harness::medians(&records);
        println!("{}  {:9} {:8.3} {:8.3} {:7.3}", i + 1, mode, m.macro_f1, m.tpr_gap, m.dp_gap);
        all.extend(records);
    }

    let mut base = ExperimentConfig::benchmark(Mode::Covada);
    base.seeds = seeds;
    let values: Vec<String> = [
        ConverterSpec::SyntheticSwap,
        ConverterSpec::NoisySwap { leak: 0.2, sigma: 0.1 },
        ConverterSpec::NoisySwap { leak: 1.0, sigma: 0.0 },
    ]
    .iter()
    .map(ToString::to_string)
    .collect();
    let table = harness::ablate(&base, AblationAxis::Converter, &values)?;
    println!();
    print!("{}", table.to_csv());

    let path = std::env::temp_dir().join("covada-scatter.csv");
    std::fs::write(&path, harness::emit_scatter(&all)?).map_err(|e| covada::Error::io(&path, e))?;
    println!("\nscatter points -> {}", path.display());
    Ok(())
}
