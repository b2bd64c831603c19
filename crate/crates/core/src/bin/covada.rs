use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use covada::augment::{self, ManifestInput, ResultRecord};
use covada::config::ExperimentConfig;
use covada::harness::{self, AblationAxis};
use covada::metrics::GapOptions;
use covada::Error;

#[derive(Parser)]
#[command(name = "covada", version, about = "Confidence-oriented debiasing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mode over a list of seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed list overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one axis and write a median table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// early_stop_threshold, ratio or converter.
        #[arg(long)]
        axis: String,
        /// Semicolon-separated values, e.g. `3:0:7;5:0:5`.
        #[arg(long, value_delimiter = ';')]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score prediction/truth/group CSV files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        skip_undefined_cells: bool,
    },
    /// Echo converter backend: answers every job with its source features.
    #[command(hide = true)]
    Loopback {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Job ids to leave unanswered.
        #[arg(long)]
        drop: Vec<String>,
    },
}

fn load(config: &PathBuf, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> covada::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(config)?;
    if let Some(s) = seeds {
        c.seeds = s;
    }
    if out.is_some() {
        c.out_dir = out;
    }
    c.validate()?;
    Ok(c)
}

fn execute(command: Command) -> covada::Result<()> {
    match command {
        Command::Run { config, seeds, out } => {
            let config = load(&config, seeds, out)?;
            let records = harness::run(&config)?;
            match &config.out_dir {
                Some(dir) => harness::write_outputs(&records, dir)?,
                None => print!("{}", harness::results_csv(&records)),
            }
        }
        Command::Ablate {
            config,
            axis,
            values,
            seeds,
            out,
        } => {
            let axis: AblationAxis = axis.parse()?;
            if values.is_empty() {
                return Err(Error::Config("--values must not be empty".into()));
            }
            let config = load(&config, seeds, out)?;
            let table = harness::ablate(&config, axis, &values)?;
            match &config.out_dir {
                Some(dir) => harness::write_ablation(&table, dir)?,
                None => print!("{}", table.to_csv()),
            }
        }
        Command::Eval {
            pred,
            truth,
            groups,
            skip_undefined_cells,
        } => {
            let report = harness::eval_files(&pred, &truth, &groups, GapOptions { skip_undefined_cells })?;
            print!("{}", harness::report_csv(&report));
        }
        Command::Loopback { manifest, out, drop } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            let results: Vec<(String, ResultRecord)> = augment::parse_jobs_manifest(&text)?
                .into_iter()
                .filter(|j| !drop.contains(&j.job_id))
                .map(|j| {
                    let r = match j.source {
                        ManifestInput::Features(f) => ResultRecord::Features(f),
                        ManifestInput::Path(p) => ResultRecord::AudioPath(p),
                    };
                    (j.job_id, r)
                })
                .collect();
            std::fs::write(&out, augment::write_results_manifest(&results)).map_err(|e| Error::io(&out, e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
