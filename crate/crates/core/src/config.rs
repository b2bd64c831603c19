//! Experiment configuration, read from TOML. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{Loss, TrainConfig};
use crate::dataset::SyntheticSpec;
use crate::error::{Error, Result};
use crate::partition::PartitionRatio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Plain training on the original data.
    Erm,
    /// Bias selection only: contrary members are up-weighted, nothing is converted.
    BsOnly,
    /// Conversion only: pairs drawn at random inside each emotion.
    VcOnly,
    /// Bias selection followed by guiding→contrary conversion.
    Covada,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Erm, Mode::BsOnly, Mode::VcOnly, Mode::Covada];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Erm => "erm",
            Mode::BsOnly => "bs_only",
            Mode::VcOnly => "vc_only",
            Mode::Covada => "covada",
        }
    }

    pub fn uses_bias_selection(self) -> bool {
        matches!(self, Mode::BsOnly | Mode::Covada)
    }

    pub fn uses_conversion(self) -> bool {
        matches!(self, Mode::VcOnly | Mode::Covada)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Regenerated per seed from the spec (the spec's own seed is mixed with the run seed).
    Synthetic(SyntheticSpec),
    /// Sample files on disk, shared across seeds.
    Import {
        train: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dev: Option<PathBuf>,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConverterSpec {
    SyntheticSwap,
    NoisySwap {
        leak: f64,
        sigma: f64,
    },
    External {
        command: Vec<String>,
        #[serde(default)]
        allow_partial: bool,
    },
}

impl fmt::Display for ConverterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConverterSpec::SyntheticSwap => f.write_str("synthetic_swap"),
            ConverterSpec::NoisySwap { leak, sigma } => write!(f, "noisy_swap({leak},{sigma})"),
            ConverterSpec::External { command, .. } => write!(f, "external({})", command.join(" ")),
        }
    }
}

impl FromStr for ConverterSpec {
    type Err = Error;

    /// `synthetic_swap`, `noisy_swap(λ,σ)` or `external(program args...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse converter `{s}`"));
        if s == "synthetic_swap" {
            return Ok(ConverterSpec::SyntheticSwap);
        }
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        match name.trim() {
            "noisy_swap" => {
                let parts: Vec<f64> = args
                    .split(',')
                    .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?;
                match parts[..] {
                    [leak, sigma] => Ok(ConverterSpec::NoisySwap { leak, sigma }),
                    _ => Err(bad()),
                }
            }
            "external" => {
                let command: Vec<String> = args.split_whitespace().map(String::from).collect();
                if command.is_empty() {
                    return Err(bad());
                }
                Ok(ConverterSpec::External {
                    command,
                    allow_partial: false,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// How many pairs to draw per emotion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairsRule {
    /// `K_e = |D_e|`.
    #[default]
    SubsetSize,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_bs_weight() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub ratio: PartitionRatio,
    #[serde(default)]
    pub pairs: PairsRule,
    /// Loss multiplier of contrary-set members in `bs_only`.
    #[serde(default = "default_bs_weight")]
    pub bs_weight: f64,
    #[serde(default)]
    pub skip_undefined_cells: bool,
    pub dataset: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_model: Option<TrainConfig>,
    pub final_model: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converter: Option<ConverterSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form, with
    /// the output directory left out.
    pub fn hash(&self) -> String {
        let canonical = Self {
            out_dir: None,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !(self.bs_weight.is_finite() && self.bs_weight >= 0.0) {
            return bad(format!("bs_weight must be finite and >= 0, got {}", self.bs_weight));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.final_model.validate()?;
        if self.mode.uses_bias_selection() {
            match &self.bias_model {
                Some(b) => b.validate()?,
                None => return bad(format!("mode `{}` requires [bias_model]", self.mode)),
            }
        }
        if self.mode.uses_conversion() {
            match &self.converter {
                None => return bad(format!("mode `{}` requires [converter]", self.mode)),
                Some(ConverterSpec::NoisySwap { leak, sigma })
                    if !(0.0..=1.0).contains(leak) || !(*sigma >= 0.0) =>
                {
                    return bad("noisy_swap needs leak in [0, 1] and sigma >= 0".into())
                }
                Some(ConverterSpec::External { command, .. }) if command.is_empty() => {
                    return bad("external converter command is empty".into())
                }
                Some(ConverterSpec::SyntheticSwap | ConverterSpec::NoisySwap { .. })
                    if !matches!(self.dataset, DatasetSource::Synthetic(_)) =>
                {
                    return bad("synthetic converters need a synthetic dataset".into())
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// The desk-scale benchmark: six emotions, two groups, 20:1 skew.
    pub fn benchmark(mode: Mode) -> Self {
        Self {
            mode,
            seeds: default_seeds(),
            out_dir: None,
            ratio: PartitionRatio::default(),
            pairs: PairsRule::SubsetSize,
            bs_weight: default_bs_weight(),
            skip_undefined_cells: false,
            dataset: DatasetSource::Synthetic(benchmark_spec()),
            bias_model: Some(TrainConfig {
                learning_rate: 1e-3,
                ..TrainConfig::bias_selection(0.5)
            }),
            final_model: TrainConfig {
                loss: Loss::Ce,
                learning_rate: 1e-3,
                max_epochs: 60,
                ..TrainConfig::default()
            },
            converter: Some(ConverterSpec::SyntheticSwap),
        }
    }
}

/// Synthetic spec used by [`ExperimentConfig::benchmark`].
pub fn benchmark_spec() -> SyntheticSpec {
    SyntheticSpec {
        skew_ratio: 20.0,
        emotion_separation: 3.0,
        group_separation: 7.0,
        label_noise: 0.05,
        ..SyntheticSpec::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "covada"
seeds = [1, 2]

[dataset]
kind = "synthetic"
skew_ratio = 20.0

[bias_model]
loss = { kind = "gce", q = 0.7 }
class_balance = true
early_stop_f1 = 0.5

[final_model]
loss = { kind = "ce" }

[converter]
kind = "noisy_swap"
leak = 0.2
sigma = 0.1
"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Covada);
        assert_eq!(c.ratio, PartitionRatio::default());
        assert_eq!(c.bs_weight, 2.0);
        assert_eq!(c.converter, Some(ConverterSpec::NoisySwap { leak: 0.2, sigma: 0.1 }));
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = MINIMAL.replace("seeds = [1, 2]", "seeds = [1, 2]\nsneaky = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = MINIMAL.replace("skew_ratio = 20.0", "skew_ratio = 20.0\nbogus = 3");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = MINIMAL.replace("sigma = 0.1", "sigma = 0.1\nextra = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn mode_required_fields() {
        let text = MINIMAL.replace("[converter]\nkind = \"noisy_swap\"\nleak = 0.2\nsigma = 0.1\n", "");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("requires [converter]"), "{err}");
        let erm = text.replace("mode = \"covada\"", "mode = \"erm\"");
        assert!(ExperimentConfig::from_toml(&erm).is_ok());
        let empty = MINIMAL.replace("seeds = [1, 2]", "seeds = []");
        assert!(ExperimentConfig::from_toml(&empty).is_err());
    }

    #[test]
    fn converter_strings() {
        for s in ["synthetic_swap", "noisy_swap(0.2,0.1)", "noisy_swap(1,0)", "external(vc-adapter --transform echo)"] {
            let c: ConverterSpec = s.parse().unwrap();
            let back: ConverterSpec = c.to_string().parse().unwrap();
            assert_eq!(back, c);
        }
        assert!("noisy_swap(1)".parse::<ConverterSpec>().is_err());
    }

    #[test]
    fn benchmark_is_valid() {
        for m in Mode::ALL {
            ExperimentConfig::benchmark(m).validate().unwrap();
        }
    }
}
