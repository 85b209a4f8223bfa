//! Pipeline configuration: TOML file layer, command-line layer, defaults.
//! Flags win over the file, the file wins over defaults.

use std::path::{Path, PathBuf};

use ebookhmm::infer::DEFAULT_HALF_WIDTH;
use ebookhmm::pipeline::{EstimationSettings, DEFAULT_GAP_THRESHOLD, DEFAULT_REFINEMENT_ROUNDS};
use ebookhmm::{Error, PseudocountConfig, Result, ScoringScheme, TrainingOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AlphabetMode {
    /// Built-in 107-symbol text alphabet.
    Default,
    /// Every symbol seen at least `min_frequency` times in the inputs.
    Corpus,
    /// Alphabet JSON file.
    File,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphabetLayer {
    pub mode: Option<AlphabetMode>,
    pub min_frequency: Option<usize>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringLayer {
    pub match_score: Option<i32>,
    pub mismatch_score: Option<i32>,
    pub gap_score: Option<i32>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudocountLayer {
    pub emission: Option<f64>,
    pub transition: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingLayer {
    pub enabled: Option<bool>,
    pub epochs: Option<usize>,
    pub tol: Option<f64>,
}

/// One layer of settings; unset fields fall through to the next layer.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub inputs: Option<Vec<PathBuf>>,
    pub output_dir: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub alphabet: AlphabetLayer,
    #[serde(default)]
    pub scoring: ScoringLayer,
    pub gap_threshold: Option<f64>,
    pub refinement_rounds: Option<usize>,
    pub band_half_width: Option<usize>,
    #[serde(default)]
    pub pseudocounts: PseudocountLayer,
    #[serde(default)]
    pub training: TrainingLayer,
}

impl ConfigLayer {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut layer: ConfigLayer =
            toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        layer.inputs.iter_mut().flatten().for_each(rebase);
        layer.output_dir.iter_mut().for_each(rebase);
        layer.reference.iter_mut().for_each(rebase);
        layer.alphabet.file.iter_mut().for_each(rebase);
        Ok(layer)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphabetConfig {
    pub mode: AlphabetMode,
    pub min_frequency: usize,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub enabled: bool,
    pub epochs: usize,
    pub tol: f64,
}

/// Fully resolved configuration, echoed into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub reference: Option<PathBuf>,
    pub alphabet: AlphabetConfig,
    pub scoring: ScoringScheme,
    pub gap_threshold: f64,
    pub refinement_rounds: usize,
    pub band_half_width: usize,
    pub pseudocounts: PseudocountConfig,
    pub training: TrainingConfig,
}

impl PipelineConfig {
    /// `layers` are ordered from highest to lowest precedence.
    pub fn resolve(layers: &[&ConfigLayer]) -> Result<Self> {
        macro_rules! pick {
            ($($f:tt).+) => {
                layers.iter().find_map(|l| l.$($f).+.clone())
            };
        }
        let default_scoring = ScoringScheme::default();
        let default_pseudo = PseudocountConfig::default();
        let default_training = TrainingOptions::default();
        let config = PipelineConfig {
            inputs: pick!(inputs).unwrap_or_default(),
            output_dir: pick!(output_dir).unwrap_or_else(|| PathBuf::from("ebookhmm-out")),
            reference: pick!(reference),
            alphabet: AlphabetConfig {
                mode: pick!(alphabet.mode).unwrap_or(if pick!(alphabet.file).is_some() {
                    AlphabetMode::File
                } else {
                    AlphabetMode::Default
                }),
                min_frequency: pick!(alphabet.min_frequency).unwrap_or(1),
                file: pick!(alphabet.file),
            },
            scoring: ScoringScheme {
                match_score: pick!(scoring.match_score).unwrap_or(default_scoring.match_score),
                mismatch_score: pick!(scoring.mismatch_score).unwrap_or(default_scoring.mismatch_score),
                gap_score: pick!(scoring.gap_score).unwrap_or(default_scoring.gap_score),
            },
            gap_threshold: pick!(gap_threshold).unwrap_or(DEFAULT_GAP_THRESHOLD),
            refinement_rounds: pick!(refinement_rounds).unwrap_or(DEFAULT_REFINEMENT_ROUNDS),
            band_half_width: pick!(band_half_width).unwrap_or(DEFAULT_HALF_WIDTH),
            pseudocounts: PseudocountConfig {
                emission_pseudocount: pick!(pseudocounts.emission).unwrap_or(default_pseudo.emission_pseudocount),
                transition_pseudocount: pick!(pseudocounts.transition)
                    .unwrap_or(default_pseudo.transition_pseudocount),
            },
            training: TrainingConfig {
                enabled: pick!(training.enabled).unwrap_or(false),
                epochs: pick!(training.epochs).unwrap_or(default_training.max_epochs),
                tol: pick!(training.tol).unwrap_or(default_training.tol),
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet.mode == AlphabetMode::File && self.alphabet.file.is_none() {
            return Err(Error::Config("alphabet mode `file` needs an alphabet file".into()));
        }
        if self.alphabet.min_frequency == 0 {
            return Err(Error::Config("min_frequency must be at least 1".into()));
        }
        self.estimation().validate()
    }

    pub fn estimation(&self) -> EstimationSettings {
        EstimationSettings {
            scoring: self.scoring,
            refinement_rounds: self.refinement_rounds,
            gap_threshold: self.gap_threshold,
            pseudocounts: self.pseudocounts,
            half_width: self.band_half_width,
            train: self.training.enabled,
            training: TrainingOptions {
                max_epochs: self.training.epochs,
                tol: self.training.tol,
                pseudocounts: self.pseudocounts,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_explicit() {
        let c = PipelineConfig::resolve(&[]).unwrap();
        assert_eq!(c.scoring, ScoringScheme::default());
        assert_eq!(c.gap_threshold, 0.5);
        assert_eq!(c.alphabet.mode, AlphabetMode::Default);
        assert!(!c.training.enabled);
        assert_eq!(c.training.epochs, 10);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = ConfigLayer::from_toml(
            "gap_threshold = 0.4\nrefinement_rounds = 5\ninputs = [\"a.txt\"]\n[scoring]\nmismatch_score = -2\n",
            Path::new("/data/run.toml"),
        )
        .unwrap();
        let flags = ConfigLayer { gap_threshold: Some(0.3), ..ConfigLayer::default() };
        let c = PipelineConfig::resolve(&[&flags, &file]).unwrap();
        assert_eq!(c.gap_threshold, 0.3);
        assert_eq!(c.refinement_rounds, 5);
        assert_eq!(c.scoring.mismatch_score, -2);
        assert_eq!(c.scoring.match_score, 1);
        assert_eq!(c.inputs, vec![PathBuf::from("/data/a.txt")]);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let layer = ConfigLayer { gap_threshold: Some(1.5), ..ConfigLayer::default() };
        assert!(matches!(PipelineConfig::resolve(&[&layer]), Err(Error::Config(_))));
        assert!(matches!(
            ConfigLayer::from_toml("no_such_key = 1", Path::new("x.toml")),
            Err(Error::Config(_))
        ));
        let layer = ConfigLayer {
            alphabet: AlphabetLayer { mode: Some(AlphabetMode::File), ..AlphabetLayer::default() },
            ..ConfigLayer::default()
        };
        assert!(matches!(PipelineConfig::resolve(&[&layer]), Err(Error::Config(_))));
    }
}
