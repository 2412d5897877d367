//! Run configuration: TOML file, then command-line flags on top.

use std::path::{Path, PathBuf};

use abbrev_core::candgen::CandidateRuleConfig;
use abbrev_core::identify::AbbrevSource;
use abbrev_core::ml::{FeatureSampling, ModelKind, TrainConfig, DEFAULT_THRESHOLD};
use abbrev_core::synth::SynthConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    #[default]
    Document,
    Token,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalOn {
    #[default]
    Detected,
    Gold,
}

impl From<EvalOn> for AbbrevSource {
    fn from(e: EvalOn) -> Self {
        match e {
            EvalOn::Detected => AbbrevSource::Detected,
            EvalOn::Gold => AbbrevSource::Gold,
        }
    }
}

/// Every setting a command may use. Defaults are the values below; a
/// `--config` file may set any subset, and flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub model_in: Vec<PathBuf>,
    /// Overrides the seeds in `train` and `synth`.
    pub seed: u64,
    pub split_ratio: f64,
    pub split_unit: SplitUnit,
    pub members: Vec<ModelKind>,
    pub matcher: ModelKind,
    pub threshold: f64,
    pub class_weighting: bool,
    pub eval_on: EvalOn,
    pub train: TrainConfig,
    pub rules: CandidateRuleConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            dict: None,
            stopwords: None,
            embeddings: None,
            model_out: None,
            model_in: Vec::new(),
            seed: 0,
            split_ratio: 0.8,
            split_unit: SplitUnit::Document,
            members: ModelKind::ALL.to_vec(),
            matcher: ModelKind::Forest,
            threshold: DEFAULT_THRESHOLD,
            class_weighting: false,
            eval_on: EvalOn::Detected,
            train: TrainConfig::default(),
            rules: CandidateRuleConfig::default(),
            synth: SynthConfig::default().low_noise(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Applies flags and propagates the top-level seed.
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &o.$field {
                    self.$field = v.clone().into();
                }
            };
        }
        set!(corpus);
        set!(dict);
        set!(stopwords);
        set!(embeddings);
        set!(model_out);
        set!(seed);
        set!(split_ratio);
        set!(split_unit);
        set!(matcher);
        set!(threshold);
        set!(eval_on);
        if !o.model_in.is_empty() {
            self.model_in = o.model_in.clone();
        }
        if let Some(m) = &o.members {
            self.members = m.clone();
        }
        if let Some(v) = o.coverage_min {
            self.rules.char_coverage_min = v;
        }
        if let Some(v) = o.max_missing {
            self.rules.max_missing_chars = v;
        }
        if o.per_split_features {
            self.train.feature_sampling = FeatureSampling::PerSplit;
        }
        if o.class_weighting {
            self.class_weighting = true;
        }
        self.train.seed = self.seed;
        self.synth.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            anyhow::bail!("split ratio must be in (0, 1), got {}", self.split_ratio);
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            anyhow::bail!("threshold must be in [0, 1], got {}", self.threshold);
        }
        if self.members.is_empty() {
            anyhow::bail!("at least one detector member is required");
        }
        if self.matcher == ModelKind::Svm {
            anyhow::bail!("--matcher must be forest or boosting");
        }
        self.train.validate()?;
        self.rules.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Shared flags. `None` leaves the config value alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML file with any RunConfig fields
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus in JSON Lines
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Dictionary, one word per line
    #[arg(long, global = true)]
    pub dict: Option<PathBuf>,
    /// Stopword list replacing the bundled one
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    /// Embedding table `token<TAB>v1 v2 ...`; hashed n-grams when absent
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model_out: Option<PathBuf>,
    /// Model file; repeat for detector and matcher
    #[arg(long, global = true)]
    pub model_in: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub split_ratio: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub split_unit: Option<SplitUnit>,
    /// Detector members, comma separated: svm,forest,boosting
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub members: Option<Vec<ModelKind>>,
    /// Pair classifier: forest or boosting
    #[arg(long, global = true)]
    pub matcher: Option<ModelKind>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub coverage_min: Option<f64>,
    #[arg(long, global = true)]
    pub max_missing: Option<usize>,
    /// Draw forest feature subsets at every split instead of per tree
    #[arg(long, global = true)]
    pub per_split_features: bool,
    /// Reweight classes to equal mass during training
    #[arg(long, global = true)]
    pub class_weighting: bool,
    #[arg(long, global = true, value_enum)]
    pub eval_on: Option<EvalOn>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(self);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.model_in = vec!["a.json".into()];
        cfg.corpus = Some("c.jsonl".into());
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml("seed = 5\n[train]\nn_trees = 7\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.n_trees, 7);
        assert_eq!(cfg.split_ratio, 0.8);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::from_toml("sed = 5\n").is_err());
    }

    #[test]
    fn flags_win() {
        let mut cfg = RunConfig::from_toml("seed = 5\nthreshold = 0.3\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            per_split_features: true,
            coverage_min: Some(0.6),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.threshold, 0.3);
        assert_eq!(cfg.train.feature_sampling, FeatureSampling::PerSplit);
        assert_eq!(cfg.rules.char_coverage_min, 0.6);
    }

    #[test]
    fn svm_matcher_rejected() {
        let cfg = RunConfig {
            matcher: ModelKind::Svm,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
