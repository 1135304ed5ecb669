use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::knowledge::{SplitSpec, SplitStrategy};
use crate::train::TrainConfig;
use crate::verify::SuiteConfig;
use crate::vocab::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Experiment {
    E1,
    E2,
    E3,
    E4,
    #[serde(rename = "verify")]
    Verify,
}

impl Experiment {
    pub const SWEEPS: [Experiment; 4] = [Experiment::E1, Experiment::E2, Experiment::E3, Experiment::E4];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::E1 => "E1",
            Experiment::E2 => "E2",
            Experiment::E3 => "E3",
            Experiment::E4 => "E4",
            Experiment::Verify => "verify",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "E1" => Ok(Experiment::E1),
            "E2" => Ok(Experiment::E2),
            "E3" => Ok(Experiment::E3),
            "E4" => Ok(Experiment::E4),
            "VERIFY" => Ok(Experiment::Verify),
            _ => Err(format!("unknown experiment `{s}`, expected E1, E2, E3, E4 or verify")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabSizes {
    pub n_subjects: usize,
    pub n_relations: usize,
    pub n_answers: usize,
}

impl Default for VocabSizes {
    fn default() -> Self {
        VocabSizes {
            n_subjects: 100,
            n_relations: 5,
            n_answers: 50,
        }
    }
}

impl VocabSizes {
    pub fn build(&self) -> Result<Vocabulary> {
        Vocabulary::new(self.n_subjects, self.n_relations, self.n_answers)
    }
}

/// A complete, self-describing run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub vocab: VocabSizes,
    pub zipf_alpha: f64,
    pub train: TrainConfig,
    pub split: SplitSpec,
    /// Finetuning splits compared by the experiment.
    pub strategies: Vec<SplitStrategy>,
    pub seeds: Vec<u64>,
    /// Zipf exponents swept by E2.
    pub alphas: Vec<f64>,
    /// Pretraining budgets swept by E3.
    pub step_grid: Vec<usize>,
    /// Sizes of the theorem suite run by `verify`.
    pub suite: SuiteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::defaults_for(Experiment::E1)
    }
}

impl RunConfig {
    /// Default configuration of each experiment.
    pub fn defaults_for(experiment: Experiment) -> Self {
        let base = RunConfig {
            experiment,
            vocab: VocabSizes::default(),
            zipf_alpha: 1.2,
            train: TrainConfig {
                pretrain_steps: 100_000,
                ..TrainConfig::default()
            },
            split: SplitSpec::default(),
            strategies: vec![SplitStrategy::Top, SplitStrategy::Bottom],
            seeds: vec![0, 1, 2, 3, 4],
            alphas: Vec::new(),
            step_grid: Vec::new(),
            suite: SuiteConfig::default(),
        };
        match experiment {
            Experiment::E1 => RunConfig {
                strategies: SplitStrategy::ALL.to_vec(),
                ..base
            },
            Experiment::E2 => RunConfig {
                alphas: vec![0.0, 0.5, 1.0, 1.5, 2.0],
                ..base
            },
            Experiment::E3 => RunConfig {
                step_grid: vec![30_000, 100_000, 300_000, 1_000_000],
                ..base
            },
            Experiment::E4 => RunConfig {
                strategies: vec![SplitStrategy::Bottom],
                vocab: VocabSizes {
                    n_subjects: 300,
                    ..base.vocab
                },
                train: TrainConfig {
                    init_std: 0.001,
                    lr: 0.05,
                    ..base.train.clone()
                },
                ..base
            },
            Experiment::Verify => base,
        }
    }

    /// Parses a JSON document on top of the defaults of its experiment.
    ///
    /// `experiment` overrides the document's own `experiment` key. Unknown
    /// keys and ill-typed values are reported as [`Error::Config`] naming the
    /// offending key path.
    pub fn from_json(text: &str, experiment: Option<Experiment>) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::Config {
            key: "<document>".into(),
            message: e.to_string(),
        })?;
        if !user.is_object() {
            return Err(Error::Config {
                key: "<document>".into(),
                message: "expected a JSON object".into(),
            });
        }
        // Strict pass against the default layout so the error names the key.
        let strict: RunConfig = from_value_at(user.clone())?;
        let experiment = experiment.unwrap_or(strict.experiment);
        let mut merged = serde_json::to_value(RunConfig::defaults_for(experiment)).expect("config serializes");
        merge(&mut merged, user);
        merged["experiment"] = serde_json::to_value(experiment).expect("experiment serializes");
        let cfg: RunConfig = from_value_at(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if let Err(e) = self.vocab.build() {
            return bad("vocab", e.to_string());
        }
        if !(self.zipf_alpha >= 0.0 && self.zipf_alpha.is_finite()) {
            return bad("zipf_alpha", format!("must be a non-negative number, got {}", self.zipf_alpha));
        }
        if let Err(Error::Config { key, message }) = self.train.validate() {
            return bad(&format!("train.{key}"), message);
        }
        if !(self.split.fraction > 0.0 && self.split.fraction <= 1.0) {
            return bad("split.fraction", format!("must lie in (0, 1], got {}", self.split.fraction));
        }
        if !(self.split.eval_fraction > 0.0 && self.split.eval_fraction < 1.0) {
            return bad("split.eval_fraction", format!("must lie in (0, 1), got {}", self.split.eval_fraction));
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must list at least one seed".into());
        }
        if self.strategies.is_empty() && self.experiment != Experiment::Verify {
            return bad("strategies", "must list at least one split".into());
        }
        if self.experiment == Experiment::E2 && self.alphas.is_empty() {
            return bad("alphas", "E2 needs at least one exponent".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return bad("alphas", format!("exponents must be non-negative, got {a}"));
        }
        if self.experiment == Experiment::E3 && self.step_grid.is_empty() {
            return bad("step_grid", "E3 needs at least one budget".into());
        }
        Ok(())
    }
}

fn from_value_at<T: serde::de::DeserializeOwned>(v: Value) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let key = match unknown_field(&inner) {
            Some(field) if path == "." => field,
            _ => path,
        };
        Error::Config { key, message: inner }
    })
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Recursively overlays `patch` onto `base`; objects merge key by key,
/// everything else is replaced.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
