use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::vocab::DEFAULT_SAMPLER_POWER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Predict each context word from the center word.
    #[serde(rename = "sg")]
    SkipGram,
    /// Predict the center word from the averaged context.
    Cbow,
}

impl ModelKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelKind::SkipGram => 0.025,
            ModelKind::Cbow => 0.05,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SkipGram => "sg",
            ModelKind::Cbow => "cbow",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sg" | "skipgram" | "skip-gram" => Ok(ModelKind::SkipGram),
            "cbow" => Ok(ModelKind::Cbow),
            other => Err(format!("unknown model {other:?}, expected sg or cbow")),
        }
    }
}

/// How the logistic function is evaluated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmoidMode {
    /// Argument clamped to [-6, 6] and looked up in a 1000-entry table.
    #[default]
    Table,
    /// Exact math; used by gradient checks.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    /// The learning rate never decays below `initial_lr * lr_floor_fraction`.
    pub lr_floor_fraction: f64,
    pub seed: u64,
    pub workers: usize,
    /// Frequent-word subsampling threshold; `None` disables subsampling.
    #[serde(default)]
    pub subsample: Option<f64>,
    #[serde(default = "default_power")]
    pub sampler_power: f64,
    #[serde(default)]
    pub sigmoid: SigmoidMode,
}

fn default_power() -> f64 {
    DEFAULT_SAMPLER_POWER
}

impl TrainingConfig {
    pub fn new(model: ModelKind) -> Self {
        TrainingConfig {
            model,
            dim: 100,
            window: 5,
            min_count: 5,
            negatives: 5,
            epochs: 5,
            initial_lr: model.default_learning_rate(),
            lr_floor_fraction: 1e-4,
            seed: 1,
            workers: 1,
            subsample: None,
            sampler_power: DEFAULT_SAMPLER_POWER,
            sigmoid: SigmoidMode::Table,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("dim must be >= 1");
        }
        if self.window == 0 {
            problems.push("window must be >= 1");
        }
        if self.negatives == 0 {
            problems.push("negatives must be >= 1");
        }
        if self.min_count == 0 {
            problems.push("min_count must be >= 1");
        }
        if self.epochs == 0 {
            problems.push("epochs must be >= 1");
        }
        if self.workers == 0 {
            problems.push("workers must be >= 1");
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            problems.push("initial_lr must be a positive finite number");
        }
        if !(self.lr_floor_fraction > 0.0 && self.lr_floor_fraction <= 1.0) {
            problems.push("lr_floor_fraction must lie in (0, 1]");
        }
        if !(self.sampler_power.is_finite() && self.sampler_power >= 0.0) {
            problems.push("sampler_power must be finite and >= 0");
        }
        if let Some(t) = self.subsample {
            if !(t.is_finite() && t > 0.0) {
                problems.push("subsample threshold must be positive");
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join("; "))
        }
    }

    /// Identifier in fixed key order, e.g. `sg-d500-w5-m5-n10`.
    pub fn config_id(&self) -> String {
        format!(
            "{}-d{}-w{}-m{}-n{}",
            self.model, self.dim, self.window, self.min_count, self.negatives
        )
    }
}
