use std::path::{Path, PathBuf};

use fmmnn::{
    count_params, AdamConfig, InitMode, LrSchedule, ModelKind, ModelSpec, Precision, SampleMode,
    Target, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One experiment: target, model, data and optimizer, all seeded from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: Target,
    pub model: ModelSpec,
    #[serde(default)]
    pub init: InitMode,
    pub data: DataConfig,
    pub training: TrainingConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Number of training points; per axis for grid sampling.
    pub train_n: usize,
    pub test_n: usize,
    #[serde(default = "uniform")]
    pub sampling: SampleMode,
}

fn uniform() -> SampleMode {
    SampleMode::UniformRandom
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub adam: AdamConfig,
}

// Independent seed streams derived from the single config seed.
const TRAIN_DATA_STREAM: u64 = 0x7472_6169_6e00;
const TEST_DATA_STREAM: u64 = 0x7465_7374_0000;

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config {
                field: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            field: "<file>".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.precision {
            self.training.precision = p;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, message: String| CliError::Config {
            field: field.into(),
            message,
        };
        if self.model.input_dim != self.target.dim() {
            return Err(bad(
                "model.input_dim",
                format!(
                    "{} takes {} inputs, model has {}",
                    self.target,
                    self.target.dim(),
                    self.model.input_dim
                ),
            ));
        }
        if self.model.output_dim != 1 {
            return Err(bad("model.output_dim", "targets are scalar".into()));
        }
        count_params(&self.model).map_err(|e| bad("model", e.to_string()))?;
        if self.data.train_n == 0 {
            return Err(bad("data.train_n", "must be >= 1".into()));
        }
        if self.data.test_n == 0 {
            return Err(bad("data.test_n", "must be >= 1".into()));
        }
        if self.training.batch_size == 0 {
            return Err(bad("training.batch_size", "must be >= 1".into()));
        }
        self.train_config()
            .validate()
            .map_err(|e| bad("training", e.to_string()))?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            schedule: self.training.schedule,
            seed: self.seed,
            precision: self.training.precision,
            adam: self.training.adam,
        }
    }

    pub fn train_data_seed(&self) -> u64 {
        self.seed ^ TRAIN_DATA_STREAM
    }

    pub fn test_data_seed(&self) -> u64 {
        self.seed ^ TEST_DATA_STREAM
    }

    /// Reduced-scale protocol of the one-dimensional high-frequency runs.
    pub fn example(kind: ModelKind) -> Self {
        let act = fmmnn::ActivationKind::Sine;
        let model = match kind {
            ModelKind::Fcnn => ModelSpec::fcnn(64, 4, act),
            ModelKind::Resmmnn => ModelSpec::resmmnn(128, 16, 4, act),
            ModelKind::Mmnn => ModelSpec::mmnn(128, 16, 4, act),
        };
        Self {
            target: Target::S32F1,
            model,
            init: InitMode::Default,
            data: DataConfig {
                train_n: 20_000,
                test_n: 5_000,
                sampling: SampleMode::UniformRandom,
            },
            training: TrainingConfig {
                epochs: 300,
                batch_size: 600,
                schedule: LrSchedule {
                    base: 1e-3,
                    decay: 0.9,
                    step: 30,
                },
                precision: Precision::F64,
                adam: AdamConfig::default(),
            },
            seed: 0,
            out: None,
        }
    }
}
