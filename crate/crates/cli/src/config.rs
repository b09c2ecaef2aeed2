//! Flat JSON run configuration. Every key is optional; command-line flags
//! override file values, which override the built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use traceformer::error::{Error, Result};
use traceformer::event_log::CsvFormat;
use traceformer::model::ModelConfig;
use traceformer::pos_encoding::{PeConfig, PeMode};
use traceformer::synthgen::SynthConfig;
use traceformer::training::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,

    // model
    pub d_model: Option<usize>,
    pub hidden: Option<usize>,
    pub heads: Option<usize>,
    pub layers: Option<usize>,
    pub dropout: Option<f64>,
    pub ffn_in_blocks: Option<bool>,
    pub pe: Option<String>,
    pub spe_k: Option<usize>,

    // training
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub step_epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub n_fits: Option<usize>,

    // synthetic data
    pub n_types: Option<usize>,
    pub activities_per_type: Option<usize>,
    pub n_traces: Option<usize>,
    pub len_min: Option<usize>,
    pub len_max: Option<usize>,
    pub len_mean: Option<f64>,
    pub len_std: Option<f64>,
    pub temperature: Option<f64>,

    // event-log columns
    pub case_column: Option<String>,
    pub activity_column: Option<String>,
    pub order_column: Option<String>,

    // tuning
    pub budget: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Param(format!("config {}: {e}", path.display())))
    }

    /// Later values win; `None` never overrides.
    pub fn overlaid(mut self, over: RunConfig) -> RunConfig {
        macro_rules! merge {
            ($($field:ident),* $(,)?) => {
                $(if over.$field.is_some() { self.$field = over.$field; })*
            };
        }
        merge!(
            seed,
            d_model,
            hidden,
            heads,
            layers,
            dropout,
            ffn_in_blocks,
            pe,
            spe_k,
            lr,
            gamma,
            step_epochs,
            weight_decay,
            epochs,
            batch_size,
            patience,
            n_fits,
            n_types,
            activities_per_type,
            n_traces,
            len_min,
            len_max,
            len_mean,
            len_std,
            temperature,
            case_column,
            activity_column,
            order_column,
            budget,
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    pub fn n_fits(&self) -> usize {
        self.n_fits.unwrap_or(10)
    }

    pub fn pe_mode(&self) -> Result<PeMode> {
        self.pe.as_deref().map_or(Ok(PeMode::None), PeMode::parse)
    }

    pub fn csv_format(&self) -> CsvFormat {
        let defaults = CsvFormat::default();
        CsvFormat {
            case_column: self.case_column.clone().unwrap_or(defaults.case_column),
            activity_column: self
                .activity_column
                .clone()
                .unwrap_or(defaults.activity_column),
            order_column: self.order_column.clone().unwrap_or(defaults.order_column),
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let defaults = ModelConfig::new(vocab_size);
        let config = ModelConfig {
            d_model: self.d_model.unwrap_or(defaults.d_model),
            hidden: self.hidden.unwrap_or(defaults.hidden),
            heads: self.heads.unwrap_or(defaults.heads),
            layers: self.layers.unwrap_or(defaults.layers),
            dropout: self.dropout.unwrap_or(defaults.dropout),
            vocab_size,
            pe: PeConfig {
                mode: self.pe_mode()?,
                spe_k: self.spe_k.unwrap_or(PeConfig::default().spe_k),
            },
            ffn_in_blocks: self.ffn_in_blocks.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let defaults = TrainConfig::default();
        let config = TrainConfig {
            lr: self.lr.unwrap_or(defaults.lr),
            gamma: self.gamma.unwrap_or(defaults.gamma),
            step_epochs: self.step_epochs.unwrap_or(defaults.step_epochs),
            weight_decay: self.weight_decay.unwrap_or(defaults.weight_decay),
            beta1: defaults.beta1,
            beta2: defaults.beta2,
            eps: defaults.eps,
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            patience: self.patience.unwrap_or(defaults.patience),
            seed: self.seed(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let defaults = SynthConfig::default();
        let config = SynthConfig {
            n_types: self.n_types.unwrap_or(defaults.n_types),
            activities_per_type: self
                .activities_per_type
                .unwrap_or(defaults.activities_per_type),
            n_traces: self.n_traces.unwrap_or(defaults.n_traces),
            len_min: self.len_min.unwrap_or(defaults.len_min),
            len_max: self.len_max.unwrap_or(defaults.len_max),
            len_mean: self.len_mean.unwrap_or(defaults.len_mean),
            len_std: self.len_std.unwrap_or(defaults.len_std),
            temperature: self.temperature.unwrap_or(defaults.temperature),
            seed: self.seed(),
        };
        config.validate()?;
        Ok(config)
    }
}
