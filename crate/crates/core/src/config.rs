//! Training configuration and its `key = value` (TOML) file format.
//!
//! Every field is optional in the file; omitted keys take the defaults below.
//! Unknown keys are rejected with the list of valid keys.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DenoiserConfig, ScheduleKind};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

/// Which sentences play the summary role during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummarySource {
    /// Greedy ORACLE document sentences.
    Oracle,
    /// The abstractive reference sentences, each aligned to its best-matching
    /// document sentence.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the diffusion loss in the joint objective.
    pub eta: f64,
    /// Weight of the contrastive loss inside the encoder objective.
    pub gamma: f64,
    pub tau: f64,
    /// Disable to train without the matching loss.
    pub use_matching_loss: bool,
    /// L2-normalize rows before contrastive similarities.
    pub normalize_contrastive: bool,
    pub lambda_reg: f64,
    pub summary_source: SummarySource,

    pub diffusion_steps: usize,
    pub schedule: ScheduleKind,

    pub embed_dim: usize,
    pub hash_seed: u64,
    pub hidden_dim: usize,
    pub model_width: usize,
    pub ffn_width: usize,
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub denoiser_layers: usize,
    pub denoiser_heads: usize,
    pub time_dim: usize,
    pub max_positions: usize,
    pub use_positions: bool,
    pub init_std: f64,
    pub dropout: f64,

    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps (checked at step granularity).
    pub max_steps: Option<usize>,
    /// Validate every this many epochs; the final epoch is always validated.
    pub validate_every: usize,
    /// Sentences to extract at validation; per-record reference length when unset.
    pub extract_count: Option<usize>,
    /// ORACLE size cap; falls back to `extract_count`, then reference length.
    pub max_oracle_sentences: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 100.0,
            gamma: 0.001,
            tau: 0.07,
            use_matching_loss: true,
            normalize_contrastive: true,
            lambda_reg: 1e-4,
            summary_source: SummarySource::Oracle,
            diffusion_steps: 500,
            schedule: ScheduleKind::Sqrt,
            embed_dim: 768,
            hash_seed: 101,
            hidden_dim: 128,
            model_width: 768,
            ffn_width: 3072,
            encoder_layers: 8,
            encoder_heads: 12,
            denoiser_layers: 12,
            denoiser_heads: 12,
            time_dim: 128,
            max_positions: 512,
            use_positions: true,
            init_std: 0.02,
            dropout: 0.1,
            lr: 1e-5,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            epochs: 10,
            batch_size: 8,
            seed: 101,
            max_steps: None,
            validate_every: 1,
            extract_count: None,
            max_oracle_sentences: None,
        }
    }
}

pub const VALID_KEYS: &[&str] = &[
    "eta",
    "gamma",
    "tau",
    "use_matching_loss",
    "normalize_contrastive",
    "lambda_reg",
    "summary_source",
    "diffusion_steps",
    "schedule",
    "embed_dim",
    "hash_seed",
    "hidden_dim",
    "model_width",
    "ffn_width",
    "encoder_layers",
    "encoder_heads",
    "denoiser_layers",
    "denoiser_heads",
    "time_dim",
    "max_positions",
    "use_positions",
    "init_std",
    "dropout",
    "lr",
    "weight_decay",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "grad_clip",
    "epochs",
    "batch_size",
    "seed",
    "max_steps",
    "validate_every",
    "extract_count",
    "max_oracle_sentences",
];

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !VALID_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown config key(s) {}; valid keys are: {}",
                unknown.join(", "),
                VALID_KEYS.join(", ")
            )));
        }
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("lr", self.lr),
            ("grad_clip", self.grad_clip),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("eta", self.eta),
            ("gamma", self.gamma),
            ("lambda_reg", self.lambda_reg),
            ("weight_decay", self.weight_decay),
            ("init_std", self.init_std),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        let counts = [
            ("diffusion_steps", self.diffusion_steps),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("validate_every", self.validate_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.extract_count == Some(0) || self.max_oracle_sentences == Some(0) {
            return Err(Error::Config("extract counts must be at least 1".into()));
        }
        self.encoder_config().validate()?;
        self.denoiser_config().validate()
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            input_dim: self.embed_dim,
            layers: self.encoder_layers,
            heads: self.encoder_heads,
            model_width: self.model_width,
            ffn_width: self.ffn_width,
            out_dim: self.hidden_dim,
            dropout: self.dropout,
            max_positions: self.max_positions,
            use_positions: self.use_positions,
            init_std: self.init_std,
        }
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig {
            layers: self.denoiser_layers,
            heads: self.denoiser_heads,
            model_width: self.model_width,
            ffn_width: self.ffn_width,
            io_dim: self.hidden_dim,
            time_dim: self.time_dim,
            dropout: self.dropout,
            max_positions: self.max_positions,
            init_std: self.init_std,
        }
    }

    pub fn oracle_cap(&self, record_summary_len: usize) -> usize {
        self.max_oracle_sentences
            .or(self.extract_count)
            .unwrap_or(record_summary_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = TrainConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(TrainConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(cfg.hidden_dim, 128);
        assert_eq!(cfg.diffusion_steps, 500);
        assert_eq!((cfg.eta, cfg.gamma, cfg.tau), (100.0, 0.001, 0.07));
    }

    #[test]
    fn every_field_is_a_valid_key() {
        let table: toml::Table = TrainConfig {
            max_steps: Some(1),
            extract_count: Some(1),
            max_oracle_sentences: Some(1),
            ..TrainConfig::default()
        }
        .to_toml_string()
        .parse()
        .unwrap();
        let mut keys: Vec<&str> = table.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut valid = VALID_KEYS.to_vec();
        valid.sort_unstable();
        assert_eq!(keys, valid);
    }

    #[test]
    fn partial_file_and_errors() {
        let cfg = TrainConfig::from_toml_str("hidden_dim = 16\nschedule = \"linear\"\n# comment\n").unwrap();
        assert_eq!(cfg.hidden_dim, 16);
        assert_eq!(cfg.schedule, ScheduleKind::Linear);
        assert_eq!(cfg.epochs, 10);

        let err = TrainConfig::from_toml_str("hiden_dim = 16").unwrap_err().to_string();
        assert!(err.contains("hiden_dim") && err.contains("hidden_dim"), "{err}");
        assert!(TrainConfig::from_toml_str("tau = 0.0").is_err());
        assert!(TrainConfig::from_toml_str("model_width = 10\nencoder_heads = 3").is_err());
        assert!(TrainConfig::from_toml_str("schedule = \"cosine\"").is_err());
    }
}
