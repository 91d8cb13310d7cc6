//! The joint model (encoder + denoiser + schedule) and its checkpoint file.
//!
//! Checkpoint layout (`DSCKPT1`), integers little-endian:
//!
//! ```text
//! b"DSCKPT1" | version u32 | config_len u32 | config (TOML, UTF-8)
//! | epoch u32 | has_metrics u8 | [R1 R2 RL mean as f64]
//! | steps u32 | beta_0 f64 | betas f64·steps | posterior_noise u8
//! | param_count u32 | param_count × ( name_len u32 | name | rows u32 | cols u32 | f64·rows·cols )
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::ParamStore;
use crate::config::TrainConfig;
use crate::diffusion::{DenoiserNet, NoiseSchedule};
use crate::encoder::SentenceEncoder;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const CHECKPOINT_MAGIC: &[u8; 7] = b"DSCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct DiffuSumModel {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub encoder: SentenceEncoder,
    pub denoiser: DenoiserNet,
    pub schedule: NoiseSchedule,
}

impl DiffuSumModel {
    /// Freshly initialized parameters drawn from `rng`.
    pub fn new(config: TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let encoder = SentenceEncoder::new(&mut store, config.encoder_config(), rng);
        let denoiser = DenoiserNet::new(&mut store, config.denoiser_config(), rng);
        let schedule = NoiseSchedule::make(config.schedule, config.diffusion_steps)?;
        Ok(Self {
            config,
            store,
            encoder,
            denoiser,
            schedule,
        })
    }

    pub fn with_seed(config: TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::new(config, &mut rng)
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }
}

/// Validation scores recorded with a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub mean_r1_r2: f64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: DiffuSumModel,
    pub epoch: usize,
    pub metrics: Option<ValidationMetrics>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        let cfg = self.model.config.to_toml_string();
        put_u32(&mut out, cfg.len() as u32);
        out.extend_from_slice(cfg.as_bytes());
        put_u32(&mut out, self.epoch as u32);
        match &self.metrics {
            Some(m) => {
                out.push(1);
                for v in [m.rouge1, m.rouge2, m.rouge_l, m.mean_r1_r2] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => out.push(0),
        }
        let sched = &self.model.schedule;
        put_u32(&mut out, sched.steps() as u32);
        out.extend_from_slice(&sched.beta_0().to_le_bytes());
        for b in sched.betas() {
            out.extend_from_slice(&b.to_le_bytes());
        }
        out.push(u8::from(sched.has_posterior_noise()));
        put_u32(&mut out, self.model.store.len() as u32);
        for (_, name, value) in self.model.store.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, value.rows() as u32);
            put_u32(&mut out, value.cols() as u32);
            for v in value.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointFormat("bad magic, expected DSCKPT1".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let cfg_len = r.u32()? as usize;
        let cfg_text =
            std::str::from_utf8(r.take(cfg_len)?).map_err(|_| Error::CheckpointFormat("config is not UTF-8".into()))?;
        let config = TrainConfig::from_toml_str(cfg_text)?;
        let epoch = r.u32()? as usize;
        let metrics = match r.u8()? {
            0 => None,
            1 => Some(ValidationMetrics {
                rouge1: r.f64()?,
                rouge2: r.f64()?,
                rouge_l: r.f64()?,
                mean_r1_r2: r.f64()?,
            }),
            other => return Err(Error::CheckpointFormat(format!("bad metrics flag {other}"))),
        };
        let steps = r.u32()? as usize;
        let beta_0 = r.f64()?;
        let betas = (0..steps).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let posterior_noise = r.u8()? != 0;
        let mut schedule = NoiseSchedule::from_betas(betas, beta_0)?;
        if !posterior_noise {
            schedule = schedule.without_posterior_noise();
        }

        // Rebuild the architecture, then overwrite every parameter by name.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = DiffuSumModel::new(config, &mut rng)?;
        model.schedule = schedule;
        let count = r.u32()? as usize;
        if count != model.store.len() {
            return Err(Error::CheckpointFormat(format!(
                "checkpoint has {count} parameters, architecture expects {}",
                model.store.len()
            )));
        }
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::CheckpointFormat("parameter name is not UTF-8".into()))?
                .to_owned();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let id = model
                .store
                .find(&name)
                .ok_or_else(|| Error::CheckpointFormat(format!("unknown parameter {name}")))?;
            let slot = model.store.get_mut(id);
            if slot.shape() != (rows, cols) {
                return Err(Error::CheckpointFormat(format!(
                    "parameter {name} has shape {rows}x{cols}, expected {:?}",
                    slot.shape()
                )));
            }
            *slot = Matrix::from_vec(rows, cols, data);
        }
        if r.pos != bytes.len() {
            return Err(Error::CheckpointFormat("trailing bytes after parameters".into()));
        }
        Ok(Self { model, epoch, metrics })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CheckpointFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}
