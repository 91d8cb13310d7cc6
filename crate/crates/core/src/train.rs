//! Joint end-to-end optimization of the encoder and the denoiser.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamStore, Var};
use crate::config::{SummarySource, TrainConfig};
use crate::corpus::{greedy_oracle, reference_alignment, DocumentRecord, OracleLabels};
use crate::diffusion::{diffusion_loss_graph, DiffusionNoise, SeqLayout};
use crate::embedding::EmbeddingProvider;
use crate::encoder::{contrastive_labels, contrastive_loss_graph, matching_loss_graph};
use crate::error::{Error, Result};
use crate::extract::validate;
use crate::layers::Dropout;
use crate::model::{Checkpoint, DiffuSumModel, ValidationMetrics};
use crate::tensor::Matrix;

/// One record with its frozen initial embeddings.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub id: String,
    /// `n × d` initial document embeddings.
    pub doc: Matrix,
    /// `m × d` initial embeddings of the summary-side sentences, in slot order.
    pub summary: Matrix,
    pub labels: OracleLabels,
}

impl TrainingExample {
    pub fn n(&self) -> usize {
        self.doc.rows()
    }

    pub fn m(&self) -> usize {
        self.summary.rows()
    }
}

/// Builds training examples. In ORACLE mode the summary side is the ORACLE
/// document sentences (from `labels` when given, otherwise the greedy oracle);
/// in reference mode it is the reference sentences, each aligned to a
/// distinct document sentence.
pub fn prepare_examples(
    records: &[DocumentRecord],
    labels: Option<&[OracleLabels]>,
    provider: &EmbeddingProvider,
    config: &TrainConfig,
) -> Result<Vec<TrainingExample>> {
    if provider.dim() != config.embed_dim {
        return Err(Error::Config(format!(
            "embedding provider produces {}-dim vectors but embed_dim is {}",
            provider.dim(),
            config.embed_dim
        )));
    }
    if let Some(l) = labels {
        if l.len() != records.len() {
            return Err(Error::invalid("one label entry per record is required"));
        }
    }
    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            record.validate()?;
            let doc = provider.embed_document(record)?.to_matrix();
            let (summary, labels) = match config.summary_source {
                SummarySource::Oracle => {
                    let labels = match labels {
                        Some(l) => l[i].clone(),
                        None => greedy_oracle(record, config.oracle_cap(record.summary_sentences.len())),
                    };
                    labels.validate(record.n())?;
                    (doc.select_rows(&labels.alignment), labels)
                }
                SummarySource::Reference => {
                    let labels = reference_alignment(record);
                    let reference = provider.embed_reference(record)?.to_matrix();
                    (reference.slice_rows(0, labels.m()), labels)
                }
            };
            if labels.m() == 0 {
                return Err(Error::invalid(format!("record {:?} has no summary slots", record.id)));
            }
            Ok(TrainingExample {
                id: record.id.clone(),
                doc,
                summary,
                labels,
            })
        })
        .collect()
}

/// Loss components of one batch; the encoder losses are means over records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_match")]
    pub l_match: f64,
    #[serde(rename = "L_contra")]
    pub l_contra: f64,
    #[serde(rename = "L_se")]
    pub l_se: f64,
    #[serde(rename = "L_diff")]
    pub l_diff: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_match, self.l_contra, self.l_se, self.l_diff, self.l_total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The differentiable joint objective of one batch.
pub struct Objective<'p> {
    pub graph: Graph<'p>,
    pub total: Var,
    pub losses: LossBreakdown,
}

/// `L_se + η·L_diff` for a batch, with `L_se = L_match + γ·L_contra`.
/// Randomness (diffusion noise, then dropout) is drawn from `rng`.
pub fn batch_objective<'p>(
    model: &'p DiffuSumModel,
    batch: &[&TrainingExample],
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Objective<'p>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let cfg = &model.config;
    let layout = SeqLayout::new(
        batch.iter().map(|e| e.n()).collect(),
        batch.iter().map(|e| e.m()).collect(),
    );
    let noise = DiffusionNoise::draw(&layout, cfg.hidden_dim, &model.schedule, rng);
    let mut dropout = if training && cfg.dropout > 0.0 {
        Dropout::train(cfg.dropout, rng)
    } else {
        Dropout::eval()
    };

    let mut g = Graph::new(&model.store);
    let docs: Vec<&Matrix> = batch.iter().map(|e| &e.doc).collect();
    let sums: Vec<&Matrix> = batch.iter().map(|e| &e.summary).collect();
    let (d_enc, doc_len) = model.encoder.forward_padded(&mut g, &docs, &mut dropout)?;
    let (s_enc, sum_len) = model.encoder.forward_padded(&mut g, &sums, &mut dropout)?;
    debug_assert_eq!((doc_len, sum_len), (layout.doc_len, layout.sum_len));

    let mut match_terms = Vec::with_capacity(batch.len());
    let mut contra_terms = Vec::with_capacity(batch.len());
    for (b, ex) in batch.iter().enumerate() {
        let h_doc = g.slice_rows(d_enc, b * doc_len, ex.n());
        let h_sum = g.slice_rows(s_enc, b * sum_len, ex.m());
        match_terms.push(matching_loss_graph(&mut g, h_sum, h_doc, &ex.labels.alignment)?);
        let h_in = g.concat_rows(&[h_doc, h_sum]);
        let y = contrastive_labels(ex.n(), ex.m(), &ex.labels.alignment)?;
        contra_terms.push(contrastive_loss_graph(
            &mut g,
            h_in,
            &y,
            cfg.tau,
            cfg.normalize_contrastive,
        )?);
    }
    let inv = 1.0 / batch.len() as f64;
    let l_match = sum_vars(&mut g, &match_terms);
    let l_match = g.scale(l_match, inv);
    let l_contra = sum_vars(&mut g, &contra_terms);
    let l_contra = g.scale(l_contra, inv);
    let contra_weighted = g.scale(l_contra, cfg.gamma);
    let l_se = if cfg.use_matching_loss {
        g.add(l_match, contra_weighted)
    } else {
        contra_weighted
    };

    // H_in in the diffusion layout; padded rows point at zero (masked) rows.
    let both = g.concat_rows(&[d_enc, s_enc]);
    let s_offset = batch.len() * doc_len;
    let idx: Vec<usize> = (0..layout.rows())
        .map(|r| {
            let (b, off) = (r / layout.seq_len(), r % layout.seq_len());
            if off < doc_len {
                b * doc_len + off
            } else {
                s_offset + b * sum_len + off - doc_len
            }
        })
        .collect();
    let h_in = g.gather_rows(both, idx);
    let terms = diffusion_loss_graph(
        &mut g,
        &model.denoiser,
        h_in,
        &layout,
        &model.schedule,
        &noise,
        cfg.lambda_reg,
        &mut dropout,
    );
    let weighted_diff = g.scale(terms.total, cfg.eta);
    let total = g.add(l_se, weighted_diff);

    let losses = LossBreakdown {
        l_match: g.value(l_match).item(),
        l_contra: g.value(l_contra).item(),
        l_se: g.value(l_se).item(),
        l_diff: g.value(terms.total).item(),
        l_total: g.value(total).item(),
    };
    Ok(Objective {
        graph: g,
        total,
        losses,
    })
}

fn sum_vars(g: &mut Graph, vars: &[Var]) -> Var {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = g.add(acc, v);
    }
    acc
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.as_mut_slice().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// Adam with decoupled weight decay. Decay skips vectors (biases, norm gains).
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(store: &ParamStore, config: &TrainConfig) -> Self {
        let zeros: Vec<Matrix> = store
            .iter()
            .map(|(_, _, p)| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            lr: config.lr,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) {
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, param) in store.values_mut().iter_mut().enumerate() {
            let decay = if param.rows() > 1 { self.weight_decay } else { 0.0 };
            let g = grads[k].as_slice();
            let m = self.m[k].as_mut_slice();
            let v = self.v[k].as_mut_slice();
            for (i, p) in param.as_mut_slice().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                *p -= self.lr * (update + decay * *p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub metrics: Option<ValidationMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the highest validation mean(R1, R2); ties keep the
    /// earlier epoch.
    pub best: Checkpoint,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

/// Groups examples of similar total length into batches.
pub fn bucket_batches(examples: &[TrainingExample], batch_size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by_key(|&i| (examples[i].n() + examples[i].m(), i));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Trains from a fresh initialization seeded by `config.seed`. `on_step` sees
/// every step log as it is produced.
pub fn train(
    config: &TrainConfig,
    train_examples: &[TrainingExample],
    val_records: &[DocumentRecord],
    provider: &EmbeddingProvider,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_examples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if val_records.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = DiffuSumModel::new(config.clone(), &mut rng)?;
    let mut optimizer = AdamW::new(&model.store, config);
    let mut batches = bucket_batches(train_examples, config.batch_size);
    let provider_digest = provider.fingerprint();

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut step = 0usize;
    'epochs: for epoch in 1..=config.epochs {
        batches.shuffle(&mut rng);
        let mut epoch_steps = 0;
        let mut stop = false;
        for batch in &batches {
            if config.max_steps.is_some_and(|max| step >= max) {
                stop = true;
                break;
            }
            let refs: Vec<&TrainingExample> = batch.iter().map(|&i| &train_examples[i]).collect();
            let objective = batch_objective(&model, &refs, &mut rng, true)?;
            step += 1;
            let losses = objective.losses;
            let divergence = || Error::Divergence {
                step,
                l_match: losses.l_match,
                l_contra: losses.l_contra,
                l_diff: losses.l_diff,
            };
            if !losses.is_finite() {
                return Err(divergence());
            }
            let mut grads = objective.graph.backward(objective.total).into_param_grads(&model.store);
            drop(objective);
            if !clip_grad_norm(&mut grads, config.grad_clip).is_finite() {
                return Err(divergence());
            }
            optimizer.step(&mut model.store, &grads);
            epoch_steps += 1;

            let log = StepLog { step, epoch, losses };
            log::debug!("step {step} L_total={:.6}", losses.l_total);
            on_step(&log);
            steps.push(log);
        }
        let last = epoch == config.epochs || stop || config.max_steps.is_some_and(|max| step >= max);
        let metrics = if epoch % config.validate_every == 0 || last {
            let metrics = validate(&model, val_records, provider, config.extract_count, config.seed)?;
            log::info!(
                "epoch {epoch}: R1={:.4} R2={:.4} RL={:.4} mean={:.4}",
                metrics.rouge1,
                metrics.rouge2,
                metrics.rouge_l,
                metrics.mean_r1_r2
            );
            let improves = best
                .as_ref()
                .and_then(|b| b.metrics)
                .is_none_or(|b| metrics.mean_r1_r2 > b.mean_r1_r2);
            if improves {
                best = Some(Checkpoint {
                    model: model.clone(),
                    epoch,
                    metrics: Some(metrics),
                });
            }
            Some(metrics)
        } else {
            None
        };
        epochs.push(EpochLog {
            epoch,
            steps: epoch_steps,
            metrics,
        });
        if last {
            break 'epochs;
        }
    }
    if provider.fingerprint() != provider_digest {
        return Err(Error::invalid("embedding provider changed during training"));
    }
    Ok(TrainOutcome {
        best: best.expect("final epoch is always validated"),
        steps,
        epochs,
    })
}
