//! Contrastive sentence encoding: contextualizes frozen initial sentence
//! vectors and defines the matching and supervised contrastive losses.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::corpus::OracleLabels;
use crate::error::{Error, Result};
use crate::layers::{gaussian, row_mask_matrix, Dropout, Linear, StackShape, TransformerStack};
use crate::tensor::{softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub model_width: usize,
    pub ffn_width: usize,
    pub out_dim: usize,
    pub dropout: f64,
    pub max_positions: usize,
    pub use_positions: bool,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 768,
            layers: 8,
            heads: 12,
            model_width: 768,
            ffn_width: 4 * 768,
            out_dim: 128,
            dropout: 0.1,
            max_positions: 512,
            use_positions: true,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.model_width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "encoder width {} is not divisible by {} heads",
                self.model_width, self.heads
            )));
        }
        if self.out_dim == 0 || self.input_dim == 0 || self.max_positions == 0 {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// `MLP(Transformer(lift(e) + pos))`, applied independently per sequence.
#[derive(Debug, Clone)]
pub struct SentenceEncoder {
    pub config: EncoderConfig,
    lift: Linear,
    positions: ParamId,
    stack: TransformerStack,
    proj_hidden: Linear,
    proj_out: Linear,
}

impl SentenceEncoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let std = config.init_std;
        let w = config.model_width;
        let lift = Linear::new(store, "encoder.lift", config.input_dim, w, std, rng);
        let positions = store.add("encoder.positions", gaussian(rng, config.max_positions, w, std));
        let stack = TransformerStack::new(
            store,
            "encoder",
            StackShape {
                layers: config.layers,
                heads: config.heads,
                width: w,
                ffn_width: config.ffn_width,
            },
            std,
            rng,
        );
        let proj_hidden = Linear::new(store, "encoder.proj.0", w, w, std, rng);
        let proj_out = Linear::new(store, "encoder.proj.1", w, config.out_dim, std, rng);
        Self {
            config,
            lift,
            positions,
            stack,
            proj_hidden,
            proj_out,
        }
    }

    /// `input` is (batch·seq_len × input_dim); padded rows (mask false) are
    /// excluded from attention and zero in the output.
    pub fn forward(&self, g: &mut Graph, input: Var, seq_len: usize, row_mask: &[bool], dropout: &mut Dropout) -> Var {
        let rows = g.value(input).rows();
        let mut x = self.lift.forward(g, input);
        if self.config.use_positions {
            let table = g.param(self.positions);
            let idx: Vec<usize> = (0..rows).map(|r| r % seq_len).collect();
            let pos = g.gather_rows(table, idx);
            x = g.add(x, pos);
        }
        let x = dropout.apply(g, x);
        let x = self.stack.forward(g, x, seq_len, row_mask, dropout);
        let x = self.proj_hidden.forward(g, x);
        let x = g.gelu(x);
        let x = self.proj_out.forward(g, x);
        g.mul_const(x, row_mask_matrix(row_mask, self.config.out_dim))
    }

    /// Pads `seqs` to a common length and encodes them as one batch.
    /// Returns the stacked output and the padded length.
    pub fn forward_padded(&self, g: &mut Graph, seqs: &[&Matrix], dropout: &mut Dropout) -> Result<(Var, usize)> {
        let seq_len = seqs.iter().map(|s| s.rows()).max().unwrap_or(0);
        if seq_len == 0 {
            return Err(Error::invalid("encoder input has no rows"));
        }
        if seq_len > self.config.max_positions {
            return Err(Error::invalid(format!(
                "sequence of {seq_len} sentences exceeds max_positions {}",
                self.config.max_positions
            )));
        }
        let d = self.config.input_dim;
        let mut input = Matrix::zeros(seqs.len() * seq_len, d);
        let mut mask = vec![false; seqs.len() * seq_len];
        for (b, s) in seqs.iter().enumerate() {
            if s.cols() != d {
                return Err(Error::invalid(format!(
                    "initial embeddings have width {} but the encoder expects {d}",
                    s.cols()
                )));
            }
            if !s.is_finite() {
                return Err(Error::NonFinite("encoder input".into()));
            }
            for i in 0..s.rows() {
                input.row_mut(b * seq_len + i).copy_from_slice(s.row(i));
                mask[b * seq_len + i] = true;
            }
        }
        let input = g.constant(input);
        Ok((self.forward(g, input, seq_len, &mask, dropout), seq_len))
    }

    /// Evaluation-mode encoding of one sequence. `pad_mask[i] == true` marks a
    /// real row; padded rows come back as zeros.
    pub fn encode(&self, store: &ParamStore, initial: &Matrix, pad_mask: &[bool]) -> Result<Matrix> {
        if initial.cols() != self.config.input_dim {
            return Err(Error::invalid(format!(
                "initial embeddings have width {} but the encoder expects {}",
                initial.cols(),
                self.config.input_dim
            )));
        }
        if pad_mask.len() != initial.rows() || !pad_mask.iter().any(|&m| m) {
            return Err(Error::invalid("pad mask must cover every row and keep at least one"));
        }
        if !initial.is_finite() {
            return Err(Error::NonFinite("encoder input".into()));
        }
        if initial.rows() > self.config.max_positions {
            return Err(Error::invalid("sequence exceeds max_positions"));
        }
        let mut g = Graph::new(store);
        let x = g.constant(initial.clone());
        let out = self.forward(&mut g, x, initial.rows(), pad_mask, &mut Dropout::eval());
        Ok(g.value(out).clone())
    }

    pub fn encode_all(&self, store: &ParamStore, initial: &Matrix) -> Result<Matrix> {
        self.encode(store, initial, &vec![true; initial.rows()])
    }
}

/// `softmax(h · H_docᵀ)`: the distribution over document sentences for one
/// summary-side representation.
pub fn matching_scores(query: &[f64], h_doc: &Matrix) -> Vec<f64> {
    assert_eq!(query.len(), h_doc.cols(), "matching dimension mismatch");
    let logits: Vec<f64> = (0..h_doc.rows())
        .map(|i| Matrix::dot_rows(query, h_doc.row(i)))
        .collect();
    softmax(&logits)
}

/// Σ_j CrossEntropy(one_hot(alignment[j]), softmax(h_sum_j · H_docᵀ)).
pub fn matching_loss_graph(g: &mut Graph, h_sum: Var, h_doc: Var, alignment: &[usize]) -> Result<Var> {
    let n = g.value(h_doc).rows();
    let m = g.value(h_sum).rows();
    if alignment.len() != m {
        return Err(Error::invalid(format!(
            "{} alignment entries for {m} summary rows",
            alignment.len()
        )));
    }
    if let Some(&bad) = alignment.iter().find(|&&a| a >= n) {
        return Err(Error::invalid(format!("alignment index {bad} out of range for n={n}")));
    }
    let logits = g.matmul_t(h_sum, false, h_doc, true);
    let logp = g.log_softmax_rows(logits, None);
    let entries = alignment.iter().enumerate().map(|(j, &a)| (j * n + a, -1.0)).collect();
    Ok(g.weighted_sum(logp, entries))
}

pub fn matching_loss(h_sum: &Matrix, h_doc: &Matrix, labels: &OracleLabels) -> Result<f64> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let s = g.constant(h_sum.clone());
    let d = g.constant(h_doc.clone());
    let l = matching_loss_graph(&mut g, s, d, &labels.alignment)?;
    Ok(g.value(l).item())
}

/// Per-position class labels over the concatenation `H_doc ‖ H_sum`:
/// summary slot `q` (1-based) and its aligned document sentence share label
/// `q`; every other position is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveLabels(pub Vec<usize>);

pub fn contrastive_labels(n: usize, m: usize, alignment: &[usize]) -> Result<ContrastiveLabels> {
    if alignment.len() != m {
        return Err(Error::invalid("alignment length differs from m"));
    }
    let mut y = vec![0usize; n + m];
    for (j, &p) in alignment.iter().enumerate() {
        if p >= n || y[p] != 0 {
            return Err(Error::invalid(format!("invalid alignment entry {p}")));
        }
        y[p] = j + 1;
        y[n + j] = j + 1;
    }
    Ok(ContrastiveLabels(y))
}

/// Every labelled class has exactly two members, so the outer normalizer
/// −1/(2N−1) is −1/3.
const CONTRASTIVE_NORM: f64 = 1.0 / 3.0;

/// Multi-class supervised contrastive loss over the rows of `h_in`.
/// Label-0 rows are never anchors but stay in every denominator.
pub fn contrastive_loss_graph(
    g: &mut Graph,
    h_in: Var,
    labels: &ContrastiveLabels,
    tau: f64,
    normalize: bool,
) -> Result<Var> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let rows = g.value(h_in).rows();
    if labels.0.len() != rows {
        return Err(Error::invalid("contrastive label length differs from row count"));
    }
    let z = if normalize { g.l2_normalize_rows(h_in) } else { h_in };
    let sim = g.matmul_t(z, false, z, true);
    let logits = g.scale(sim, 1.0 / tau);
    let mut mask = vec![true; rows * rows];
    for p in 0..rows {
        mask[p * rows + p] = false;
    }
    let logp = g.log_softmax_rows(logits, Some(mask));
    let y = &labels.0;
    let mut entries = Vec::new();
    for p in (0..rows).filter(|&p| y[p] != 0) {
        for q in (0..rows).filter(|&q| q != p && y[q] == y[p]) {
            entries.push((p * rows + q, -CONTRASTIVE_NORM));
        }
    }
    Ok(g.weighted_sum(logp, entries))
}

pub fn contrastive_loss(h_in: &Matrix, labels: &ContrastiveLabels, tau: f64, normalize: bool) -> Result<f64> {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let h = g.constant(h_in.clone());
    let l = contrastive_loss_graph(&mut g, h, labels, tau, normalize)?;
    Ok(g.value(l).item())
}

/// `L_match + γ·L_contra`.
pub fn encoder_objective(l_match: f64, l_contra: f64, gamma: f64) -> f64 {
    l_match + gamma * l_contra
}
