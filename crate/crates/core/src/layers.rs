//! Parameterized building blocks shared by the encoder and the denoiser.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::tensor::Matrix;

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    if std == 0.0 {
        return Matrix::zeros(rows, cols);
    }
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

pub fn standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    gaussian(rng, rows, cols, 1.0)
}

/// Inverted dropout. Inactive when no rng is attached or `p == 0`.
pub struct Dropout<'r> {
    p: f64,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> Dropout<'r> {
    pub fn train(p: f64, rng: &'r mut ChaCha8Rng) -> Self {
        Self { p, rng: Some(rng) }
    }

    pub fn eval() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        let p = self.p;
        let Some(rng) = self.rng.as_deref_mut() else { return x };
        if p <= 0.0 {
            return x;
        }
        let (r, c) = g.value(x).shape();
        let keep = 1.0 / (1.0 - p);
        let mask = Matrix::from_vec(
            r,
            c,
            (0..r * c)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect(),
        );
        g.mul_const(x, mask)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w: store.add(format!("{name}.weight"), gaussian(rng, fan_in, fan_out, std)),
            b: store.add(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        g.linear(x, self.w, self.b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, width, 1.0)),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, width)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Shape of a transformer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackShape {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub ffn_width: usize,
}

/// Pre-norm transformer block: `x + attn(ln(x))`, then `x + ffn(ln(x))`.
#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
pub struct TransformerStack {
    shape: StackShape,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
}

impl TransformerStack {
    pub fn new(store: &mut ParamStore, name: &str, shape: StackShape, std: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!(
            shape.heads > 0 && shape.width.is_multiple_of(shape.heads),
            "width must be divisible by heads"
        );
        let w = shape.width;
        let blocks = (0..shape.layers)
            .map(|i| {
                let p = format!("{name}.layers.{i}");
                Block {
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), w),
                    q: Linear::new(store, &format!("{p}.attn.q"), w, w, std, rng),
                    k: Linear::new(store, &format!("{p}.attn.k"), w, w, std, rng),
                    v: Linear::new(store, &format!("{p}.attn.v"), w, w, std, rng),
                    o: Linear::new(store, &format!("{p}.attn.o"), w, w, std, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), w),
                    ff1: Linear::new(store, &format!("{p}.ffn.0"), w, shape.ffn_width, std, rng),
                    ff2: Linear::new(store, &format!("{p}.ffn.1"), shape.ffn_width, w, std, rng),
                }
            })
            .collect();
        Self {
            shape,
            blocks,
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), w),
        }
    }

    /// `x` holds `rows / seq_len` sequences stacked as row blocks.
    pub fn forward(&self, g: &mut Graph, mut x: Var, seq_len: usize, key_mask: &[bool], dropout: &mut Dropout) -> Var {
        for blk in &self.blocks {
            let a = blk.ln1.forward(g, x);
            let q = blk.q.forward(g, a);
            let k = blk.k.forward(g, a);
            let v = blk.v.forward(g, a);
            let att = g.attention(q, k, v, self.shape.heads, seq_len, key_mask.to_vec());
            let att = blk.o.forward(g, att);
            let att = dropout.apply(g, att);
            x = g.add(x, att);
            let a = blk.ln2.forward(g, x);
            let f = blk.ff1.forward(g, a);
            let f = g.gelu(f);
            let f = blk.ff2.forward(g, f);
            let f = dropout.apply(g, f);
            x = g.add(x, f);
        }
        self.final_norm.forward(g, x)
    }
}

/// Constant matrix with 1.0 on unmasked rows and 0.0 on padded rows.
pub fn row_mask_matrix(mask: &[bool], cols: usize) -> Matrix {
    let mut m = Matrix::zeros(mask.len(), cols);
    for (i, &keep) in mask.iter().enumerate() {
        if keep {
            m.row_mut(i).fill(1.0);
        }
    }
    m
}
