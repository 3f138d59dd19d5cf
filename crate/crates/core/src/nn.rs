//! Differentiable layers built on [`Graph`].

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Matrix;

/// Glorot-uniform scale for an `fan_in x fan_out` weight.
pub fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Letter-case features: first alphabetic char uppercase, all alphabetic
/// chars uppercase (with at least one), any char uppercase.
pub fn case_vector(token: &str) -> [f64; 3] {
    let first_upper = token
        .chars()
        .find(|c| c.is_alphabetic())
        .is_some_and(char::is_uppercase);
    let mut alphabetic = token.chars().filter(|c| c.is_alphabetic()).peekable();
    let all_upper = alphabetic.peek().is_some() && alphabetic.all(char::is_uppercase);
    let any_upper = token.chars().any(char::is_uppercase);
    [first_upper, all_upper, any_upper].map(|b| if b { 1.0 } else { 0.0 })
}

pub fn case_matrix<S: AsRef<str>>(tokens: &[S]) -> Matrix {
    let mut m = Matrix::zeros(tokens.len(), 3);
    for (i, t) in tokens.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&case_vector(t.as_ref()));
    }
    m
}

/// Inverted dropout. Identity when `rate` is zero or `rng` is `None` (eval mode).
pub fn dropout(g: &mut Graph<'_>, x: Var, rate: f64, rng: Option<&mut dyn rand::RngCore>) -> Var {
    let Some(rng) = rng else { return x };
    if rate <= 0.0 {
        return x;
    }
    let (r, c) = g.shape(x);
    let keep = 1.0 - rate;
    let data = (0..r * c)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = g.constant(Matrix::from_vec(r, c, data));
    g.mul(x, mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedding {
    pub table: ParamId,
}

impl Embedding {
    /// Entries uniform in `(-0.1, 0.1)`.
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Embedding {
            table: store.add(format!("{name}.table"), Matrix::uniform(vocab, dim, 0.1, rng)),
        }
    }

    pub fn lookup(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        let rows = g.store().values(self.table).rows();
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::OutOfRange {
                what: "embedding id",
                index: bad,
                size: rows,
            });
        }
        let t = g.param(self.table);
        Ok(g.gather(t, ids))
    }

    /// Row `i` is `table[ids[i]]` followed by the case vector of token `i`.
    pub fn embed(&self, g: &mut Graph<'_>, ids: &[usize], cases: &Matrix) -> Result<Var> {
        if cases.rows() != ids.len() || cases.cols() != 3 {
            return Err(Error::shape(
                "embed",
                format!("case matrix {:?} for {} ids", cases.shape(), ids.len()),
            ));
        }
        let e = self.lookup(g, ids)?;
        let c = g.constant(cases.clone());
        Ok(g.concat_cols(&[e, c]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: store.add(format!("{name}.w"), Matrix::uniform(input, output, glorot(input, output), rng)),
            b: store.add(format!("{name}.b"), Matrix::zeros(1, output)),
        }
    }

    pub fn dims(&self, store: &ParamStore) -> (usize, usize) {
        store.values(self.w).shape()
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (input, _) = self.dims(g.store());
        if g.shape(x).1 != input {
            return Err(Error::shape(
                "linear",
                format!("input width {} but weight expects {input}", g.shape(x).1),
            ));
        }
        let w = g.param(self.w);
        let b = g.param(self.b);
        Ok(g.linear(x, w, b))
    }
}

/// Per-position class logits.
pub fn linear_project(g: &mut Graph<'_>, f: Var, layer: &Linear) -> Result<Var> {
    layer.forward(g, f)
}

/// LSTM cell with gate blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let wx = store.add(
            format!("{name}.wx"),
            Matrix::uniform(input, 4 * hidden, glorot(input, hidden), rng),
        );
        let wh = store.add(
            format!("{name}.wh"),
            Matrix::uniform(hidden, 4 * hidden, glorot(hidden, hidden), rng),
        );
        let mut bias = Matrix::zeros(1, 4 * hidden);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), bias);
        Lstm { wx, wh, b, hidden }
    }

    /// Hidden state after each position, `n x hidden`.
    pub fn run(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let b = g.param(self.b);
        let pre = g.linear(x, wx, b);
        g.lstm_seq(pre, wh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            forward: Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng),
            backward: Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }
}

/// Row `i` is the forward state after `i` followed by the backward state
/// after reading from the end down to `i`.
pub fn birnn_encode(g: &mut Graph<'_>, x: Var, layer: &BiLstm) -> Result<Var> {
    let (n, width) = g.shape(x);
    let expected = g.store().values(layer.forward.wx).rows();
    if width != expected {
        return Err(Error::shape(
            "birnn_encode",
            format!("input width {width} but cell expects {expected}"),
        ));
    }
    let fwd = layer.forward.run(g, x);
    if n == 0 {
        let bwd = layer.backward.run(g, x);
        return Ok(g.concat_cols(&[fwd, bwd]));
    }
    let rev: Vec<usize> = (0..n).rev().collect();
    let xr = g.gather(x, &rev);
    let bwd_rev = layer.backward.run(g, xr);
    let bwd = g.gather(bwd_rev, &rev);
    Ok(g.concat_cols(&[fwd, bwd]))
}

/// One set of co-attention scoring weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionScorer {
    pub w_h: ParamId,
    pub w_h2: ParamId,
    pub b_h2: ParamId,
    pub w_p: ParamId,
    pub b_p: ParamId,
}

impl AttentionScorer {
    fn new(store: &mut ParamStore, name: &str, d: usize, d2: usize, k: usize, rng: &mut impl Rng) -> Self {
        AttentionScorer {
            w_h: store.add(format!("{name}.w_h"), Matrix::uniform(d, k, glorot(d, k), rng)),
            w_h2: store.add(format!("{name}.w_h2"), Matrix::uniform(d2, k, glorot(d2, k), rng)),
            b_h2: store.add(format!("{name}.b_h2"), Matrix::zeros(1, k)),
            w_p: store.add(format!("{name}.w_p"), Matrix::uniform(2 * k, 1, glorot(2 * k, 1), rng)),
            b_p: store.add(format!("{name}.b_p"), Matrix::zeros(1, 1)),
        }
    }

    /// Attention weights over positions, `n x 1`, summing to one.
    fn weights(&self, g: &mut Graph<'_>, h: Var, h2: Var) -> Var {
        let w_h = g.param(self.w_h);
        let w_h2 = g.param(self.w_h2);
        let b_h2 = g.param(self.b_h2);
        let w_p = g.param(self.w_p);
        let b_p = g.param(self.b_p);
        let left = g.matmul(h, w_h);
        let right = g.linear(h2, w_h2, b_h2);
        let cat = g.concat_cols(&[left, right]);
        let p = g.tanh(cat);
        let logits = g.linear(p, w_p, b_p);
        let row = g.transpose(logits);
        let a = g.softmax_rows(row);
        g.transpose(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionSharing {
    /// One weight vector rescales both hidden matrices.
    #[default]
    Shared,
    /// A second parameter set produces a separate weight vector for the second matrix.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoAttention {
    pub primary: AttentionScorer,
    pub secondary: Option<AttentionScorer>,
}

impl CoAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        d2: usize,
        k: usize,
        sharing: AttentionSharing,
        rng: &mut impl Rng,
    ) -> Self {
        let primary = AttentionScorer::new(store, name, d, d2, k, rng);
        let secondary = match sharing {
            AttentionSharing::Shared => None,
            AttentionSharing::Separate => Some(AttentionScorer::new(store, &format!("{name}.second"), d2, d, k, rng)),
        };
        CoAttention { primary, secondary }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoAttentionOutput {
    pub weights: Var,
    pub second_weights: Var,
    pub h_tilde: Var,
    pub h2_tilde: Var,
}

pub fn coattention(g: &mut Graph<'_>, h: Var, h2: Var, layer: &CoAttention) -> Result<CoAttentionOutput> {
    let (n, d) = g.shape(h);
    let (n2, d2) = g.shape(h2);
    let store = g.store();
    if n != n2 || store.values(layer.primary.w_h).rows() != d || store.values(layer.primary.w_h2).rows() != d2 {
        return Err(Error::shape(
            "coattention",
            format!("inputs {n}x{d} and {n2}x{d2} do not match the layer"),
        ));
    }
    let weights = layer.primary.weights(g, h, h2);
    let second_weights = match &layer.secondary {
        Some(s) => s.weights(g, h2, h),
        None => weights,
    };
    let h_tilde = g.scale_rows(h, weights);
    let h2_tilde = g.scale_rows(h2, second_weights);
    Ok(CoAttentionOutput {
        weights,
        second_weights,
        h_tilde,
        h2_tilde,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatedFusion {
    pub w_tilde: ParamId,
    pub b_tilde: ParamId,
    pub w_h: ParamId,
    pub b_h: ParamId,
    pub w_g: ParamId,
}

impl GatedFusion {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        GatedFusion {
            w_tilde: store.add(format!("{name}.w_tilde"), Matrix::uniform(d, d, glorot(d, d), rng)),
            b_tilde: store.add(format!("{name}.b_tilde"), Matrix::zeros(1, d)),
            w_h: store.add(format!("{name}.w_h"), Matrix::uniform(d, d, glorot(d, d), rng)),
            b_h: store.add(format!("{name}.b_h"), Matrix::zeros(1, d)),
            w_g: store.add(format!("{name}.w_g"), Matrix::uniform(2 * d, d, glorot(2 * d, d), rng)),
        }
    }
}

/// `f = g * tanh(W_h h + b_h) + (1 - g) * tanh(W~ h~ + b~)`, `g = sigmoid(W_g [.~ ; .])`.
pub fn gated_fusion(g: &mut Graph<'_>, h: Var, h_tilde: Var, layer: &GatedFusion) -> Result<Var> {
    let d = g.store().values(layer.w_h).rows();
    if g.shape(h) != g.shape(h_tilde) || g.shape(h).1 != d {
        return Err(Error::shape(
            "gated_fusion",
            format!("inputs {:?} and {:?} for width {d}", g.shape(h), g.shape(h_tilde)),
        ));
    }
    let wt = g.param(layer.w_tilde);
    let bt = g.param(layer.b_tilde);
    let wh = g.param(layer.w_h);
    let bh = g.param(layer.b_h);
    let wg = g.param(layer.w_g);
    let zt = g.linear(h_tilde, wt, bt);
    let ht = g.tanh(zt);
    let zh = g.linear(h, wh, bh);
    let hh = g.tanh(zh);
    let cat = g.concat_cols(&[ht, hh]);
    let zg = g.matmul(cat, wg);
    let gate = g.sigmoid(zg);
    let kept = g.mul(gate, hh);
    let inv = g.one_minus(gate);
    let taken = g.mul(inv, ht);
    Ok(g.add(kept, taken))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNormParams {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, d, 1.0)),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, d)),
        }
    }

    fn apply(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, 1e-5)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformerLayer {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln1: LayerNormParams,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNormParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ff_dim: usize,
    pub max_len: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            layers: 2,
            heads: 4,
            dim: 64,
            ff_dim: 256,
            max_len: 66,
        }
    }
}

/// Post-norm transformer encoder with sinusoidal positions added to its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub layers: Vec<TransformerLayer>,
    positions: Matrix,
}

pub fn sinusoidal_positions(len: usize, dim: usize) -> Matrix {
    let mut m = Matrix::zeros(len, dim);
    for pos in 0..len {
        for i in 0..dim {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 * rate;
            m.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    m
}

impl Transformer {
    pub fn new(store: &mut ParamStore, name: &str, config: TransformerConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.heads == 0 || config.dim % config.heads != 0 {
            return Err(Error::Config(format!(
                "dimension {} is not divisible by {} heads",
                config.dim, config.heads
            )));
        }
        let d = config.dim;
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("{name}.layer{l}");
                TransformerLayer {
                    q: Linear::new(store, &format!("{p}.q"), d, d, rng),
                    k: Linear::new(store, &format!("{p}.k"), d, d, rng),
                    v: Linear::new(store, &format!("{p}.v"), d, d, rng),
                    o: Linear::new(store, &format!("{p}.o"), d, d, rng),
                    ln1: LayerNormParams::new(store, &format!("{p}.ln1"), d),
                    ff1: Linear::new(store, &format!("{p}.ff1"), d, config.ff_dim, rng),
                    ff2: Linear::new(store, &format!("{p}.ff2"), config.ff_dim, d, rng),
                    ln2: LayerNormParams::new(store, &format!("{p}.ln2"), d),
                }
            })
            .collect();
        Ok(Transformer {
            config,
            layers,
            positions: sinusoidal_positions(config.max_len, d),
        })
    }

    /// Re-attach to parameters already present in `store` (e.g. after loading a checkpoint).
    pub fn bind(store: &ParamStore, name: &str, config: TransformerConfig) -> Result<Self> {
        let lin = |p: &str| -> Result<Linear> {
            Ok(Linear {
                w: lookup(store, &format!("{p}.w"))?,
                b: lookup(store, &format!("{p}.b"))?,
            })
        };
        let ln = |p: &str| -> Result<LayerNormParams> {
            Ok(LayerNormParams {
                gamma: lookup(store, &format!("{p}.gamma"))?,
                beta: lookup(store, &format!("{p}.beta"))?,
            })
        };
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("{name}.layer{l}");
                Ok(TransformerLayer {
                    q: lin(&format!("{p}.q"))?,
                    k: lin(&format!("{p}.k"))?,
                    v: lin(&format!("{p}.v"))?,
                    o: lin(&format!("{p}.o"))?,
                    ln1: ln(&format!("{p}.ln1"))?,
                    ff1: lin(&format!("{p}.ff1"))?,
                    ff2: lin(&format!("{p}.ff2"))?,
                    ln2: ln(&format!("{p}.ln2"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Transformer {
            config,
            layers,
            positions: sinusoidal_positions(config.max_len, config.dim),
        })
    }
}

pub(crate) fn lookup(store: &ParamStore, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
}

#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub output: Var,
    /// One `n x n` row-stochastic matrix per layer and head.
    pub attention: Vec<Var>,
}

pub fn transformer_encode(g: &mut Graph<'_>, x: Var, enc: &Transformer) -> Result<EncoderOutput> {
    let (n, d) = g.shape(x);
    let cfg = enc.config;
    if d != cfg.dim {
        return Err(Error::shape(
            "transformer_encode",
            format!("input width {d} but encoder dimension {}", cfg.dim),
        ));
    }
    if n > cfg.max_len {
        return Err(Error::shape(
            "transformer_encode",
            format!("sequence of {n} exceeds capacity {}", cfg.max_len),
        ));
    }
    let pe = g.constant(Matrix::from_vec(n, d, enc.positions.data()[..n * d].to_vec()));
    let mut h = g.add(x, pe);
    let dh = d / cfg.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut attention = Vec::new();
    for layer in &enc.layers {
        let q = layer.q.forward(g, h)?;
        let k = layer.k.forward(g, h)?;
        let v = layer.v.forward(g, h)?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let (a, b) = (head * dh, (head + 1) * dh);
            let qh = g.slice_cols(q, a, b);
            let kh = g.slice_cols(k, a, b);
            let vh = g.slice_cols(v, a, b);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let weights = g.softmax_rows(scores);
            attention.push(weights);
            heads.push(g.matmul(weights, vh));
        }
        let cat = g.concat_cols(&heads);
        let attn = layer.o.forward(g, cat)?;
        let res = g.add(h, attn);
        let h1 = layer.ln1.apply(g, res);
        let f = layer.ff1.forward(g, h1)?;
        let f = g.gelu(f);
        let f = layer.ff2.forward(g, f)?;
        let res = g.add(h1, f);
        h = layer.ln2.apply(g, res);
    }
    Ok(EncoderOutput { output: h, attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn case_vectors() {
        assert_eq!(case_vector("Doe"), [1.0, 0.0, 1.0]);
        assert_eq!(case_vector("USA"), [1.0, 1.0, 1.0]);
        assert_eq!(case_vector("van"), [0.0, 0.0, 0.0]);
        assert_eq!(case_vector("J."), [1.0, 1.0, 1.0]);
        assert_eq!(case_vector("42"), [0.0, 0.0, 0.0]);
        assert_eq!(case_vector("mcDonald"), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "e", 3, 2, &mut rng);
        let mut g = Graph::new(&store);
        assert!(emb.embed(&mut g, &[0, 3], &Matrix::zeros(2, 3)).is_err());
        let v = emb.embed(&mut g, &[2, 0], &case_matrix(&["Doe", "x"])).unwrap();
        assert_eq!(g.shape(v), (2, 5));
        assert_eq!(&g.value(v).row(0)[2..], &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn bilstm_reversal_swaps_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let lstm = BiLstm::new(&mut store, "l", 3, 4, &mut rng);
        // Same weights in both directions makes reversal an exact symmetry.
        let (fwd, bwd) = (lstm.forward, lstm.backward);
        for (a, b) in [(fwd.wx, bwd.wx), (fwd.wh, bwd.wh), (fwd.b, bwd.b)] {
            let v = store.values(a).clone();
            *store.values_mut(b) = v;
        }
        let x = Matrix::uniform(5, 3, 1.0, &mut rng);
        let xr = x.select_rows(&[4, 3, 2, 1, 0]);
        let mut g = Graph::new(&store);
        let xv = g.constant(x);
        let xrv = g.constant(xr);
        let out = birnn_encode(&mut g, xv, &lstm).unwrap();
        let out_r = birnn_encode(&mut g, xrv, &lstm).unwrap();
        let (o, or) = (g.value(out), g.value(out_r));
        for i in 0..5 {
            assert_eq!(&o.row(i)[..4], &or.row(4 - i)[4..]);
            assert_eq!(&o.row(i)[4..], &or.row(4 - i)[..4]);
        }
    }

    #[test]
    fn coattention_uniform_when_scorer_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let att = CoAttention::new(&mut store, "c", 4, 4, 4, AttentionSharing::Shared, &mut rng);
        store.values_mut(att.primary.w_p).scale_in_place(0.0);
        let h = Matrix::uniform(3, 4, 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let hv = g.constant(h.clone());
        let h2 = g.constant(Matrix::uniform(3, 4, 1.0, &mut rng));
        let out = coattention(&mut g, hv, h2, &att).unwrap();
        for r in 0..3 {
            assert!((g.value(out.weights).get(r, 0) - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(g.value(out.h_tilde).max_abs_diff(&h.map(|x| x / 3.0)) < 1e-12);
    }

    #[test]
    fn transformer_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let cfg = TransformerConfig {
            layers: 2,
            heads: 2,
            dim: 8,
            ff_dim: 16,
            max_len: 8,
        };
        let enc = Transformer::new(&mut store, "t", cfg, &mut rng).unwrap();
        let x = Matrix::uniform(4, 8, 1.0, &mut rng);
        let target = Matrix::uniform(4, 8, 1.0, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        let report = check_gradients(&mut store, &ids, 1e-5, |g| {
            let xv = g.constant(x.clone());
            let out = transformer_encode(g, xv, &enc)?;
            let t = g.constant(target.clone());
            let prod = g.mul(out.output, t);
            Ok(g.sum(prod))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-3, "{report:?}");
    }
}
