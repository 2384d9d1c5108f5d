//! Building blocks of the pattern-recognition network. Every layer has a tape
//! form (used for training) and a plain-matrix form for direct evaluation.

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IlbError, Result};
use crate::nn::{gcn_normalize, Matrix, ParamId, ParamSet, Tape, Var};

/// Gate weights laid out as `[reset | update | candidate]` along the columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl GruParams {
    pub fn init<R: Rng + ?Sized>(ps: &mut ParamSet, prefix: &str, input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let g = 3 * hidden_size;
        Self {
            w_input: ps.add_uniform(format!("{prefix}.w_input"), (input_size, g), hidden_size, rng),
            w_hidden: ps.add_uniform(format!("{prefix}.w_hidden"), (hidden_size, g), hidden_size, rng),
            b_input: ps.add_uniform(format!("{prefix}.b_input"), (1, g), hidden_size, rng),
            b_hidden: ps.add_uniform(format!("{prefix}.b_hidden"), (1, g), hidden_size, rng),
            input_size,
            hidden_size,
        }
    }

    /// One recurrence step for a batch of rows.
    pub fn step(&self, tape: &mut Tape, ps: &ParamSet, x: Var, h: Var) -> Var {
        let m = self.hidden_size;
        let wi = tape.param(ps, self.w_input);
        let wh = tape.param(ps, self.w_hidden);
        let bi = tape.param(ps, self.b_input);
        let bh = tape.param(ps, self.b_hidden);
        let xi = tape.matmul(x, wi);
        let gi = tape.add_row(xi, bi);
        let hh = tape.matmul(h, wh);
        let gh = tape.add_row(hh, bh);

        let (ir, hr) = (tape.slice_cols(gi, 0, m), tape.slice_cols(gh, 0, m));
        let r_pre = tape.add(ir, hr);
        let reset = tape.sigmoid(r_pre);
        let (iz, hz) = (tape.slice_cols(gi, m, 2 * m), tape.slice_cols(gh, m, 2 * m));
        let z_pre = tape.add(iz, hz);
        let update = tape.sigmoid(z_pre);
        let (in_, hn) = (tape.slice_cols(gi, 2 * m, 3 * m), tape.slice_cols(gh, 2 * m, 3 * m));
        let gated = tape.mul(reset, hn);
        let n_pre = tape.add(in_, gated);
        let cand = tape.tanh(n_pre);
        // h' = (1 - z) ⊙ n + z ⊙ h = n + z ⊙ (h - n)
        let delta = tape.sub(h, cand);
        let kept = tape.mul(update, delta);
        tape.add(cand, kept)
    }

    /// Runs the recurrence from a zero state; `steps[t]` is rows × input_size.
    pub fn run(&self, tape: &mut Tape, ps: &ParamSet, steps: &[Var]) -> Vec<Var> {
        let rows = tape.shape(steps[0]).0;
        let mut h = tape.input(Array2::zeros((rows, self.hidden_size)));
        steps
            .iter()
            .map(|x| {
                h = self.step(tape, ps, *x, h);
                h
            })
            .collect()
    }
}

/// Single-head scaled dot-product attention over time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAttentionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub dim: usize,
}

impl SelfAttentionParams {
    pub fn init<R: Rng + ?Sized>(ps: &mut ParamSet, prefix: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            w_q: ps.add_uniform(format!("{prefix}.w_q"), (dim, dim), dim, rng),
            w_k: ps.add_uniform(format!("{prefix}.w_k"), (dim, dim), dim, rng),
            w_v: ps.add_uniform(format!("{prefix}.w_v"), (dim, dim), dim, rng),
            dim,
        }
    }

    /// softmax(QKᵀ/√M)V for one sequence `h` (s × M).
    pub fn full(&self, tape: &mut Tape, ps: &ParamSet, h: Var) -> Var {
        let (wq, wk, wv) = (tape.param(ps, self.w_q), tape.param(ps, self.w_k), tape.param(ps, self.w_v));
        let q = tape.matmul(h, wq);
        let k = tape.matmul(h, wk);
        let v = tape.matmul(h, wv);
        let scores = tape.matmul_t(q, k);
        let scaled = tape.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let weights = tape.softmax_rows(scaled);
        tape.matmul(weights, v)
    }

    /// Final-step output of [`Self::full`] for many sequences at once:
    /// `hs[t]` holds step `t` of every sequence as rows.
    pub fn last_step(&self, tape: &mut Tape, ps: &ParamSet, hs: &[Var]) -> Var {
        let (wq, wk, wv) = (tape.param(ps, self.w_q), tape.param(ps, self.w_k), tape.param(ps, self.w_v));
        let last = *hs.last().expect("non-empty sequence");
        let q = tape.matmul(last, wq);
        // q·(h_t W_k) = (q W_kᵀ)·h_t
        let qk = tape.matmul_t(q, wk);
        let scores: Vec<Var> = hs.iter().map(|h| tape.row_dot(qk, *h)).collect();
        let scores = tape.concat_cols(&scores);
        let scaled = tape.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let weights = tape.softmax_rows(scaled);
        let mut mixed = None;
        for (t, h) in hs.iter().enumerate() {
            let w = tape.slice_cols(weights, t, t + 1);
            let term = tape.scale_rows(w, *h);
            mixed = Some(match mixed {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        let mixed = mixed.expect("non-empty sequence");
        tape.matmul(mixed, wv)
    }
}

/// GRU followed by self-attention; summarizes a window to its last step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub gru: GruParams,
    pub self_attention: SelfAttentionParams,
    pub hidden_size: usize,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(ps: &mut ParamSet, input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        Self {
            gru: GruParams::init(ps, "encoder.gru", input_size, hidden_size, rng),
            self_attention: SelfAttentionParams::init(ps, "encoder.attn", hidden_size, rng),
            hidden_size,
        }
    }

    /// `window` is rows × s (one scalar reading per step); returns rows × M.
    pub fn embed(&self, tape: &mut Tape, ps: &ParamSet, window: &Matrix) -> Var {
        let steps: Vec<Var> = (0..window.ncols())
            .map(|t| tape.input(window.slice(s![.., t..t + 1]).to_owned()))
            .collect();
        let hidden = self.gru.run(tape, ps, &steps);
        self.self_attention.last_step(tape, ps, &hidden)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
}

/// Multi-head attention across households; untied Q/K/V projections per head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub heads: Vec<HeadParams>,
    pub w_o: ParamId,
    pub model_dim: usize,
    pub head_dim: usize,
    pub output_dim: usize,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        model_dim: usize,
        head_count: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if head_count == 0 || model_dim % head_count != 0 {
            return Err(IlbError::Shape(format!(
                "embedding size {model_dim} not divisible into {head_count} heads"
            )));
        }
        let head_dim = model_dim / head_count;
        let heads = (0..head_count)
            .map(|i| HeadParams {
                w_q: ps.add_uniform(format!("mha.head{i}.w_q"), (model_dim, head_dim), model_dim, rng),
                w_k: ps.add_uniform(format!("mha.head{i}.w_k"), (model_dim, head_dim), model_dim, rng),
                w_v: ps.add_uniform(format!("mha.head{i}.w_v"), (model_dim, head_dim), model_dim, rng),
            })
            .collect();
        let w_o = ps.add_uniform("mha.w_o", (head_dim * head_count, output_dim), head_dim * head_count, rng);
        Ok(Self {
            heads,
            w_o,
            model_dim,
            head_dim,
            output_dim,
        })
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    fn head_weights(&self, tape: &mut Tape, ps: &ParamSet, e: Var) -> Vec<Var> {
        let scale = 1.0 / (self.model_dim as f64).sqrt();
        self.heads
            .iter()
            .map(|head| {
                let (wq, wk) = (tape.param(ps, head.w_q), tape.param(ps, head.w_k));
                let q = tape.matmul(e, wq);
                let k = tape.matmul(e, wk);
                let scores = tape.matmul_t(q, k);
                let scaled = tape.scale(scores, scale);
                tape.softmax_rows(scaled)
            })
            .collect()
    }

    fn average(tape: &mut Tape, weights: &[Var]) -> Var {
        if weights.len() == 1 {
            weights[0]
        } else {
            tape.mean(weights)
        }
    }

    /// Head-averaged n × n attention weights only.
    pub fn similarity(&self, tape: &mut Tape, ps: &ParamSet, e: Var) -> Var {
        let weights = self.head_weights(tape, ps, e);
        Self::average(tape, &weights)
    }

    /// Returns `(A_est, O)`: the head-averaged n × n attention weights and the
    /// projected output n × output_dim.
    pub fn forward(&self, tape: &mut Tape, ps: &ParamSet, e: Var) -> (Var, Var) {
        let weights = self.head_weights(tape, ps, e);
        let mut outputs = Vec::with_capacity(self.heads.len());
        for (head, a) in self.heads.iter().zip(&weights) {
            let wv = tape.param(ps, head.w_v);
            let v = tape.matmul(e, wv);
            outputs.push(tape.matmul(*a, v));
        }
        let concat = if outputs.len() == 1 {
            outputs[0]
        } else {
            tape.concat_cols(&outputs)
        };
        let wo = tape.param(ps, self.w_o);
        let out = tape.matmul(concat, wo);
        (Self::average(tape, &weights), out)
    }
}

/// ReLU(N H W) with N the symmetric normalization of `edges + I`.
pub fn gcn_tape(tape: &mut Tape, h: Var, edges: Var, w: Var) -> Var {
    let norm = tape.gcn_norm(edges);
    let hw = tape.matmul(h, w);
    let agg = tape.matmul(norm, hw);
    tape.relu(agg)
}

/// Row-stochastic n × n attention matrix linking households.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix(Matrix);

pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

impl SimilarityMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        let m = Self(values);
        m.check(ROW_SUM_TOLERANCE)?;
        Ok(m)
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let (r, c) = self.0.dim();
        if r != c {
            return Err(IlbError::Shape(format!("similarity matrix is {r}×{c}")));
        }
        if let Some(v) = self.0.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(IlbError::Domain(format!("similarity entry {v} outside [0, 1]")));
        }
        let err = self.max_row_sum_error();
        if err > tol {
            return Err(IlbError::Domain(format!("row sums deviate from 1 by {err}")));
        }
        Ok(())
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.0
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn mean_entry(&self) -> f64 {
        self.0.mean().unwrap_or(0.0)
    }
}

fn expect_cols(m: &Matrix, cols: usize, what: &str) -> Result<()> {
    if m.ncols() != cols {
        return Err(IlbError::Shape(format!(
            "{what} has {} columns, expected {cols}",
            m.ncols()
        )));
    }
    Ok(())
}

/// Hidden states s × M for one sequence (s × input_size), zero initial state.
pub fn gru_forward(ps: &ParamSet, gru: &GruParams, sequence: &Matrix) -> Result<Matrix> {
    if sequence.nrows() == 0 {
        return Err(IlbError::Shape("empty sequence".into()));
    }
    expect_cols(sequence, gru.input_size, "GRU input")?;
    let mut tape = Tape::new();
    let steps: Vec<Var> = sequence
        .rows()
        .into_iter()
        .map(|r| tape.input(r.to_owned().insert_axis(ndarray::Axis(0))))
        .collect();
    let hidden = gru.run(&mut tape, ps, &steps);
    let mut out = Array2::zeros((sequence.nrows(), gru.hidden_size));
    for (t, h) in hidden.into_iter().enumerate() {
        out.row_mut(t).assign(&tape.value(h).row(0));
    }
    Ok(out)
}

/// Full self-attention output s × M for one sequence of hidden states.
pub fn self_attention(ps: &ParamSet, attn: &SelfAttentionParams, h: &Matrix) -> Result<Matrix> {
    if h.nrows() == 0 {
        return Err(IlbError::Shape("empty sequence".into()));
    }
    expect_cols(h, attn.dim, "self-attention input")?;
    let mut tape = Tape::new();
    let x = tape.input(h.clone());
    let out = attn.full(&mut tape, ps, x);
    Ok(tape.value(out).clone())
}

/// Embedding M of one household's load window.
pub fn household_embedding(ps: &ParamSet, encoder: &EncoderParams, window: &[f64]) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(IlbError::Shape("empty window".into()));
    }
    let mut tape = Tape::new();
    let row = Array2::from_shape_vec((1, window.len()), window.to_vec()).expect("row vector");
    let e = encoder.embed(&mut tape, ps, &row);
    Ok(tape.value(e).row(0).to_vec())
}

/// Multi-head attention across the rows of `e` (n × M).
pub fn inter_series_attention(ps: &ParamSet, attn: &AttentionParams, e: &Matrix) -> Result<(SimilarityMatrix, Matrix)> {
    if e.nrows() == 0 {
        return Err(IlbError::Shape("no households".into()));
    }
    expect_cols(e, attn.model_dim, "attention input")?;
    let mut tape = Tape::new();
    let x = tape.input(e.clone());
    let (a, o) = attn.forward(&mut tape, ps, x);
    Ok((SimilarityMatrix::new(tape.value(a).clone())?, tape.value(o).clone()))
}

/// Row-wise `temporal ‖ socio`.
pub fn concat_features(temporal: &Matrix, socio: &Matrix) -> Result<Matrix> {
    if temporal.nrows() != socio.nrows() {
        return Err(IlbError::Shape(format!(
            "{} temporal rows vs {} socio-economic rows",
            temporal.nrows(),
            socio.nrows()
        )));
    }
    Ok(ndarray::concatenate(ndarray::Axis(1), &[temporal.view(), socio.view()]).expect("rows agree"))
}

/// One graph-convolution layer with self-loops and symmetric normalization.
pub fn gcn_layer(h: &Matrix, edge_weights: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = h.nrows();
    if edge_weights.dim() != (n, n) {
        return Err(IlbError::Shape(format!(
            "edge weights {:?} for {n} nodes",
            edge_weights.dim()
        )));
    }
    if w.nrows() != h.ncols() {
        return Err(IlbError::Shape(format!(
            "weight has {} rows for {} features",
            w.nrows(),
            h.ncols()
        )));
    }
    if let Some(v) = edge_weights.iter().find(|v| !(**v >= 0.0)) {
        return Err(IlbError::Domain(format!("negative edge weight {v}")));
    }
    let (norm, _) = gcn_normalize(edge_weights);
    Ok(norm.dot(&h.dot(w)).mapv(|v| v.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_gru_stays_zero() {
        let mut ps = ParamSet::default();
        let gru = GruParams::init(&mut ps, "g", 1, 3, &mut seeded(1));
        for id in ps.ids().collect::<Vec<_>>() {
            ps.get_mut(id).fill(0.0);
        }
        let seq = array![[1.0], [-2.0], [0.5]];
        let h = gru_forward(&ps, &gru, &seq).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gru_single_step_by_hand() {
        let mut ps = ParamSet::default();
        let gru = GruParams {
            w_input: ps.add("wi", array![[0.5, -0.3, 0.2, 0.1, 0.4, -0.6]]),
            w_hidden: ps.add_zeros("wh", (2, 6)),
            b_input: ps.add("bi", array![[0.1, 0.0, -0.2, 0.3, 0.05, 0.0]]),
            b_hidden: ps.add("bh", array![[0.0, 0.2, 0.1, 0.0, -0.1, 0.2]]),
            input_size: 1,
            hidden_size: 2,
        };
        let x = 0.8;
        let h = gru_forward(&ps, &gru, &array![[x]]).unwrap();
        // h0 = 0, so h1 = (1 - z) n with n = tanh(x w_n + b_in + r b_hn)
        let mut expect = [0.0; 2];
        let wi = [0.5, -0.3, 0.2, 0.1, 0.4, -0.6];
        let bi = [0.1, 0.0, -0.2, 0.3, 0.05, 0.0];
        let bh = [0.0, 0.2, 0.1, 0.0, -0.1, 0.2];
        for (j, e) in expect.iter_mut().enumerate() {
            let r = sigmoid(x * wi[j] + bi[j] + bh[j]);
            let z = sigmoid(x * wi[2 + j] + bi[2 + j] + bh[2 + j]);
            let n = (x * wi[4 + j] + bi[4 + j] + r * bh[4 + j]).tanh();
            *e = (1.0 - z) * n;
        }
        assert!((h[[0, 0]] - expect[0]).abs() < 1e-14);
        assert!((h[[0, 1]] - expect[1]).abs() < 1e-14);
    }

    #[test]
    fn gru_is_causal() {
        let mut ps = ParamSet::default();
        let gru = GruParams::init(&mut ps, "g", 1, 4, &mut seeded(2));
        let short = array![[0.3], [0.9]];
        let long = array![[0.3], [0.9], [-1.0], [2.0]];
        let a = gru_forward(&ps, &gru, &short).unwrap();
        let b = gru_forward(&ps, &gru, &long).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_eq!(a.row(1), b.row(1));
    }

    #[test]
    fn gru_shape_error() {
        let mut ps = ParamSet::default();
        let gru = GruParams::init(&mut ps, "g", 1, 4, &mut seeded(2));
        assert!(matches!(
            gru_forward(&ps, &gru, &array![[1.0, 2.0]]),
            Err(IlbError::Shape(_))
        ));
    }

    #[test]
    fn self_attention_single_step_is_value_projection() {
        let mut ps = ParamSet::default();
        let attn = SelfAttentionParams::init(&mut ps, "a", 3, &mut seeded(4));
        let h = array![[0.2, -0.4, 0.9]];
        let out = self_attention(&ps, &attn, &h).unwrap();
        let v = h.dot(ps.get(attn.w_v));
        for (a, b) in out.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn self_attention_identical_rows() {
        let mut ps = ParamSet::default();
        let attn = SelfAttentionParams::init(&mut ps, "a", 2, &mut seeded(4));
        let h = array![[0.5, 0.1], [0.5, 0.1], [0.5, 0.1]];
        let out = self_attention(&ps, &attn, &h).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(1), out.row(2));
    }

    #[test]
    fn self_attention_two_by_two_by_hand() {
        let mut ps = ParamSet::default();
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let attn = SelfAttentionParams {
            w_q: ps.add("q", eye.clone()),
            w_k: ps.add("k", eye.clone()),
            w_v: ps.add("v", eye),
            dim: 2,
        };
        let h = array![[1.0, 0.0], [0.0, 2.0]];
        let out = self_attention(&ps, &attn, &h).unwrap();
        // scores / √2: row0 = [1, 0]/√2, row1 = [0, 4]/√2
        let r2 = 2f64.sqrt();
        let w0 = [(1.0 / r2).exp(), 1.0];
        let w1 = [1.0, (4.0 / r2).exp()];
        let (s0, s1) = (w0[0] + w0[1], w1[0] + w1[1]);
        let expect = [
            [w0[0] / s0, 2.0 * w0[1] / s0],
            [w1[0] / s1, 2.0 * w1[1] / s1],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((out[[i, j]] - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn last_step_matches_full_attention() {
        let mut ps = ParamSet::default();
        let mut rng = seeded(9);
        let enc = EncoderParams::init(&mut ps, 1, 4, &mut rng);
        let window: Vec<f64> = (0..6).map(|t| (t as f64 * 0.7).sin()).collect();
        let seq = Array2::from_shape_vec((6, 1), window.clone()).unwrap();
        let hidden = gru_forward(&ps, &enc.gru, &seq).unwrap();
        let full = self_attention(&ps, &enc.self_attention, &hidden).unwrap();
        let emb = household_embedding(&ps, &enc, &window).unwrap();
        for (a, b) in emb.iter().zip(full.row(5).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_attention_is_one() {
        let mut ps = ParamSet::default();
        let attn = AttentionParams::init(&mut ps, 4, 2, 4, &mut seeded(3)).unwrap();
        let (a, _) = inter_series_attention(&ps, &attn, &array![[0.1, 0.2, 0.3, 0.4]]).unwrap();
        assert_eq!(a.values(), &array![[1.0]]);
    }

    #[test]
    fn identical_households_share_attention_rows() {
        let mut ps = ParamSet::default();
        let attn = AttentionParams::init(&mut ps, 4, 2, 4, &mut seeded(3)).unwrap();
        let e = array![[0.1, 0.2, 0.3, 0.4], [0.9, -0.2, 0.0, 0.4], [0.1, 0.2, 0.3, 0.4]];
        let (a, _) = inter_series_attention(&ps, &attn, &e).unwrap();
        assert_eq!(a.values().row(0), a.values().row(2));
        a.check(1e-12).unwrap();
    }

    #[test]
    fn one_head_attention_by_hand() {
        let mut ps = ParamSet::default();
        let attn = AttentionParams {
            heads: vec![HeadParams {
                w_q: ps.add("q", array![[1.0, 0.0], [0.0, 1.0]]),
                w_k: ps.add("k", array![[1.0, 0.0], [0.0, 1.0]]),
                w_v: ps.add("v", array![[1.0, 0.0], [0.0, 1.0]]),
            }],
            w_o: ps.add("o", array![[1.0, 0.0], [0.0, 1.0]]),
            model_dim: 2,
            head_dim: 2,
            output_dim: 2,
        };
        let e = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let (a, o) = inter_series_attention(&ps, &attn, &e).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let gram = e.dot(&e.t());
        for i in 0..3 {
            let w: Vec<f64> = (0..3).map(|j| (gram[[i, j]] * s).exp()).collect();
            let z: f64 = w.iter().sum();
            for j in 0..3 {
                assert!((a.values()[[i, j]] - w[j] / z).abs() < 1e-12);
            }
            for c in 0..2 {
                let expect: f64 = (0..3).map(|j| w[j] / z * e[[j, c]]).sum();
                assert!((o[[i, c]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_cases() {
        let t = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let empty = Array2::<f64>::zeros((2, 0));
        assert_eq!(concat_features(&t, &empty).unwrap(), t);
        let s = array![[7.0, 8.0], [9.0, 10.0]];
        let c = concat_features(&t, &s).unwrap();
        assert_eq!(c.ncols(), 5);
        assert_eq!(c[[1, 3]], 9.0);
        assert_eq!(c[[0, 4]], 8.0);
        assert!(concat_features(&t, &array![[1.0]]).is_err());
    }

    #[test]
    fn gcn_single_node() {
        let h = array![[0.5, -0.3]];
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let out = gcn_layer(&h, &array![[0.0]], &w).unwrap();
        assert_eq!(out, array![[0.5, 0.0]]);
    }

    #[test]
    fn gcn_path_graph_by_hand() {
        // 0 - 1 - 2 with unit weights; degrees with self-loops: 2, 3, 2.
        let a = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let h = array![[1.0], [2.0], [3.0]];
        let w = array![[1.0]];
        let out = gcn_layer(&h, &a, &w).unwrap();
        let d = [2.0f64, 3.0, 2.0];
        let expect = [
            1.0 / d[0] + 2.0 / (d[0] * d[1]).sqrt(),
            1.0 / (d[1] * d[0]).sqrt() + 2.0 / d[1] + 3.0 / (d[1] * d[2]).sqrt(),
            2.0 / (d[2] * d[1]).sqrt() + 3.0 / d[2],
        ];
        for i in 0..3 {
            assert!((out[[i, 0]] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_is_permutation_equivariant() {
        let a = array![[0.0, 0.4, 0.1], [0.4, 0.0, 0.7], [0.2, 0.7, 0.0]];
        let h = array![[1.0, -0.5], [0.2, 0.3], [-0.7, 0.9]];
        let w = array![[0.3, -0.8], [0.6, 0.1]];
        let perm = [2usize, 0, 1];
        let pa = Array2::from_shape_fn((3, 3), |(i, j)| a[[perm[i], perm[j]]]);
        let ph = Array2::from_shape_fn((3, 2), |(i, j)| h[[perm[i], j]]);
        let out = gcn_layer(&h, &a, &w).unwrap();
        let pout = gcn_layer(&ph, &pa, &w).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((pout[[i, j]] - out[[perm[i], j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gcn_rejects_negative_weights() {
        let a = array![[0.0, -1.0], [1.0, 0.0]];
        let h = array![[1.0], [1.0]];
        assert!(matches!(
            gcn_layer(&h, &a, &array![[1.0]]),
            Err(IlbError::Domain(_))
        ));
    }
}
