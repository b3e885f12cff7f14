//! Batched layer kernels with explicit backward passes.
//!
//! Sequences are stored time-major: step `t` of a `steps x batch x dim`
//! buffer starts at `t * batch * dim`. LSTM gate blocks are ordered
//! input, forget, candidate, output.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::matrix::{gemm, Operand};
use crate::seed::Rng;
use crate::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Inverted dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

pub(crate) fn apply_mask(values: &mut [f64], mask: Option<&Vec<f64>>) {
    if let Some(mask) = mask {
        for (v, m) in values.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}

fn column_sums(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in values.chunks_exact(cols).take(rows) {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}

/// `y = x w + b` for a `batch x inputs` matrix `x`.
pub(crate) fn dense_forward(x: &[f64], batch: usize, inputs: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let outputs = b.len();
    let mut y = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        y.extend_from_slice(b);
    }
    gemm(1.0, Operand::new(x, batch, inputs), Operand::new(w, inputs, outputs), 1.0, &mut y);
    y
}

pub(crate) struct DenseGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub x: Option<Vec<f64>>,
}

pub(crate) fn dense_backward(x: &[f64], dy: &[f64], batch: usize, inputs: usize, w: &[f64], need_input: bool) -> DenseGrads {
    let outputs = dy.len() / batch.max(1);
    let mut dw = vec![0.0; inputs * outputs];
    gemm(1.0, Operand::new(x, batch, inputs).t(), Operand::new(dy, batch, outputs), 0.0, &mut dw);
    let dx = need_input.then(|| {
        let mut dx = vec![0.0; batch * inputs];
        gemm(1.0, Operand::new(dy, batch, outputs), Operand::new(w, inputs, outputs).t(), 0.0, &mut dx);
        dx
    });
    DenseGrads { w: dw, b: column_sums(dy, batch, outputs), x: dx }
}

/// Weights of one LSTM cell: `w` is `input_dim x 4H`, `u` is `H x 4H`, `b` is `4H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let g = 4 * hidden_dim;
        Self { input_dim, hidden_dim, w: vec![0.0; input_dim * g], u: vec![0.0; hidden_dim * g], b: vec![0.0; g] }
    }
}

/// Single-sample LSTM step: `i, f, o = sigmoid(.)`, `g = tanh(.)`,
/// `c = f * c_prev + i * g`, `h = o * tanh(c)`.
pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCellParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, hd) = (p.input_dim, p.hidden_dim);
    let g4 = 4 * hd;
    for (found, expected) in [(x.len(), d), (h_prev.len(), hd), (c_prev.len(), hd), (p.w.len(), d * g4), (p.u.len(), hd * g4), (p.b.len(), g4)] {
        if found != expected {
            return Err(Error::DimensionMismatch { expected, found });
        }
    }
    let mut z = p.b.clone();
    for (k, xv) in x.iter().enumerate() {
        for (zj, wj) in z.iter_mut().zip(&p.w[k * g4..(k + 1) * g4]) {
            *zj += xv * wj;
        }
    }
    for (k, hv) in h_prev.iter().enumerate() {
        for (zj, uj) in z.iter_mut().zip(&p.u[k * g4..(k + 1) * g4]) {
            *zj += hv * uj;
        }
    }
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for j in 0..hd {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hd + j]);
        let g = libm::tanh(z[2 * hd + j]);
        let o = sigmoid(z[3 * hd + j]);
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * libm::tanh(c[j]);
    }
    Ok((h, c))
}

pub(crate) struct LstmCache {
    pub steps: usize,
    pub batch: usize,
    pub input_dim: usize,
    pub hidden: usize,
    /// Layer input, `steps x batch x input_dim`.
    pub input: Vec<f64>,
    /// Activated gates, `steps x batch x 4H`.
    pub gates: Vec<f64>,
    pub cells: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    /// Hidden states, `steps x batch x H`.
    pub hidden_seq: Vec<f64>,
}

impl LstmCache {
    pub fn last_hidden(&self) -> &[f64] {
        let block = self.batch * self.hidden;
        &self.hidden_seq[(self.steps - 1) * block..]
    }
}

pub(crate) fn lstm_forward(input: Vec<f64>, steps: usize, batch: usize, input_dim: usize, w: &[f64], u: &[f64], b: &[f64]) -> LstmCache {
    let h = b.len() / 4;
    let g4 = 4 * h;
    let rows = steps * batch;
    let mut gates = Vec::with_capacity(rows * g4);
    for _ in 0..rows {
        gates.extend_from_slice(b);
    }
    gemm(1.0, Operand::new(&input, rows, input_dim), Operand::new(w, input_dim, g4), 1.0, &mut gates);
    let mut cells = vec![0.0; rows * h];
    let mut cell_tanh = vec![0.0; rows * h];
    let mut hidden_seq = vec![0.0; rows * h];
    let block = batch * h;
    for t in 0..steps {
        let z = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        if t > 0 {
            gemm(1.0, Operand::new(&hidden_seq[(t - 1) * block..t * block], batch, h), Operand::new(u, h, g4), 1.0, z);
        }
        for s in 0..batch {
            let zr = &mut z[s * g4..(s + 1) * g4];
            for j in 0..h {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[h + j]);
                let g = libm::tanh(zr[2 * h + j]);
                let o = sigmoid(zr[3 * h + j]);
                zr[j] = i;
                zr[h + j] = f;
                zr[2 * h + j] = g;
                zr[3 * h + j] = o;
                let idx = t * block + s * h + j;
                let c_prev = if t > 0 { cells[idx - block] } else { 0.0 };
                let c = f * c_prev + i * g;
                let tc = libm::tanh(c);
                cells[idx] = c;
                cell_tanh[idx] = tc;
                hidden_seq[idx] = o * tc;
            }
        }
    }
    LstmCache { steps, batch, input_dim, hidden: h, input, gates, cells, cell_tanh, hidden_seq }
}

pub(crate) struct LstmGrads {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub input: Option<Vec<f64>>,
}

/// Backpropagation through time given the loss gradient at every hidden state.
pub(crate) fn lstm_backward(cache: &LstmCache, w: &[f64], u: &[f64], d_hidden: &[f64], need_input: bool) -> LstmGrads {
    let LstmCache { steps, batch, input_dim, hidden: h, .. } = *cache;
    let g4 = 4 * h;
    let rows = steps * batch;
    let block = batch * h;
    let mut dz = vec![0.0; rows * g4];
    let mut dh_next = vec![0.0; block];
    let mut dc_next = vec![0.0; block];
    for t in (0..steps).rev() {
        for s in 0..batch {
            let zr = (t * batch + s) * g4;
            for j in 0..h {
                let idx = t * block + s * h + j;
                let k = s * h + j;
                let (i, f, g, o) = (cache.gates[zr + j], cache.gates[zr + h + j], cache.gates[zr + 2 * h + j], cache.gates[zr + 3 * h + j]);
                let tc = cache.cell_tanh[idx];
                let dh = d_hidden[idx] + dh_next[k];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                let c_prev = if t > 0 { cache.cells[idx - block] } else { 0.0 };
                dz[zr + j] = dc * g * i * (1.0 - i);
                dz[zr + h + j] = dc * c_prev * f * (1.0 - f);
                dz[zr + 2 * h + j] = dc * i * (1.0 - g * g);
                dz[zr + 3 * h + j] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
        }
        if t > 0 {
            let dzt = &dz[t * batch * g4..(t + 1) * batch * g4];
            gemm(1.0, Operand::new(dzt, batch, g4), Operand::new(u, h, g4).t(), 0.0, &mut dh_next);
        }
    }
    let mut dw = vec![0.0; input_dim * g4];
    gemm(1.0, Operand::new(&cache.input, rows, input_dim).t(), Operand::new(&dz, rows, g4), 0.0, &mut dw);
    let mut du = vec![0.0; h * g4];
    if steps > 1 {
        let prev_rows = (steps - 1) * batch;
        gemm(
            1.0,
            Operand::new(&cache.hidden_seq[..prev_rows * h], prev_rows, h).t(),
            Operand::new(&dz[batch * g4..], prev_rows, g4),
            0.0,
            &mut du,
        );
    }
    let input = need_input.then(|| {
        let mut dx = vec![0.0; rows * input_dim];
        gemm(1.0, Operand::new(&dz, rows, g4), Operand::new(w, input_dim, g4).t(), 0.0, &mut dx);
        dx
    });
    LstmGrads { w: dw, u: du, b: column_sums(&dz, rows, g4), input }
}

/// Valid 1-D convolution followed by ReLU and non-overlapping max pooling.
pub(crate) struct ConvCache {
    pub batch: usize,
    pub out_len: usize,
    pub pooled_len: usize,
    pub filters: usize,
    pub pool: usize,
    /// `batch*out_len x kernel*features` patches.
    pub patches: Vec<f64>,
    /// Pre-activation, `batch*out_len x filters`.
    pub pre: Vec<f64>,
    /// Pooled output, `batch x pooled_len x filters`.
    pub pooled: Vec<f64>,
    /// Position in `pre` that won each pooled cell.
    pub argmax: Vec<u32>,
}

pub(crate) struct ConvShape {
    pub window: usize,
    pub features: usize,
    pub kernel: usize,
    pub pool: usize,
}

pub(crate) fn conv_pool_forward(x: &[f64], batch: usize, shape: &ConvShape, w: &[f64], b: &[f64]) -> ConvCache {
    let ConvShape { window, features, kernel, pool } = *shape;
    let filters = b.len();
    let out_len = window + 1 - kernel;
    let pooled_len = out_len / pool;
    let width = kernel * features;
    let mut patches = Vec::with_capacity(batch * out_len * width);
    for s in 0..batch {
        let base = s * window * features;
        for t in 0..out_len {
            patches.extend_from_slice(&x[base + t * features..base + t * features + width]);
        }
    }
    let rows = batch * out_len;
    let mut pre = Vec::with_capacity(rows * filters);
    for _ in 0..rows {
        pre.extend_from_slice(b);
    }
    gemm(1.0, Operand::new(&patches, rows, width), Operand::new(w, width, filters), 1.0, &mut pre);
    let mut pooled = vec![0.0; batch * pooled_len * filters];
    let mut argmax = vec![0u32; batch * pooled_len * filters];
    for s in 0..batch {
        for p in 0..pooled_len {
            for c in 0..filters {
                let mut best = f64::NEG_INFINITY;
                let mut at = 0;
                for q in 0..pool {
                    let idx = (s * out_len + p * pool + q) * filters + c;
                    let v = pre[idx].max(0.0);
                    if v > best {
                        best = v;
                        at = idx;
                    }
                }
                let o = (s * pooled_len + p) * filters + c;
                pooled[o] = best;
                argmax[o] = at as u32;
            }
        }
    }
    ConvCache { batch, out_len, pooled_len, filters, pool, patches, pre, pooled, argmax }
}

/// Gradients of the conv weights and bias given d(loss)/d(pooled).
pub(crate) fn conv_pool_backward(cache: &ConvCache, d_pooled: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = cache.batch * cache.out_len;
    let mut d_pre = vec![0.0; rows * cache.filters];
    for (o, &at) in cache.argmax.iter().enumerate() {
        let at = at as usize;
        if cache.pre[at] > 0.0 {
            d_pre[at] += d_pooled[o];
        }
    }
    let mut dw = vec![0.0; width * cache.filters];
    gemm(1.0, Operand::new(&cache.patches, rows, width).t(), Operand::new(&d_pre, rows, cache.filters), 0.0, &mut dw);
    (dw, column_sums(&d_pre, rows, cache.filters))
}

impl ConvCache {
    /// Distance to the nearest ReLU hinge or pooling tie among positive values.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = self.pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        for s in 0..self.batch {
            for p in 0..self.pooled_len {
                for c in 0..self.filters {
                    let o = (s * self.pooled_len + p) * self.filters + c;
                    let winner = self.pooled[o];
                    if winner <= 0.0 {
                        continue;
                    }
                    for q in 0..self.pool {
                        let idx = (s * self.out_len + p * self.pool + q) * self.filters + c;
                        if idx != self.argmax[o] as usize {
                            margin = margin.min(winner - self.pre[idx].max(0.0));
                        }
                    }
                }
            }
        }
        margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn random(len: usize, rng: &mut Rng) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-0.8..0.8)).collect()
    }

    #[test]
    fn zero_cell_hand_values() {
        let p = LstmCellParams::zeros(3, 2);
        let (h, c) = lstm_cell(&[1.0, -2.0, 0.5], &[0.3, 0.1], &[0.0, 0.0], &p).unwrap();
        assert_eq!((h, c), (vec![0.0, 0.0], vec![0.0, 0.0]));
        let (_, c) = lstm_cell(&[1.0, -2.0, 0.5], &[0.0, 0.0], &[0.8, -4.0], &p).unwrap();
        assert_eq!(c, vec![0.4, -2.0]);
        assert!(lstm_cell(&[1.0], &[0.0, 0.0], &[0.0, 0.0], &p).is_err());
    }

    #[test]
    fn cell_hidden_stays_bounded() {
        let mut rng = seed::rng(5);
        let p = LstmCellParams { input_dim: 4, hidden_dim: 3, w: random(48, &mut rng), u: random(36, &mut rng), b: random(12, &mut rng) };
        let x: Vec<f64> = random(4, &mut rng).iter().map(|v| v * 100.0).collect();
        let (h, _) = lstm_cell(&x, &[0.9, -0.9, 0.0], &[5.0, -5.0, 1.0], &p).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn batched_layer_matches_cell() {
        let mut rng = seed::rng(6);
        let (steps, batch, d, h) = (4, 3, 2, 5);
        let p = LstmCellParams { input_dim: d, hidden_dim: h, w: random(d * 4 * h, &mut rng), u: random(h * 4 * h, &mut rng), b: random(4 * h, &mut rng) };
        let input = random(steps * batch * d, &mut rng);
        let cache = lstm_forward(input.clone(), steps, batch, d, &p.w, &p.u, &p.b);
        for s in 0..batch {
            let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
            for t in 0..steps {
                let x = &input[(t * batch + s) * d..(t * batch + s + 1) * d];
                let (hn, cn) = lstm_cell(x, &hs, &cs, &p).unwrap();
                hs = hn;
                cs = cn;
                let got = &cache.hidden_seq[(t * batch + s) * h..(t * batch + s + 1) * h];
                for (a, b) in got.iter().zip(&hs) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn conv_output_lengths() {
        let shape = ConvShape { window: 30, features: 2, kernel: 3, pool: 2 };
        let x = vec![0.1; 30 * 2];
        let cache = conv_pool_forward(&x, 1, &shape, &[0.0; 6 * 4], &[0.0; 4]);
        assert_eq!((cache.out_len, cache.pooled_len), (28, 14));
        let shape = ConvShape { window: 7, features: 1, kernel: 3, pool: 2 };
        let cache = conv_pool_forward(&[0.0; 7], 1, &shape, &[0.0; 3], &[0.0]);
        assert_eq!((cache.out_len, cache.pooled_len), (5, 2));
    }

    #[test]
    fn dropout_mask_scaling() {
        let mut rng = seed::rng(8);
        let mask = dropout_mask(10_000, 0.25, &mut rng);
        assert!(mask.iter().all(|&m| m == 0.0 || (m - 1.0 / 0.75).abs() < 1e-15));
        let mean = mask.iter().sum::<f64>() / mask.len() as f64;
        assert!((mean - 1.0).abs() < 0.03);
    }
}
