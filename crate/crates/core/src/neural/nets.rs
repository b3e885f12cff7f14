use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{
    apply_mask, conv_pool_backward, conv_pool_forward, dense_backward, dense_forward, dropout_mask, lstm_backward, lstm_forward,
    ConvCache, ConvShape, LstmCache,
};
use super::param::{Gradients, Param};
use crate::seed::{self, Rng};
use crate::{Error, Result};

/// Result of a forward pass: `batch x horizon` outputs plus whatever the
/// backward pass needs.
pub struct Forward<C> {
    pub output: Vec<f64>,
    pub cache: C,
}

/// A feed-forward model over flattened windows (`window * n_features` values
/// per sample, oldest week first).
pub trait Network {
    type Cache;

    fn window(&self) -> usize;
    fn n_features(&self) -> usize;
    fn horizon(&self) -> usize;
    fn dropout_rate(&self) -> f64;
    fn params(&self) -> &[Param];
    fn params_mut(&mut self) -> &mut [Param];

    /// Dropout is applied only when `dropout` is `Some`.
    fn forward(&self, x: &[f64], batch: usize, dropout: Option<&mut Rng>) -> Result<Forward<Self::Cache>>;

    /// Parameter gradients given d(loss)/d(output).
    fn backward(&self, cache: &Self::Cache, d_output: &[f64]) -> Gradients;

    /// Smallest distance of any piecewise-linear unit to its hinge.
    fn kink_margin(&self, _cache: &Self::Cache) -> f64 {
        f64::INFINITY
    }

    fn input_width(&self) -> usize {
        self.window() * self.n_features()
    }

    fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward(x, batch, None)?.output)
    }
}

fn check_input(x: &[f64], batch: usize, width: usize) -> Result<()> {
    if batch == 0 || x.len() != batch * width {
        return Err(Error::DimensionMismatch { expected: batch * width, found: x.len() });
    }
    Ok(())
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

fn mask_for(len: usize, rate: f64, rng: &mut Option<&mut Rng>) -> Option<Vec<f64>> {
    match rng {
        Some(rng) if rate > 0.0 => Some(dropout_mask(len, rate, rng)),
        _ => None,
    }
}

/// Linear map from the flattened window to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    window: usize,
    n_features: usize,
    horizon: usize,
    params: Vec<Param>,
}

impl DenseNet {
    pub fn zeros(window: usize, n_features: usize, horizon: usize) -> Self {
        let inputs = window * n_features;
        Self { window, n_features, horizon, params: vec![Param::zeros("dense.w", &[inputs, horizon]), Param::zeros("dense.b", &[horizon])] }
    }

    pub fn new(window: usize, n_features: usize, horizon: usize, seed: u64) -> Self {
        let inputs = window * n_features;
        let mut rng = seed::rng(seed);
        let w = Param::fan_in_uniform("dense.w", &[inputs, horizon], inputs, &mut rng);
        let b = Param::fan_in_uniform("dense.b", &[horizon], inputs, &mut rng);
        Self { window, n_features, horizon, params: vec![w, b] }
    }
}

impl Network for DenseNet {
    type Cache = Vec<f64>;

    fn window(&self) -> usize {
        self.window
    }
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn dropout_rate(&self) -> f64 {
        0.0
    }
    fn params(&self) -> &[Param] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn forward(&self, x: &[f64], batch: usize, _dropout: Option<&mut Rng>) -> Result<Forward<Vec<f64>>> {
        check_input(x, batch, self.input_width())?;
        let output = dense_forward(x, batch, self.input_width(), &self.params[0].value, &self.params[1].value);
        Ok(Forward { output, cache: x.to_vec() })
    }

    fn backward(&self, x: &Vec<f64>, d_output: &[f64]) -> Gradients {
        let batch = d_output.len() / self.horizon;
        let g = dense_backward(x, d_output, batch, self.input_width(), &self.params[0].value, false);
        vec![g.w, g.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmConfig {
    pub layer1_units: usize,
    pub layer2_units: usize,
    pub dropout_rate: f64,
    pub window: usize,
    pub n_features: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl LstmConfig {
    pub fn new(window: usize, n_features: usize, horizon: usize, seed: u64) -> Self {
        Self { layer1_units: 150, layer2_units: 75, dropout_rate: 0.1, window, n_features, horizon, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer1_units == 0 || self.layer2_units == 0 {
            return Err(Error::InvalidConfig("LSTM units must be at least 1".into()));
        }
        if self.window == 0 || self.n_features == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("window, features and horizon must be at least 1".into()));
        }
        check_rate(self.dropout_rate)
    }
}

/// Two stacked LSTM layers (full sequence, then last state) and a dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    config: LstmConfig,
    params: Vec<Param>,
}

pub struct LstmNetCache {
    layer1: LstmCache,
    mask1: Option<Vec<f64>>,
    layer2: LstmCache,
    mask2: Option<Vec<f64>>,
    head_input: Vec<f64>,
}

fn lstm_params(prefix: &str, input_dim: usize, hidden: usize, rng: &mut Rng) -> [Param; 3] {
    let g4 = 4 * hidden;
    let w = Param::fan_in_uniform(&format!("{prefix}.w"), &[input_dim, g4], input_dim, rng);
    let u = Param::fan_in_uniform(&format!("{prefix}.u"), &[hidden, g4], hidden, rng);
    let mut b = Param::zeros(&format!("{prefix}.b"), &[g4]);
    b.value[hidden..2 * hidden].fill(1.0);
    [w, u, b]
}

impl LstmNet {
    pub fn new(config: LstmConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed);
        let (h1, h2) = (config.layer1_units, config.layer2_units);
        let mut params = Vec::with_capacity(8);
        params.extend(lstm_params("lstm1", config.n_features, h1, &mut rng));
        params.extend(lstm_params("lstm2", h1, h2, &mut rng));
        params.push(Param::fan_in_uniform("dense.w", &[h2, config.horizon], h2, &mut rng));
        params.push(Param::fan_in_uniform("dense.b", &[config.horizon], h2, &mut rng));
        Ok(Self { config, params })
    }

    /// Rebuild from stored parameters, checking every shape.
    pub fn from_params(config: LstmConfig, params: Vec<Param>) -> Result<Self> {
        let template = Self::new(LstmConfig { seed: 0, ..config })?;
        super::param::check_shapes(&template.params, &params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &LstmConfig {
        &self.config
    }
}

impl Network for LstmNet {
    type Cache = LstmNetCache;

    fn window(&self) -> usize {
        self.config.window
    }
    fn n_features(&self) -> usize {
        self.config.n_features
    }
    fn horizon(&self) -> usize {
        self.config.horizon
    }
    fn dropout_rate(&self) -> f64 {
        self.config.dropout_rate
    }
    fn params(&self) -> &[Param] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn forward(&self, x: &[f64], batch: usize, mut dropout: Option<&mut Rng>) -> Result<Forward<LstmNetCache>> {
        let LstmConfig { layer1_units: h1, layer2_units: h2, dropout_rate: rate, window: steps, n_features: f, .. } = self.config;
        check_input(x, batch, steps * f)?;
        let mut input = vec![0.0; x.len()];
        for s in 0..batch {
            for t in 0..steps {
                input[(t * batch + s) * f..(t * batch + s + 1) * f].copy_from_slice(&x[(s * steps + t) * f..(s * steps + t + 1) * f]);
            }
        }
        let p = &self.params;
        let layer1 = lstm_forward(input, steps, batch, f, &p[0].value, &p[1].value, &p[2].value);
        let mask1 = mask_for(steps * batch * h1, rate, &mut dropout);
        let mut input2 = layer1.hidden_seq.clone();
        apply_mask(&mut input2, mask1.as_ref());
        let layer2 = lstm_forward(input2, steps, batch, h1, &p[3].value, &p[4].value, &p[5].value);
        let mask2 = mask_for(batch * h2, rate, &mut dropout);
        let mut head_input = layer2.last_hidden().to_vec();
        apply_mask(&mut head_input, mask2.as_ref());
        let output = dense_forward(&head_input, batch, h2, &p[6].value, &p[7].value);
        Ok(Forward { output, cache: LstmNetCache { layer1, mask1, layer2, mask2, head_input } })
    }

    fn backward(&self, cache: &LstmNetCache, d_output: &[f64]) -> Gradients {
        let (h2, p) = (self.config.layer2_units, &self.params);
        let batch = cache.layer2.batch;
        let head = dense_backward(&cache.head_input, d_output, batch, h2, &p[6].value, true);
        let mut d_last = head.x.unwrap_or_default();
        apply_mask(&mut d_last, cache.mask2.as_ref());
        let mut d_hidden2 = vec![0.0; cache.layer2.hidden_seq.len()];
        let start = d_hidden2.len() - d_last.len();
        d_hidden2[start..].copy_from_slice(&d_last);
        let g2 = lstm_backward(&cache.layer2, &p[3].value, &p[4].value, &d_hidden2, true);
        let mut d_hidden1 = g2.input.unwrap_or_default();
        apply_mask(&mut d_hidden1, cache.mask1.as_ref());
        let g1 = lstm_backward(&cache.layer1, &p[0].value, &p[1].value, &d_hidden1, false);
        vec![g1.w, g1.u, g1.b, g2.w, g2.u, g2.b, head.w, head.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnConfig {
    pub filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub window: usize,
    pub n_features: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl CnnConfig {
    pub fn new(window: usize, n_features: usize, horizon: usize, seed: u64) -> Self {
        Self { filters: 64, kernel_size: 3, pool_size: 2, dropout_rate: 0.1, dense_units: 30, window, n_features, horizon, seed }
    }

    pub fn conv_len(&self) -> usize {
        (self.window + 1).saturating_sub(self.kernel_size)
    }

    pub fn pooled_len(&self) -> usize {
        self.conv_len() / self.pool_size.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.dense_units == 0 || self.n_features == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("filters, dense units, features and horizon must be at least 1".into()));
        }
        if self.kernel_size == 0 || self.kernel_size > self.window {
            return Err(Error::InvalidConfig(format!("kernel size {} must lie in 1..={}", self.kernel_size, self.window)));
        }
        if self.pool_size == 0 || self.pooled_len() == 0 {
            return Err(Error::InvalidConfig(format!("pool size {} leaves no output", self.pool_size)));
        }
        check_rate(self.dropout_rate)
    }

    fn shape(&self) -> ConvShape {
        ConvShape { window: self.window, features: self.n_features, kernel: self.kernel_size, pool: self.pool_size }
    }
}

/// Conv1d + ReLU, max pooling, dense ReLU layer and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnNet {
    config: CnnConfig,
    params: Vec<Param>,
}

pub struct CnnNetCache {
    conv: ConvCache,
    mask1: Option<Vec<f64>>,
    flat: Vec<f64>,
    hidden_pre: Vec<f64>,
    mask2: Option<Vec<f64>>,
    hidden: Vec<f64>,
}

impl CnnNet {
    pub fn new(config: CnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(config.seed);
        let patch = config.kernel_size * config.n_features;
        let flat = config.pooled_len() * config.filters;
        let (d, n) = (config.dense_units, config.horizon);
        let params = vec![
            Param::fan_in_uniform("conv.w", &[patch, config.filters], patch, &mut rng),
            Param::fan_in_uniform("conv.b", &[config.filters], patch, &mut rng),
            Param::fan_in_uniform("hidden.w", &[flat, d], flat, &mut rng),
            Param::fan_in_uniform("hidden.b", &[d], flat, &mut rng),
            Param::fan_in_uniform("dense.w", &[d, n], d, &mut rng),
            Param::fan_in_uniform("dense.b", &[n], d, &mut rng),
        ];
        Ok(Self { config, params })
    }

    pub fn from_params(config: CnnConfig, params: Vec<Param>) -> Result<Self> {
        let template = Self::new(CnnConfig { seed: 0, ..config })?;
        super::param::check_shapes(&template.params, &params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }
}

impl Network for CnnNet {
    type Cache = CnnNetCache;

    fn window(&self) -> usize {
        self.config.window
    }
    fn n_features(&self) -> usize {
        self.config.n_features
    }
    fn horizon(&self) -> usize {
        self.config.horizon
    }
    fn dropout_rate(&self) -> f64 {
        self.config.dropout_rate
    }
    fn params(&self) -> &[Param] {
        &self.params
    }
    fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn forward(&self, x: &[f64], batch: usize, mut dropout: Option<&mut Rng>) -> Result<Forward<CnnNetCache>> {
        let cfg = &self.config;
        check_input(x, batch, self.input_width())?;
        let p = &self.params;
        let conv = conv_pool_forward(x, batch, &cfg.shape(), &p[0].value, &p[1].value);
        let width = cfg.pooled_len() * cfg.filters;
        let mask1 = mask_for(batch * width, cfg.dropout_rate, &mut dropout);
        let mut flat = conv.pooled.clone();
        apply_mask(&mut flat, mask1.as_ref());
        let hidden_pre = dense_forward(&flat, batch, width, &p[2].value, &p[3].value);
        let mask2 = mask_for(hidden_pre.len(), cfg.dropout_rate, &mut dropout);
        let mut hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        apply_mask(&mut hidden, mask2.as_ref());
        let output = dense_forward(&hidden, batch, cfg.dense_units, &p[4].value, &p[5].value);
        Ok(Forward { output, cache: CnnNetCache { conv, mask1, flat, hidden_pre, mask2, hidden } })
    }

    fn backward(&self, cache: &CnnNetCache, d_output: &[f64]) -> Gradients {
        let cfg = &self.config;
        let p = &self.params;
        let batch = cache.conv.batch;
        let width = cfg.pooled_len() * cfg.filters;
        let head = dense_backward(&cache.hidden, d_output, batch, cfg.dense_units, &p[4].value, true);
        let mut d_hidden = head.x.unwrap_or_default();
        apply_mask(&mut d_hidden, cache.mask2.as_ref());
        for (d, pre) in d_hidden.iter_mut().zip(&cache.hidden_pre) {
            if *pre <= 0.0 {
                *d = 0.0;
            }
        }
        let hidden = dense_backward(&cache.flat, &d_hidden, batch, width, &p[2].value, true);
        let mut d_pooled = hidden.x.unwrap_or_default();
        apply_mask(&mut d_pooled, cache.mask1.as_ref());
        let (cw, cb) = conv_pool_backward(&cache.conv, &d_pooled, cfg.kernel_size * cfg.n_features);
        vec![cw, cb, hidden.w, hidden.b, head.w, head.b]
    }

    fn kink_margin(&self, cache: &CnnNetCache) -> f64 {
        cache.hidden_pre.iter().fold(cache.conv.kink_margin(), |m, v| m.min(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shapes() {
        let lstm = LstmNet::new(LstmConfig { layer1_units: 6, layer2_units: 4, ..LstmConfig::new(30, 22, 12, 1) }).unwrap();
        let x = vec![0.1; 2 * 30 * 22];
        assert_eq!(lstm.predict(&x, 2).unwrap().len(), 24);
        let cnn = CnnNet::new(CnnConfig { filters: 4, dense_units: 5, ..CnnConfig::new(30, 22, 12, 1) }).unwrap();
        assert_eq!(cnn.config().pooled_len(), 14);
        assert_eq!(cnn.predict(&x, 2).unwrap().len(), 24);
        assert!(matches!(cnn.predict(&x[1..], 2), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(lstm.predict(&x, 3), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_dense_outputs_zero() {
        let net = DenseNet::zeros(4, 3, 5);
        assert!(net.predict(&[0.7; 24], 2).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(CnnNet::new(CnnConfig { kernel_size: 31, ..CnnConfig::new(30, 2, 1, 0) }).is_err());
        assert!(CnnNet::new(CnnConfig { pool_size: 0, ..CnnConfig::new(30, 2, 1, 0) }).is_err());
        assert!(LstmNet::new(LstmConfig { dropout_rate: 1.0, ..LstmConfig::new(3, 2, 1, 0) }).is_err());
        assert!(LstmNet::new(LstmConfig { layer2_units: 0, ..LstmConfig::new(3, 2, 1, 0) }).is_err());
    }

    #[test]
    fn inference_ignores_dropout_rng() {
        let net = LstmNet::new(LstmConfig { layer1_units: 3, layer2_units: 2, dropout_rate: 0.5, ..LstmConfig::new(4, 2, 2, 3) }).unwrap();
        let x: Vec<f64> = (0..16).map(|i| f64::from(i) / 10.0).collect();
        let a = net.predict(&x, 2).unwrap();
        let b = net.predict(&x, 2).unwrap();
        assert_eq!(a, b);
        let mut rng = seed::rng(1);
        let c = net.forward(&x, 2, Some(&mut rng)).unwrap().output;
        assert_ne!(a, c);
    }
}
