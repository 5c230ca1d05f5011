//! Encoder-decoder LSTM with a per-timestep dense head.
//!
//! The encoder stack reads the `T` input days. Only the top encoder layer's
//! final hidden state leaves the encoder; it is repeated as the input at every
//! one of the `T` decoder steps. The decoder stack starts from zero state, and
//! the same dense head (ReLU hidden layers, linear output) maps each decoder
//! step's top hidden state to one RUL value.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{fill_uniform, layer_backward, layer_forward, LayerCache, LstmParams};
use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const DEFAULT_DENSE_WIDTHS: [usize; 5] = [64, 32, 16, 8, 1];

/// The six (units, encoder layers, decoder layers) configurations compared in
/// the sweep harness, in table order.
pub const SWEEP_CONFIGS: [(usize, usize, usize); 6] = [
    (50, 1, 1),
    (100, 1, 1),
    (200, 1, 1),
    (100, 1, 3),
    (100, 3, 1),
    (100, 2, 2),
];

/// Gain applied to every input value before the first encoder layer. Inputs
/// arrive in [0, 255]; unscaled, they saturate the gates at initialization.
pub const DEFAULT_INPUT_GAIN: f64 = 1.0 / 255.0;

fn default_input_gain() -> f64 {
    DEFAULT_INPUT_GAIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderDecoderConfig {
    pub units_per_layer: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Dense head widths, ending in 1.
    pub dense_widths: Vec<usize>,
    pub input_features: usize,
    pub timesteps: usize,
    #[serde(default = "default_input_gain")]
    pub input_gain: f64,
}

impl EncoderDecoderConfig {
    pub fn new(
        units_per_layer: usize,
        encoder_layers: usize,
        decoder_layers: usize,
        input_features: usize,
        timesteps: usize,
    ) -> Self {
        EncoderDecoderConfig {
            units_per_layer,
            encoder_layers,
            decoder_layers,
            dense_widths: DEFAULT_DENSE_WIDTHS.to_vec(),
            input_features,
            timesteps,
            input_gain: DEFAULT_INPUT_GAIN,
        }
    }

    /// Row `id` (1-based) of [`SWEEP_CONFIGS`].
    pub fn sweep_row(id: usize, input_features: usize, timesteps: usize) -> Result<Self> {
        let (u, e, d) = *id
            .checked_sub(1)
            .and_then(|i| SWEEP_CONFIGS.get(i))
            .ok_or_else(|| Error::domain(format!("configuration {id} outside 1..=6")))?;
        Ok(Self::new(u, e, d, input_features, timesteps))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.units_per_layer,
            self.encoder_layers,
            self.decoder_layers,
            self.input_features,
            self.timesteps,
        ];
        if positive.contains(&0) || self.dense_widths.contains(&0) {
            return Err(Error::domain("model config: sizes must be positive"));
        }
        if !(self.input_gain.is_finite() && self.input_gain > 0.0) {
            return Err(Error::domain("model config: input_gain must be positive"));
        }
        if self.dense_widths.last() != Some(&1) {
            return Err(Error::domain("model config: dense widths must end in 1"));
        }
        Ok(())
    }

    fn encoder_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_features
        } else {
            self.units_per_layer
        }
    }

    /// Total learnable scalars, from the layer shapes alone.
    pub fn parameter_count(&self) -> usize {
        let h = self.units_per_layer;
        let enc: usize = (0..self.encoder_layers)
            .map(|l| LstmParams::<f64>::parameter_count(self.encoder_input(l), h))
            .sum();
        let dec = self.decoder_layers * LstmParams::<f64>::parameter_count(h, h);
        let mut prev = h;
        let mut dense = 0;
        for &w in &self.dense_widths {
            dense += w * prev + w;
            prev = w;
        }
        enc + dec + dense
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<S> {
    /// `out x in`
    pub w: Matrix<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> DenseLayer<S> {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            w: Matrix::zeros(output, input),
            b: vec![S::zero(); output],
        }
    }
}

/// Every learnable tensor of the model. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters<S> {
    pub encoder: Vec<LstmParams<S>>,
    pub decoder: Vec<LstmParams<S>>,
    pub head: Vec<DenseLayer<S>>,
}

impl<S: Scalar> Parameters<S> {
    pub fn zeros(config: &EncoderDecoderConfig) -> Self {
        let h = config.units_per_layer;
        let mut prev = h;
        Parameters {
            encoder: (0..config.encoder_layers)
                .map(|l| LstmParams::zeros(config.encoder_input(l), h))
                .collect(),
            decoder: (0..config.decoder_layers)
                .map(|_| LstmParams::zeros(h, h))
                .collect(),
            head: config
                .dense_widths
                .iter()
                .map(|&w| {
                    let d = DenseLayer::zeros(prev, w);
                    prev = w;
                    d
                })
                .collect(),
        }
    }

    /// Flat views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[S]> {
        let mut out = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder) {
            out.extend(l.tensors());
        }
        for d in &self.head {
            out.push(d.w.as_slice());
            out.push(&d.b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        let mut out = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(l.tensors_mut());
        }
        for d in &mut self.head {
            out.push(d.w.as_mut_slice());
            out.push(&mut d.b);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Parameters<S>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, s: S) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v * s);
        }
    }

    pub fn fill(&mut self, value: S) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| {
                let v = v.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Fixed affine (optionally log-domain) map between RUL days and the space the
/// network is trained in: `net = (g(rul) − offset) / scale`, with `g` either
/// the identity or `ln(1 + ·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub offset: f64,
    pub scale: f64,
    pub log1p: bool,
}

impl Default for TargetTransform {
    fn default() -> Self {
        TargetTransform {
            offset: 0.0,
            scale: 1.0,
            log1p: false,
        }
    }
}

impl TargetTransform {
    /// Standardizes `g(targets)` to zero mean and unit variance.
    pub fn fit(targets: &[f64], log1p: bool) -> Self {
        let g = |v: f64| if log1p { v.ln_1p() } else { v };
        let n = targets.len().max(1) as f64;
        let mean = targets.iter().map(|&v| g(v)).sum::<f64>() / n;
        let var = targets.iter().map(|&v| (g(v) - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        TargetTransform {
            offset: mean,
            scale: if std > 1e-12 { std } else { 1.0 },
            log1p,
        }
    }

    pub fn encode(&self, rul: f64) -> f64 {
        let g = if self.log1p { rul.ln_1p() } else { rul };
        (g - self.offset) / self.scale
    }

    pub fn decode(&self, net: f64) -> f64 {
        let g = net * self.scale + self.offset;
        if self.log1p {
            g.exp_m1()
        } else {
            g
        }
    }
}

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EncoderDecoderModel<S> {
    config: EncoderDecoderConfig,
    params: Parameters<S>,
    pub target: TargetTransform,
    /// Changes whenever parameters may have changed; ties caches to a state.
    #[serde(skip, default = "fresh_id")]
    version: u64,
}

impl<S: Clone> Clone for EncoderDecoderModel<S> {
    fn clone(&self) -> Self {
        EncoderDecoderModel {
            config: self.config.clone(),
            params: self.params.clone(),
            target: self.target,
            version: fresh_id(),
        }
    }
}

impl<S: PartialEq> PartialEq for EncoderDecoderModel<S> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.target == other.target
    }
}

impl<S: Scalar> EncoderDecoderModel<S> {
    pub fn zeros(config: EncoderDecoderConfig) -> Result<Self> {
        config.validate()?;
        let params = Parameters::zeros(&config);
        Ok(EncoderDecoderModel {
            config,
            params,
            target: TargetTransform::default(),
            version: fresh_id(),
        })
    }

    /// Seeded uniform(−1/√fan_in, 1/√fan_in) weights, zero biases.
    pub fn init(config: EncoderDecoderConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = model.config.units_per_layer;
        for (l, layer) in model.params.encoder.iter_mut().enumerate() {
            *layer = LstmParams::init(model.config.encoder_input(l), h, &mut rng);
        }
        for layer in &mut model.params.decoder {
            *layer = LstmParams::init(h, h, &mut rng);
        }
        for d in &mut model.params.head {
            let fan_in = d.w.cols();
            fill_uniform(d.w.as_mut_slice(), fan_in, &mut rng);
        }
        Ok(model)
    }

    pub fn from_parts(
        config: EncoderDecoderConfig,
        params: Parameters<S>,
        target: TargetTransform,
    ) -> Result<Self> {
        config.validate()?;
        let expected = Parameters::<S>::zeros(&config);
        let shapes_match = expected
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|(a, b)| a.len() == b.len())
            && expected.tensors().len() == params.tensors().len();
        if !shapes_match {
            return Err(Error::domain("parameter shapes do not match model config"));
        }
        if !params.is_finite() {
            return Err(Error::numeric("model parameters contain non-finite values"));
        }
        Ok(EncoderDecoderModel {
            config,
            params,
            target,
            version: fresh_id(),
        })
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        &self.config
    }

    pub fn params(&self) -> &Parameters<S> {
        &self.params
    }

    /// Mutable access invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut Parameters<S> {
        self.version = fresh_id();
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    fn check_input(&self, x: &[S], batch: usize) -> Result<()> {
        let per = self.config.timesteps * self.config.input_features;
        if x.len() != batch * per {
            return Err(Error::domain(format!(
                "input has {} values, expected {batch} x {} x {}",
                x.len(),
                self.config.timesteps,
                self.config.input_features
            )));
        }
        Ok(())
    }

    /// Batch forward pass. `x` is `B x T x F` row-major; the output is `B x T`
    /// in the network's target space (see [`TargetTransform`]).
    pub fn forward(&self, x: &[S], batch: usize) -> Result<(Vec<S>, ForwardCache<S>)> {
        self.check_input(x, batch)?;
        let per = self.config.timesteps * self.config.input_features;
        let samples: Vec<SampleCache<S>> = x
            .chunks_exact(per.max(1))
            .take(batch)
            .map(|xs| forward_sample(&self.config, &self.params, xs))
            .collect();
        let out = samples.iter().flat_map(|s| s.output.iter().copied()).collect();
        Ok((
            out,
            ForwardCache {
                version: self.version,
                batch,
                samples,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &[S], batch: usize) -> Result<Vec<S>> {
        self.check_input(x, batch)?;
        let per = self.config.timesteps * self.config.input_features;
        Ok(x.chunks_exact(per.max(1))
            .take(batch)
            .flat_map(|xs| forward_sample(&self.config, &self.params, xs).output)
            .collect())
    }

    /// Gradient of `mean over (sample, step) of (ŷ − y)²` w.r.t. every
    /// parameter, for the batch that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache<S>, y: &[S]) -> Result<Parameters<S>> {
        if cache.version != self.version {
            return Err(Error::domain("forward cache is stale for this model"));
        }
        let t = self.config.timesteps;
        if y.len() != cache.batch * t {
            return Err(Error::domain(format!(
                "targets have {} values, expected {} x {t}",
                y.len(),
                cache.batch
            )));
        }
        let mut grads = Parameters::zeros(&self.config);
        let norm = S::from_f64(2.0 / (cache.batch * t) as f64);
        for (s, sc) in cache.samples.iter().enumerate() {
            let dy: Vec<S> = sc
                .output
                .iter()
                .zip(&y[s * t..(s + 1) * t])
                .map(|(&p, &q)| norm * (p - q))
                .collect();
            backward_sample(&self.config, &self.params, sc, &dy, &mut grads);
        }
        Ok(grads)
    }
}

/// Activations retained from a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    version: u64,
    batch: usize,
    samples: Vec<SampleCache<S>>,
}

#[derive(Debug, Clone)]
pub(crate) struct SampleCache<S> {
    encoder: Vec<LayerCache<S>>,
    decoder: Vec<LayerCache<S>>,
    /// Per head layer, post-activation outputs, `T x width`.
    head_out: Vec<Vec<S>>,
    pub(crate) output: Vec<S>,
}

pub(crate) fn forward_sample<S: Scalar>(
    cfg: &EncoderDecoderConfig,
    p: &Parameters<S>,
    x: &[S],
) -> SampleCache<S> {
    let t = cfg.timesteps;
    let h = cfg.units_per_layer;
    let gained: Vec<S>;
    let x = if cfg.input_gain == 1.0 {
        x
    } else {
        let g = S::from_f64(cfg.input_gain);
        gained = x.iter().map(|&v| v * g).collect();
        &gained
    };
    let mut encoder = Vec::with_capacity(p.encoder.len());
    for (l, layer) in p.encoder.iter().enumerate() {
        let input = if l == 0 { x } else { encoder_outputs(&encoder, l - 1, h) };
        let cache = layer_forward(layer, input, t);
        encoder.push(cache);
    }
    let top = encoder.last().expect("at least one encoder layer");
    let context = top.h_at(t - 1, h).to_vec();
    let repeated: Vec<S> = context.iter().copied().cycle().take(t * h).collect();

    let mut decoder: Vec<LayerCache<S>> = Vec::with_capacity(p.decoder.len());
    for (l, layer) in p.decoder.iter().enumerate() {
        let input = if l == 0 {
            repeated.as_slice()
        } else {
            decoder[l - 1].outputs(h)
        };
        let cache = layer_forward(layer, input, t);
        decoder.push(cache);
    }

    let mut head_out: Vec<Vec<S>> = Vec::with_capacity(p.head.len());
    let last = p.head.len() - 1;
    for (k, d) in p.head.iter().enumerate() {
        let (width, fan_in) = d.w.shape();
        let input: &[S] = if k == 0 {
            decoder.last().expect("at least one decoder layer").outputs(h)
        } else {
            &head_out[k - 1]
        };
        let mut out = vec![S::zero(); t * width];
        for step in 0..t {
            let o = &mut out[step * width..(step + 1) * width];
            o.copy_from_slice(&d.b);
            d.w.matvec_add(&input[step * fan_in..(step + 1) * fan_in], o);
            if k != last {
                o.iter_mut().for_each(|v| *v = v.max(S::zero()));
            }
        }
        head_out.push(out);
    }
    let output = head_out.last().expect("non-empty head").clone();
    SampleCache {
        encoder,
        decoder,
        head_out,
        output,
    }
}

fn encoder_outputs<S: Scalar>(caches: &[LayerCache<S>], l: usize, h: usize) -> &[S] {
    caches[l].outputs(h)
}

/// Adds one sample's parameter gradients into `grads`, given `dy` = ∂L/∂ŷ_t.
pub(crate) fn backward_sample<S: Scalar>(
    cfg: &EncoderDecoderConfig,
    p: &Parameters<S>,
    sc: &SampleCache<S>,
    dy: &[S],
    grads: &mut Parameters<S>,
) {
    let t = cfg.timesteps;
    let h = cfg.units_per_layer;

    // Dense head, last layer first.
    let mut d_out = dy.to_vec();
    let last = p.head.len() - 1;
    for k in (0..p.head.len()).rev() {
        let d = &p.head[k];
        let (width, fan_in) = d.w.shape();
        if k != last {
            // ReLU: pass gradient only where the unit was active.
            for (g, &a) in d_out.iter_mut().zip(&sc.head_out[k]) {
                if a <= S::zero() {
                    *g = S::zero();
                }
            }
        }
        let input: &[S] = if k == 0 {
            sc.decoder.last().expect("decoder").outputs(h)
        } else {
            &sc.head_out[k - 1]
        };
        let mut d_in = vec![S::zero(); t * fan_in];
        let g = &mut grads.head[k];
        for step in 0..t {
            let dz = &d_out[step * width..(step + 1) * width];
            g.w.add_outer(dz, &input[step * fan_in..(step + 1) * fan_in]);
            for (gb, &v) in g.b.iter_mut().zip(dz) {
                *gb = *gb + v;
            }
            d.w.matvec_t_add(dz, &mut d_in[step * fan_in..(step + 1) * fan_in]);
        }
        d_out = d_in;
    }

    // Decoder stack, top layer first; d_out is now ∂L/∂h of the top decoder layer.
    for l in (0..p.decoder.len()).rev() {
        let mut dx = vec![S::zero(); t * h];
        layer_backward(&p.decoder[l], &sc.decoder[l], &d_out, &mut grads.decoder[l], &mut dx);
        d_out = dx;
    }

    // The context vector fed every decoder step: its gradient is the sum over steps.
    let mut d_context = vec![S::zero(); h];
    for step in 0..t {
        for (c, &v) in d_context.iter_mut().zip(&d_out[step * h..(step + 1) * h]) {
            *c = *c + v;
        }
    }

    // Only the top encoder layer's final state leaves the encoder.
    let mut d_h = vec![S::zero(); t * h];
    d_h[(t - 1) * h..].copy_from_slice(&d_context);
    for l in (0..p.encoder.len()).rev() {
        let n_in = p.encoder[l].input;
        let mut dx = vec![S::zero(); t * n_in];
        layer_backward(&p.encoder[l], &sc.encoder[l], &d_h, &mut grads.encoder[l], &mut dx);
        d_h = dx;
    }
}
