use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{Example, TrainingSet};
use super::model::{backward, encode, forward, ModelParams, Step};
use super::NnError;
use crate::synth::derive_seed;

/// Examples per gradient work unit. Chunks are summed in index order so the
/// batch gradient does not depend on the thread count.
const CHUNK: usize = 16;
/// Chunks evaluated concurrently before their gradients are folded in.
const GROUP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &ModelParams) -> Self {
        AdamState {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, `ε` added after the square root.
pub fn adam_step(model: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let params = model.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
        let p = p.data_mut();
        let m = m.data_mut();
        let v = v.data_mut();
        for (k, &gk) in g.data().iter().enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub window: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    #[serde(default = "unit_scale")]
    pub feature_scale: Step,
    /// Encode values as `ln(1 + v / scale)`.
    #[serde(default)]
    pub log_value: bool,
}

fn unit_scale() -> Step {
    [1.0, 1.0]
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 1024,
            window: 20,
            hidden: 300,
            dropout_rate: 0.2,
            adam: AdamConfig::default(),
            seed: 0,
            feature_scale: unit_scale(),
            log_value: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.into()));
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.feature_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("feature_scale entries must be positive");
        }
        Ok(())
    }
}

fn chunk_grad(model: &ModelParams, chunk: &[Example], seed: u64, inv_n: f64) -> Result<(f64, ModelParams), NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grads = model.zeros_like();
    let mut sq = 0.0;
    for ex in chunk {
        let (y, tape) = forward(model, &ex.context, &ex.window, Some(&mut rng as &mut dyn RngCore))?;
        let t = encode(model, &ex.target);
        let e = [y[0] - t[0], y[1] - t[1]];
        sq += e[0] * e[0] + e[1] * e[1];
        // d/dy of sum(e²) / (2n)
        backward(model, &tape, &[e[0] * inv_n, e[1] * inv_n], &mut grads);
    }
    Ok((sq, grads))
}

/// Mean squared error over the batch and both output features, measured in
/// the model's encoded space (see [`encode`]), with its
/// exact gradient by backpropagation through time. Dropout masks derive
/// from `rng`.
pub fn loss_and_grad(model: &ModelParams, batch: &[Example], rng: &mut dyn RngCore) -> Result<(f64, ModelParams), NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyData);
    }
    let chunks: Vec<(&[Example], u64)> = batch.chunks(CHUNK).map(|c| (c, rng.next_u64())).collect();
    let inv_n = 1.0 / batch.len() as f64;
    let mut sq = 0.0;
    let mut grads = model.zeros_like();
    for group in chunks.chunks(GROUP) {
        let parts: Vec<_> = group
            .par_iter()
            .map(|(c, seed)| chunk_grad(model, c, *seed, inv_n))
            .collect::<Result<_, _>>()?;
        for (s, g) in parts {
            sq += s;
            grads.add_assign(&g);
        }
    }
    let loss = sq / (2.0 * batch.len() as f64);
    if !loss.is_finite() {
        return Err(NnError::NonFinite("loss".into()));
    }
    if !grads.is_finite() {
        return Err(NnError::NonFinite("gradient".into()));
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    /// Mean example loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Fresh model initialized from the config's seed.
pub fn init_model(config: &TrainConfig) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let mut m = ModelParams::init(config.hidden, config.dropout_rate, &mut rng);
    m.feature_scale = config.feature_scale;
    m.log_value = config.log_value;
    m
}

pub fn train(config: &TrainConfig, data: &TrainingSet) -> Result<TrainOutcome, NnError> {
    train_with(config, data, |_, _| {})
}

/// Trains with seeded per-epoch shuffling; `on_epoch(epoch, mean_loss)` runs
/// after each epoch.
pub fn train_with(config: &TrainConfig, data: &TrainingSet, mut on_epoch: impl FnMut(usize, f64)) -> Result<TrainOutcome, NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyData);
    }
    if data.window() != config.window {
        return Err(NnError::ShapeMismatch {
            what: "training window",
            expected: config.window,
            got: data.window(),
        });
    }
    let mut model = init_model(config);
    let mut adam = AdamState::new(&model);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = idx.iter().map(|&i| data.get(i)).collect();
            let (loss, grads) = loss_and_grad(&model, &batch, &mut dropout_rng)
                .map_err(|e| e.at(epoch, b))?;
            adam_step(&mut model, &grads, &mut adam, &config.adam);
            if !model.is_finite() {
                return Err(NnError::NonFinite(format!("parameters after epoch {epoch} batch {b}")));
            }
            total += loss * batch.len() as f64;
        }
        let mean = total / data.len() as f64;
        on_epoch(epoch, mean);
        loss_history.push(mean);
    }
    Ok(TrainOutcome { model, loss_history })
}

/// Uniform draw used by tests and benches to fill a model with noise.
pub fn randomize<R: Rng + ?Sized>(model: &mut ModelParams, scale: f64, rng: &mut R) {
    for t in model.tensors_mut() {
        for x in t.data_mut() {
            *x = rng.random_range(-scale..scale);
        }
    }
}
