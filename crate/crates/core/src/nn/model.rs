use rand::{Rng, RngCore};

use super::cell::{lstm_cell_backward, lstm_cell_step, CellCache};
use super::{lstm_cell_forward, LstmLayerParams, LstmState, NnError, Tensor};
use crate::context::CONTEXT_DIM;

/// Series features per timestep: value and cumulative count.
pub const SERIES_DIM: usize = 2;
/// Layer-1 input: context concatenated with the timestep's features.
pub const INPUT_DIM: usize = CONTEXT_DIM + SERIES_DIM;

/// One timestep of a series as model input or output: `[value, count]`.
pub type Step = [f64; SERIES_DIM];

/// Two stacked LSTM layers and a linear head on the last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// `[2 × hidden]`
    pub head_w: Tensor,
    pub head_b: Tensor,
    pub dropout_rate: f64,
    /// Per-feature divisor applied before the network sees a step. `[1, 1]`
    /// feeds raw values.
    pub feature_scale: Step,
    /// Encode scaled values as `ln(1 + v)`.
    pub log_value: bool,
}

impl ModelParams {
    pub fn zeros(hidden: usize) -> Self {
        ModelParams {
            layer1: LstmLayerParams::zeros(INPUT_DIM, hidden),
            layer2: LstmLayerParams::zeros(hidden, hidden),
            head_w: Tensor::zeros(&[SERIES_DIM, hidden]),
            head_b: Tensor::zeros(&[SERIES_DIM]),
            dropout_rate: 0.0,
            feature_scale: [1.0, 1.0],
            log_value: false,
        }
    }

    pub fn init<R: Rng + ?Sized>(hidden: usize, dropout_rate: f64, rng: &mut R) -> Self {
        let layer1 = LstmLayerParams::init(INPUT_DIM, hidden, rng);
        let layer2 = LstmLayerParams::init(hidden, hidden, rng);
        let mut head_w = Tensor::zeros(&[SERIES_DIM, hidden]);
        let bound = 1.0 / (hidden as f64).sqrt();
        for x in head_w.data_mut() {
            *x = rng.random_range(-bound..bound);
        }
        ModelParams {
            layer1,
            layer2,
            head_w,
            head_b: Tensor::zeros(&[SERIES_DIM]),
            dropout_rate,
            feature_scale: [1.0, 1.0],
            log_value: false,
        }
    }

    pub fn hidden(&self) -> usize {
        self.layer1.hidden
    }

    /// Zeroed copy with the same shapes and hyperparameters, used for gradients.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            dropout_rate: self.dropout_rate,
            feature_scale: self.feature_scale,
            log_value: self.log_value,
            ..Self::zeros(self.hidden())
        }
    }

    /// All trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.layer1.tensors().into_iter().collect();
        v.extend(self.layer2.tensors());
        v.push(&self.head_w);
        v.push(&self.head_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.layer1.tensors_mut().into_iter().collect();
        v.extend(self.layer2.tensors_mut());
        v.push(&mut self.head_w);
        v.push(&mut self.head_b);
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Activations retained by a training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    l1: Vec<CellCache>,
    l2: Vec<CellCache>,
    /// Per-timestep masks between the layers; empty when dropout is off.
    mask1: Vec<Vec<f64>>,
    mask_head: Option<Vec<f64>>,
    head_in: Vec<f64>,
}

fn dropout_mask(rate: f64, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

/// Maps a raw step into the space the network reads and predicts in.
pub fn encode(model: &ModelParams, x: &Step) -> Step {
    let v = x[0] / model.feature_scale[0];
    [if model.log_value { v.ln_1p() } else { v }, x[1] / model.feature_scale[1]]
}

/// Inverse of [`encode`].
pub fn decode(model: &ModelParams, u: &Step) -> Step {
    let v = if model.log_value { u[0].exp_m1() } else { u[0] };
    [v * model.feature_scale[0], u[1] * model.feature_scale[1]]
}

fn layer1_input(model: &ModelParams, context: &[f64; CONTEXT_DIM], x: &Step) -> [f64; INPUT_DIM] {
    let mut z = [0.0; INPUT_DIM];
    z[..CONTEXT_DIM].copy_from_slice(context);
    z[CONTEXT_DIM..].copy_from_slice(&encode(model, x));
    z
}

/// Runs the window through both layers and returns the encoded prediction
/// (see [`encode`]) with its tape. Dropout is applied only when `rng`
/// is given and the rate is positive.
pub fn forward(
    model: &ModelParams,
    context: &[f64; CONTEXT_DIM],
    window: &[Step],
    rng: Option<&mut dyn RngCore>,
) -> Result<(Step, Tape), NnError> {
    if window.is_empty() {
        return Err(NnError::ShapeMismatch {
            what: "window length",
            expected: 1,
            got: 0,
        });
    }
    let n = model.hidden();
    let rng = rng.filter(|_| model.dropout_rate > 0.0);
    let mut rng = rng;
    let mut s1 = LstmState::zeros(n);
    let mut s2 = LstmState::zeros(n);
    let mut tape = Tape {
        l1: Vec::with_capacity(window.len()),
        l2: Vec::with_capacity(window.len()),
        mask1: Vec::new(),
        mask_head: None,
        head_in: Vec::new(),
    };
    for x in window {
        let (next1, c1) = lstm_cell_forward(&model.layer1, &layer1_input(model, context, x), &s1)?;
        let mut mid = next1.h.clone();
        if let Some(r) = rng.as_deref_mut() {
            let m = dropout_mask(model.dropout_rate, n, r);
            mid.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
            tape.mask1.push(m);
        }
        let (next2, c2) = lstm_cell_forward(&model.layer2, &mid, &s2)?;
        tape.l1.push(c1);
        tape.l2.push(c2);
        s1 = next1;
        s2 = next2;
    }
    let mut head_in = s2.h;
    if let Some(r) = rng.as_deref_mut() {
        let m = dropout_mask(model.dropout_rate, n, r);
        head_in.iter_mut().zip(&m).for_each(|(v, k)| *v *= k);
        tape.mask_head = Some(m);
    }
    let mut y = [0.0; SERIES_DIM];
    model.head_w.affine_into(&head_in, &model.head_b, &mut y);
    tape.head_in = head_in;
    Ok((y, tape))
}

/// Accumulates into `grads` the gradient of a scalar loss whose derivative
/// with respect to the encoded prediction is `dy`.
pub fn backward(model: &ModelParams, tape: &Tape, dy: &Step, grads: &mut ModelParams) {
    let n = model.hidden();
    let dyh = *dy;
    grads.head_w.add_outer(&dyh, &tape.head_in);
    for (b, d) in grads.head_b.data_mut().iter_mut().zip(dyh) {
        *b += d;
    }
    let mut dh_top = vec![0.0; n];
    model.head_w.add_transpose_mul(&dyh, &mut dh_top);
    if let Some(m) = &tape.mask_head {
        dh_top.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }

    let steps = tape.l2.len();
    // gradient on each layer-1 output, gathered while unrolling layer 2
    let mut dh1_out = vec![vec![0.0; n]; steps];
    let mut dh = dh_top;
    let mut dc = vec![0.0; n];
    for t in (0..steps).rev() {
        let (mut dx, dh_prev, dc_prev) = lstm_cell_backward(&model.layer2, &tape.l2[t], &dh, &dc, &mut grads.layer2);
        if let Some(m) = tape.mask1.get(t) {
            dx.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        dh1_out[t] = dx;
        dh = dh_prev;
        dc = dc_prev;
    }

    let mut dh_next = vec![0.0; n];
    let mut dc = vec![0.0; n];
    for t in (0..steps).rev() {
        let dh: Vec<f64> = dh1_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let (_, dh_prev, dc_prev) = lstm_cell_backward(&model.layer1, &tape.l1[t], &dh, &dc, &mut grads.layer1);
        dh_next = dh_prev;
        dc = dc_prev;
    }
}

/// Reusable buffers for allocation-free inference.
#[derive(Debug, Clone)]
pub struct Scratch {
    z1: Vec<f64>,
    z2: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pre: Vec<f64>,
}

impl Scratch {
    pub fn new(model: &ModelParams) -> Self {
        let n = model.hidden();
        Scratch {
            z1: vec![0.0; INPUT_DIM + n],
            z2: vec![0.0; 2 * n],
            c1: vec![0.0; n],
            c2: vec![0.0; n],
            h1: vec![0.0; n],
            h2: vec![0.0; n],
            pre: vec![0.0; 4 * n],
        }
    }
}

/// Inference forward pass without dropout or tape, in raw units; the decoded
/// output of [`forward`] with `rng = None`.
pub fn predict(model: &ModelParams, context: &[f64; CONTEXT_DIM], window: &[Step], s: &mut Scratch) -> Step {
    let n = model.hidden();
    for v in [&mut s.c1, &mut s.c2, &mut s.h1, &mut s.h2] {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    for x in window {
        s.z1[..INPUT_DIM].copy_from_slice(&layer1_input(model, context, x));
        s.z1[INPUT_DIM..].copy_from_slice(&s.h1);
        lstm_cell_step(&model.layer1, &s.z1, &mut s.c1, &mut s.h1, &mut s.pre);
        s.z2[..n].copy_from_slice(&s.h1);
        s.z2[n..].copy_from_slice(&s.h2);
        lstm_cell_step(&model.layer2, &s.z2, &mut s.c2, &mut s.h2, &mut s.pre);
    }
    let mut y = [0.0; SERIES_DIM];
    model.head_w.affine_into(&s.h2, &model.head_b, &mut y);
    decode(model, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn window(len: usize, seed: u64) -> Vec<Step> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| [rng.random_range(0.0..3.0), rng.random_range(0.0..4.0)]).collect()
    }

    #[test]
    fn zero_model_predicts_head_bias() {
        let m = ModelParams::zeros(4);
        let (y, _) = forward(&m, &[2.0; 6], &window(20, 1), None).unwrap();
        assert_eq!(y, [0.0, 0.0]);
    }

    #[test]
    fn inference_is_repeatable_and_matches_predict() {
        let m = ModelParams::init(5, 0.2, &mut ChaCha8Rng::seed_from_u64(2));
        let w = window(20, 3);
        let ctx = [1.5, 2.0, 2.5, 1.0, 3.0, 1.2];
        let (a, _) = forward(&m, &ctx, &w, None).unwrap();
        let (b, _) = forward(&m, &ctx, &w, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(predict(&m, &ctx, &w, &mut Scratch::new(&m)), decode(&m, &a));
    }

    #[test]
    fn zero_dropout_training_equals_inference() {
        let m = ModelParams::init(5, 0.0, &mut ChaCha8Rng::seed_from_u64(4));
        let w = window(20, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, _) = forward(&m, &[2.0; 6], &w, Some(&mut rng)).unwrap();
        let (b, _) = forward(&m, &[2.0; 6], &w, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_changes_training_output() {
        let m = ModelParams::init(8, 0.5, &mut ChaCha8Rng::seed_from_u64(6));
        let w = window(10, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, _) = forward(&m, &[2.0; 6], &w, Some(&mut rng)).unwrap();
        let (b, _) = forward(&m, &[2.0; 6], &w, None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn encode_round_trips() {
        let mut m = ModelParams::zeros(2);
        m.feature_scale = [3.0, 2.0];
        for log_value in [false, true] {
            m.log_value = log_value;
            for x in [[0.0, 0.0], [0.05, 1.0], [912.5, 24.0]] {
                let back = decode(&m, &encode(&m, &x));
                assert!((back[0] - x[0]).abs() <= 1e-12 * x[0].max(1.0) && back[1] == x[1], "{x:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn empty_window_rejected() {
        let m = ModelParams::zeros(2);
        assert!(forward(&m, &[1.0; 6], &[], None).is_err());
    }

    #[test]
    fn hidden_state_bounded() {
        let mut m = ModelParams::init(6, 0.0, &mut ChaCha8Rng::seed_from_u64(8));
        m.scale(50.0);
        let w: Vec<Step> = (0..20).map(|i| [1e6 * i as f64, -1e6]).collect();
        let (_, tape) = forward(&m, &[3.0; 6], &w, None).unwrap();
        for c in tape.l1.iter().chain(&tape.l2) {
            for (o, t) in c.o.iter().zip(&c.tanh_c) {
                assert!((o * t).abs() <= 1.0);
            }
        }
    }
}
