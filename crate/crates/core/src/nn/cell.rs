use rand::Rng;

use super::{NnError, Tensor};

/// Weights and biases of one LSTM layer. Every gate matrix is
/// `[hidden × (input_dim + hidden)]` and acts on `[x_t, h_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input_dim + hidden]);
        let b = || Tensor::zeros(&[hidden]);
        LstmLayerParams {
            input_dim,
            hidden,
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_c: w(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    /// Uniform weights in `±1/√(input_dim + hidden)`, forget bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let bound = 1.0 / ((input_dim + hidden) as f64).sqrt();
        for w in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_c] {
            for x in w.data_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        p.b_f.fill(1.0);
        p
    }

    /// Parameter tensors in a fixed order: weights i, f, o, c then biases.
    pub fn tensors(&self) -> [&Tensor; 8] {
        [&self.w_i, &self.w_f, &self.w_o, &self.w_c, &self.b_i, &self.b_f, &self.b_o, &self.b_c]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_c,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one cell step kept for backpropagation.
#[derive(Debug, Clone)]
pub struct CellCache {
    /// `[x_t, h_{t-1}]`
    pub z: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// candidate `c̃_t`
    pub g: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn lstm_cell_forward(p: &LstmLayerParams, x: &[f64], state: &LstmState) -> Result<(LstmState, CellCache), NnError> {
    if x.len() != p.input_dim {
        return Err(NnError::ShapeMismatch {
            what: "cell input",
            expected: p.input_dim,
            got: x.len(),
        });
    }
    if state.h.len() != p.hidden || state.c.len() != p.hidden {
        return Err(NnError::ShapeMismatch {
            what: "cell state",
            expected: p.hidden,
            got: state.h.len().min(state.c.len()),
        });
    }
    let n = p.hidden;
    let mut z = Vec::with_capacity(p.input_dim + n);
    z.extend_from_slice(x);
    z.extend_from_slice(&state.h);

    let mut i = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut o = vec![0.0; n];
    let mut g = vec![0.0; n];
    p.w_i.affine_into(&z, &p.b_i, &mut i);
    p.w_f.affine_into(&z, &p.b_f, &mut f);
    p.w_o.affine_into(&z, &p.b_o, &mut o);
    p.w_c.affine_into(&z, &p.b_c, &mut g);
    let mut c = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    for k in 0..n {
        i[k] = sigmoid(i[k]);
        f[k] = sigmoid(f[k]);
        o[k] = sigmoid(o[k]);
        g[k] = g[k].tanh();
        c[k] = f[k] * state.c[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
    let cache = CellCache {
        z,
        i,
        f,
        o,
        g,
        c_prev: state.c.clone(),
        tanh_c,
    };
    Ok((LstmState { h, c }, cache))
}

/// Backpropagates one step. `dh` is the full gradient on `h_t`, `dc` the
/// gradient arriving on `c_t` from the next step. Accumulates parameter
/// gradients into `grads` and returns `(dx, dh_prev, dc_prev)`.
pub(crate) fn lstm_cell_backward(
    p: &LstmLayerParams,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmLayerParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = p.hidden;
    let mut da_i = vec![0.0; n];
    let mut da_f = vec![0.0; n];
    let mut da_o = vec![0.0; n];
    let mut da_g = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let (i, f, o, g, t) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dct = dc[k] + dh[k] * o * (1.0 - t * t);
        da_o[k] = dh[k] * t * o * (1.0 - o);
        da_i[k] = dct * g * i * (1.0 - i);
        da_f[k] = dct * cache.c_prev[k] * f * (1.0 - f);
        da_g[k] = dct * i * (1.0 - g * g);
        dc_prev[k] = dct * f;
    }
    let mut dz = vec![0.0; p.input_dim + n];
    for (w, gw, gb, da) in [
        (&p.w_i, &mut grads.w_i, &mut grads.b_i, &da_i),
        (&p.w_f, &mut grads.w_f, &mut grads.b_f, &da_f),
        (&p.w_o, &mut grads.w_o, &mut grads.b_o, &da_o),
        (&p.w_c, &mut grads.w_c, &mut grads.b_c, &da_g),
    ] {
        gw.add_outer(da, &cache.z);
        for (b, d) in gb.data_mut().iter_mut().zip(da.iter()) {
            *b += d;
        }
        w.add_transpose_mul(da, &mut dz);
    }
    let dh_prev = dz.split_off(p.input_dim);
    (dz, dh_prev, dc_prev)
}

/// Allocation-free step for inference; `pre` must hold `4 * hidden` values.
pub(crate) fn lstm_cell_step(p: &LstmLayerParams, z: &[f64], c: &mut [f64], h: &mut [f64], pre: &mut [f64]) {
    let n = p.hidden;
    let (pi, rest) = pre.split_at_mut(n);
    let (pf, rest) = rest.split_at_mut(n);
    let (po, pg) = rest.split_at_mut(n);
    p.w_i.affine_into(z, &p.b_i, pi);
    p.w_f.affine_into(z, &p.b_f, pf);
    p.w_o.affine_into(z, &p.b_o, po);
    p.w_c.affine_into(z, &p.b_c, &mut pg[..n]);
    for k in 0..n {
        c[k] = sigmoid(pf[k]) * c[k] + sigmoid(pi[k]) * pg[k].tanh();
        h[k] = sigmoid(po[k]) * c[k].tanh();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_zero_state() {
        let p = LstmLayerParams::zeros(2, 3);
        let (s, cache) = lstm_cell_forward(&p, &[1.0, -2.0], &LstmState::zeros(3)).unwrap();
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&g| g == 0.5));
        assert!(cache.g.iter().all(|&g| g == 0.0));
        assert_eq!(s.c, vec![0.0; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn zero_weights_carry_half_the_cell() {
        let p = LstmLayerParams::zeros(2, 3);
        let prev = LstmState {
            h: vec![0.0; 3],
            c: vec![1.0, -4.0, 0.25],
        };
        let (s, _) = lstm_cell_forward(&p, &[0.3, 0.7], &prev).unwrap();
        for (k, &v) in prev.c.iter().enumerate() {
            assert_eq!(s.c[k], 0.5 * v);
            assert_eq!(s.h[k], 0.5 * (0.5 * v).tanh());
        }
    }

    #[test]
    fn shape_checked() {
        let p = LstmLayerParams::zeros(2, 3);
        assert!(matches!(
            lstm_cell_forward(&p, &[1.0], &LstmState::zeros(3)),
            Err(NnError::ShapeMismatch { expected: 2, got: 1, .. })
        ));
        assert!(lstm_cell_forward(&p, &[1.0, 2.0], &LstmState::zeros(2)).is_err());
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (nin, n) = (2, 3);
        let mut p = LstmLayerParams::init(nin, n, &mut rng);
        for b in [&mut p.b_i, &mut p.b_f, &mut p.b_o, &mut p.b_c] {
            for x in b.data_mut() {
                *x = rng.random_range(-0.5..0.5);
            }
        }
        let x = [0.4, -1.3];
        let prev = LstmState {
            h: vec![0.2, -0.1, 0.6],
            c: vec![-0.7, 0.3, 1.1],
        };
        let (s, _) = lstm_cell_forward(&p, &x, &prev).unwrap();

        // straight-line scalar version
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let inp = [x[0], x[1], prev.h[0], prev.h[1], prev.h[2]];
        for k in 0..n {
            let lin = |w: &Tensor, b: &Tensor| {
                let mut acc = b.data()[k];
                for j in 0..nin + n {
                    acc += w.data()[k * (nin + n) + j] * inp[j];
                }
                acc
            };
            let i = sig(lin(&p.w_i, &p.b_i));
            let f = sig(lin(&p.w_f, &p.b_f));
            let o = sig(lin(&p.w_o, &p.b_o));
            let g = lin(&p.w_c, &p.b_c).tanh();
            let c = f * prev.c[k] + i * g;
            let h = o * c.tanh();
            assert!((s.c[k] - c).abs() < 1e-12);
            assert!((s.h[k] - h).abs() < 1e-12);
        }

        let mut c = prev.c.clone();
        let mut h = vec![0.0; n];
        let mut pre = vec![0.0; 4 * n];
        lstm_cell_step(&p, &inp, &mut c, &mut h, &mut pre);
        assert_eq!(c, s.c);
        assert_eq!(h, s.h);
    }

    #[test]
    fn sigmoid_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
