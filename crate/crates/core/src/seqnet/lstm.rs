//! LSTM cell and single-layer unrolling with backpropagation through time.
//!
//! Per step, with σ the logistic sigmoid:
//!
//! ```text
//! f_t  = σ(W_f h_{t-1} + U_f x_t + b_f)
//! i_t  = σ(W_i h_{t-1} + U_i x_t + b_i)
//! C̃_t  = tanh(W_C h_{t-1} + U_C x_t + b_C)
//! C_t  = f_t ⊙ C_{t-1} + i_t ⊙ C̃_t
//! o_t  = σ(W_o h_{t-1} + U_o x_t + b_o)
//! h_t  = o_t ⊙ tanh(C_t)
//! ```
//!
//! The four gate blocks are stored stacked in the order f, i, C̃, o.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scalar::{sigmoid, Scalar};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];
}

/// Weights of one LSTM layer: `W_•` (recurrent, `hidden x hidden`), `U_•`
/// (input, `hidden x input`) and `b_•`, each stacked over the four gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams<S> {
    pub input: usize,
    pub hidden: usize,
    /// `4·hidden x hidden`
    pub w: Matrix<S>,
    /// `4·hidden x input`
    pub u: Matrix<S>,
    /// `4·hidden`
    pub b: Vec<S>,
}

impl<S: Scalar> LstmParams<S> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input,
            hidden,
            w: Matrix::zeros(4 * hidden, hidden),
            u: Matrix::zeros(4 * hidden, input),
            b: vec![S::zero(); 4 * hidden],
        }
    }

    /// Uniform(−k, k) with k = 1/√fan_in for each matrix; zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        fill_uniform(p.w.as_mut_slice(), hidden, rng);
        fill_uniform(p.u.as_mut_slice(), input, rng);
        p
    }

    pub fn parameter_count(input: usize, hidden: usize) -> usize {
        4 * (hidden * hidden + hidden * input + hidden)
    }

    /// Rows `[gate·hidden, (gate+1)·hidden)` of the recurrent matrix.
    pub fn w_gate(&self, gate: Gate) -> &[S] {
        let h = self.hidden;
        &self.w.as_slice()[gate as usize * h * h..(gate as usize + 1) * h * h]
    }

    pub fn u_gate(&self, gate: Gate) -> &[S] {
        let (h, n) = (self.hidden, self.input);
        &self.u.as_slice()[gate as usize * h * n..(gate as usize + 1) * h * n]
    }

    pub fn b_gate(&self, gate: Gate) -> &[S] {
        let h = self.hidden;
        &self.b[gate as usize * h..(gate as usize + 1) * h]
    }

    pub fn w_gate_mut(&mut self, gate: Gate) -> &mut [S] {
        let h = self.hidden;
        &mut self.w.as_mut_slice()[gate as usize * h * h..(gate as usize + 1) * h * h]
    }

    pub fn u_gate_mut(&mut self, gate: Gate) -> &mut [S] {
        let (h, n) = (self.hidden, self.input);
        &mut self.u.as_mut_slice()[gate as usize * h * n..(gate as usize + 1) * h * n]
    }

    pub fn b_gate_mut(&mut self, gate: Gate) -> &mut [S] {
        let h = self.hidden;
        &mut self.b[gate as usize * h..(gate as usize + 1) * h]
    }

    pub(crate) fn tensors(&self) -> [&[S]; 3] {
        [self.w.as_slice(), self.u.as_slice(), &self.b]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [S]; 3] {
        [self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

pub(crate) fn fill_uniform<S: Scalar, R: Rng>(values: &mut [S], fan_in: usize, rng: &mut R) {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = S::from_f64(rng.random_range(-k..k));
    }
}

/// Everything one step produces; the gate activations are kept for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
    pub f: Vec<S>,
    pub i: Vec<S>,
    /// Candidate cell values C̃_t.
    pub candidate: Vec<S>,
    pub o: Vec<S>,
}

/// One application of the cell equations.
pub fn lstm_cell_step<S: Scalar>(
    params: &LstmParams<S>,
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
) -> Result<LstmCellState<S>> {
    let hd = params.hidden;
    if x.len() != params.input || h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::domain(format!(
            "lstm step: expected x[{}], h[{hd}], C[{hd}]; got x[{}], h[{}], C[{}]",
            params.input,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    if x.iter().chain(h_prev).chain(c_prev).any(|v| !v.is_finite()) {
        return Err(Error::numeric("lstm step: non-finite input"));
    }
    let mut z = vec![S::zero(); 4 * hd];
    let mut out = StepOut::new(hd);
    step(params, x, h_prev, c_prev, &mut z, &mut out);
    Ok(LstmCellState {
        h: out.h,
        c: out.c,
        f: out.f,
        i: out.i,
        candidate: out.g,
        o: out.o,
    })
}

struct StepOut<S> {
    f: Vec<S>,
    i: Vec<S>,
    g: Vec<S>,
    o: Vec<S>,
    c: Vec<S>,
    tanh_c: Vec<S>,
    h: Vec<S>,
}

impl<S: Scalar> StepOut<S> {
    fn new(hd: usize) -> Self {
        let z = || vec![S::zero(); hd];
        StepOut {
            f: z(),
            i: z(),
            g: z(),
            o: z(),
            c: z(),
            tanh_c: z(),
            h: z(),
        }
    }
}

#[inline]
fn step<S: Scalar>(
    p: &LstmParams<S>,
    x: &[S],
    h_prev: &[S],
    c_prev: &[S],
    z: &mut [S],
    out: &mut StepOut<S>,
) {
    let hd = p.hidden;
    z.copy_from_slice(&p.b);
    p.w.matvec_add(h_prev, z);
    p.u.matvec_add(x, z);
    for k in 0..hd {
        let f = sigmoid(z[k]);
        let i = sigmoid(z[hd + k]);
        let g = z[2 * hd + k].tanh();
        let o = sigmoid(z[3 * hd + k]);
        let c = f * c_prev[k] + i * g;
        let tc = c.tanh();
        out.f[k] = f;
        out.i[k] = i;
        out.g[k] = g;
        out.o[k] = o;
        out.c[k] = c;
        out.tanh_c[k] = tc;
        out.h[k] = o * tc;
    }
}

/// Activations of one layer over a whole sequence. Per-step vectors are
/// stored flat, `steps x hidden` (or `steps x input` for `inputs`).
#[derive(Debug, Clone)]
pub struct LayerCache<S> {
    pub steps: usize,
    pub inputs: Vec<S>,
    /// `steps + 1` rows; row 0 is the initial state.
    pub h: Vec<S>,
    pub c: Vec<S>,
    pub f: Vec<S>,
    pub i: Vec<S>,
    pub g: Vec<S>,
    pub o: Vec<S>,
    pub tanh_c: Vec<S>,
}

impl<S: Scalar> LayerCache<S> {
    /// Hidden state after step `t` (0-based).
    pub fn h_at(&self, t: usize, hd: usize) -> &[S] {
        &self.h[(t + 1) * hd..(t + 2) * hd]
    }

    /// All post-step hidden states, `steps x hidden`.
    pub fn outputs(&self, hd: usize) -> &[S] {
        &self.h[hd..]
    }
}

/// Runs the layer over `steps` inputs from a zero initial state.
pub fn layer_forward<S: Scalar>(p: &LstmParams<S>, inputs: &[S], steps: usize) -> LayerCache<S> {
    let (hd, n) = (p.hidden, p.input);
    debug_assert_eq!(inputs.len(), steps * n);
    let zeros = || vec![S::zero(); steps * hd];
    let mut cache = LayerCache {
        steps,
        inputs: inputs.to_vec(),
        h: vec![S::zero(); (steps + 1) * hd],
        c: vec![S::zero(); (steps + 1) * hd],
        f: zeros(),
        i: zeros(),
        g: zeros(),
        o: zeros(),
        tanh_c: zeros(),
    };
    let mut z = vec![S::zero(); 4 * hd];
    let mut out = StepOut::new(hd);
    for t in 0..steps {
        let x = &inputs[t * n..(t + 1) * n];
        step(
            p,
            x,
            &cache.h[t * hd..(t + 1) * hd],
            &cache.c[t * hd..(t + 1) * hd],
            &mut z,
            &mut out,
        );
        let row = t * hd..(t + 1) * hd;
        let next = (t + 1) * hd..(t + 2) * hd;
        cache.f[row.clone()].copy_from_slice(&out.f);
        cache.i[row.clone()].copy_from_slice(&out.i);
        cache.g[row.clone()].copy_from_slice(&out.g);
        cache.o[row.clone()].copy_from_slice(&out.o);
        cache.tanh_c[row].copy_from_slice(&out.tanh_c);
        cache.c[next.clone()].copy_from_slice(&out.c);
        cache.h[next].copy_from_slice(&out.h);
    }
    cache
}

/// Backpropagates `dh_out` (gradient w.r.t. each step's hidden output,
/// `steps x hidden`) through the unrolled layer. Parameter gradients are
/// added into `grad`; the gradient w.r.t. each step's input is written to
/// `dx` (`steps x input`).
pub fn layer_backward<S: Scalar>(
    p: &LstmParams<S>,
    cache: &LayerCache<S>,
    dh_out: &[S],
    grad: &mut LstmParams<S>,
    dx: &mut [S],
) {
    let (hd, n, steps) = (p.hidden, p.input, cache.steps);
    debug_assert_eq!(dh_out.len(), steps * hd);
    debug_assert_eq!(dx.len(), steps * n);
    let one = S::one();
    let mut dh_next = vec![S::zero(); hd];
    let mut dc_next = vec![S::zero(); hd];
    let mut dz = vec![S::zero(); 4 * hd];
    for t in (0..steps).rev() {
        let r = t * hd;
        for k in 0..hd {
            let dh = dh_out[r + k] + dh_next[k];
            let (f, i, g, o, tc) = (
                cache.f[r + k],
                cache.i[r + k],
                cache.g[r + k],
                cache.o[r + k],
                cache.tanh_c[r + k],
            );
            let c_prev = cache.c[r + k];
            let d_o = dh * tc;
            let dc = dh * o * (one - tc * tc) + dc_next[k];
            let d_f = dc * c_prev;
            let d_i = dc * g;
            let d_g = dc * i;
            dc_next[k] = dc * f;
            dz[k] = d_f * f * (one - f);
            dz[hd + k] = d_i * i * (one - i);
            dz[2 * hd + k] = d_g * (one - g * g);
            dz[3 * hd + k] = d_o * o * (one - o);
        }
        let h_prev = &cache.h[r..r + hd];
        let x = &cache.inputs[t * n..(t + 1) * n];
        grad.w.add_outer(&dz, h_prev);
        grad.u.add_outer(&dz, x);
        for (gb, d) in grad.b.iter_mut().zip(&dz) {
            *gb = *gb + *d;
        }
        dh_next.iter_mut().for_each(|v| *v = S::zero());
        p.w.matvec_t_add(&dz, &mut dh_next);
        let dxt = &mut dx[t * n..(t + 1) * n];
        dxt.iter_mut().for_each(|v| *v = S::zero());
        p.u.matvec_t_add(&dz, dxt);
    }
}
