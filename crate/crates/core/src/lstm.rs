//! Bidirectional LSTM over per-utterance vectors, with manual backprop.
//!
//! One cell per direction; the two hidden sequences are concatenated, so
//! the output width is twice the cell hidden width. Gate blocks along the
//! first axis of the packed weights are ordered [input, forget, candidate,
//! output].

use ndarray::{s, Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Single-direction LSTM cell parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// Packed input weights, (4h x d).
    pub w_x: Array2<f64>,
    /// Packed recurrent weights, (4h x h).
    pub w_h: Array2<f64>,
    /// Packed bias, (4h).
    pub b: Array1<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Fan-in-scaled uniform init for the weight matrices; zero biases.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input, hidden);
        fill_fan_in(&mut cell.w_x, rng);
        fill_fan_in(&mut cell.w_h, rng);
        cell
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_x.ncols()
    }
}

pub(crate) fn fill_fan_in<R: Rng>(m: &mut Array2<f64>, rng: &mut R) {
    let bound = 1.0 / (m.ncols() as f64).sqrt();
    for v in m.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// Forward/backward cell pair whose hidden states concatenate to the
/// context vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl BiLstm {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstm {
            fwd: LstmCell::zeros(input, hidden),
            bwd: LstmCell::zeros(input, hidden),
        }
    }

    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstm {
            fwd: LstmCell::init(input, hidden, rng),
            bwd: LstmCell::init(input, hidden, rng),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.fwd.hidden_size()
    }

    /// Width of the concatenated output, `2 * hidden`.
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_size()
    }

    /// Runs both directions over the rows of `xs` (n x d) and concatenates
    /// the hidden sequences into an (n x 2h) matrix.
    pub fn forward(&self, xs: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(xs).0
    }

    pub(crate) fn forward_cached(&self, xs: &Array2<f64>) -> (Array2<f64>, BiLstmCache) {
        let (hf, cache_f) = lstm_forward(&self.fwd, xs, false);
        let (hb, cache_b) = lstm_forward(&self.bwd, xs, true);
        let n = xs.nrows();
        let h = self.hidden_size();
        let mut out = Array2::zeros((n, 2 * h));
        out.slice_mut(s![.., ..h]).assign(&hf);
        out.slice_mut(s![.., h..]).assign(&hb);
        (
            out,
            BiLstmCache {
                fwd: cache_f,
                bwd: cache_b,
            },
        )
    }

    /// Backprop through both directions. `d_out` is (n x 2h), aligned to
    /// `forward_cached`'s output. No input gradients are produced: the
    /// upstream encoder is a frozen artifact.
    pub(crate) fn backward(
        &self,
        xs: &Array2<f64>,
        cache: &BiLstmCache,
        d_out: &Array2<f64>,
    ) -> BiLstmGrads {
        let h = self.hidden_size();
        let d_fwd = d_out.slice(s![.., ..h]).to_owned();
        let d_bwd = d_out.slice(s![.., h..]).to_owned();
        BiLstmGrads {
            fwd: lstm_backward(&self.fwd, xs, &cache.fwd, &d_fwd),
            bwd: lstm_backward(&self.bwd, xs, &cache.bwd, &d_bwd),
        }
    }
}

/// Per-position intermediate values kept for backprop. All matrices are
/// (n x h), indexed by sequence position regardless of processing order.
#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    gate_i: Array2<f64>,
    gate_f: Array2<f64>,
    gate_g: Array2<f64>,
    gate_o: Array2<f64>,
    tanh_c: Array2<f64>,
    reverse: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LstmGrads {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmGrads {
    pub fn zeros_like(cell: &LstmCell) -> Self {
        LstmGrads {
            w_x: Array2::zeros(cell.w_x.dim()),
            w_h: Array2::zeros(cell.w_h.dim()),
            b: Array1::zeros(cell.b.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BiLstmGrads {
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
}

impl BiLstmGrads {
    pub fn zeros_like(bi: &BiLstm) -> Self {
        BiLstmGrads {
            fwd: LstmGrads::zeros_like(&bi.fwd),
            bwd: LstmGrads::zeros_like(&bi.bwd),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm_forward(cell: &LstmCell, xs: &Array2<f64>, reverse: bool) -> (Array2<f64>, LstmCache) {
    let n = xs.nrows();
    let h = cell.hidden_size();
    let mut cache = LstmCache {
        h_prev: Array2::zeros((n, h)),
        c_prev: Array2::zeros((n, h)),
        gate_i: Array2::zeros((n, h)),
        gate_f: Array2::zeros((n, h)),
        gate_g: Array2::zeros((n, h)),
        gate_o: Array2::zeros((n, h)),
        tanh_c: Array2::zeros((n, h)),
        reverse,
    };
    let mut hs = Array2::zeros((n, h));
    let mut h_state = Array1::<f64>::zeros(h);
    let mut c_state = Array1::<f64>::zeros(h);
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for t in order {
        cache.h_prev.row_mut(t).assign(&h_state);
        cache.c_prev.row_mut(t).assign(&c_state);
        let mut pre = cell.w_x.dot(&xs.row(t)) + cell.w_h.dot(&h_state) + &cell.b;
        pre.slice_mut(s![..2 * h]).mapv_inplace(sigmoid);
        pre.slice_mut(s![2 * h..3 * h]).mapv_inplace(f64::tanh);
        pre.slice_mut(s![3 * h..]).mapv_inplace(sigmoid);
        let gi = pre.slice(s![..h]);
        let gf = pre.slice(s![h..2 * h]);
        let gg = pre.slice(s![2 * h..3 * h]);
        let go = pre.slice(s![3 * h..]);
        c_state = &gf * &c_state + &(&gi * &gg);
        let tanh_c = c_state.mapv(f64::tanh);
        h_state = &go * &tanh_c;
        cache.gate_i.row_mut(t).assign(&gi);
        cache.gate_f.row_mut(t).assign(&gf);
        cache.gate_g.row_mut(t).assign(&gg);
        cache.gate_o.row_mut(t).assign(&go);
        cache.tanh_c.row_mut(t).assign(&tanh_c);
        hs.row_mut(t).assign(&h_state);
    }
    (hs, cache)
}

fn outer_add(acc: &mut Array2<f64>, col: &Array1<f64>, row: ndarray::ArrayView1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut acc_row = acc.row_mut(i);
        for (j, &r) in row.iter().enumerate() {
            acc_row[j] += c * r;
        }
    }
}

/// Backprop through time for one direction. `d_hs` holds dL/dh_t per
/// position; returns parameter gradients only.
fn lstm_backward(
    cell: &LstmCell,
    xs: &Array2<f64>,
    cache: &LstmCache,
    d_hs: &Array2<f64>,
) -> LstmGrads {
    let n = xs.nrows();
    let h = cell.hidden_size();
    let mut grads = LstmGrads::zeros_like(cell);
    let mut dh_carry = Array1::<f64>::zeros(h);
    let mut dc_carry = Array1::<f64>::zeros(h);
    // Reverse of the processing order used in the forward pass.
    let order: Vec<usize> = if cache.reverse {
        (0..n).collect()
    } else {
        (0..n).rev().collect()
    };
    for t in order {
        let dh = &d_hs.row(t) + &dh_carry;
        let gi = cache.gate_i.row(t);
        let gf = cache.gate_f.row(t);
        let gg = cache.gate_g.row(t);
        let go = cache.gate_o.row(t);
        let tc = cache.tanh_c.row(t);

        let d_go = &dh * &tc;
        let dc = &dc_carry + &(&dh * &go * &tc.mapv(|v| 1.0 - v * v));
        let d_gi = &dc * &gg;
        let d_gg = &dc * &gi;
        let d_gf = &dc * &cache.c_prev.row(t);
        dc_carry = &dc * &gf;

        let mut d_pre = Array1::<f64>::zeros(4 * h);
        d_pre
            .slice_mut(s![..h])
            .assign(&(&d_gi * &gi * &gi.mapv(|v| 1.0 - v)));
        d_pre
            .slice_mut(s![h..2 * h])
            .assign(&(&d_gf * &gf * &gf.mapv(|v| 1.0 - v)));
        d_pre
            .slice_mut(s![2 * h..3 * h])
            .assign(&(&d_gg * &gg.mapv(|v| 1.0 - v * v)));
        d_pre
            .slice_mut(s![3 * h..])
            .assign(&(&d_go * &go * &go.mapv(|v| 1.0 - v)));

        outer_add(&mut grads.w_x, &d_pre, xs.row(t));
        outer_add(&mut grads.w_h, &d_pre, cache.h_prev.row(t));
        grads.b += &d_pre;
        dh_carry = cell.w_h.t().dot(&d_pre);
    }
    grads
}
