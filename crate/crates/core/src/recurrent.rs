//! Vanilla, GRU and LSTM cells with hand-written backpropagation through time.
//!
//! Gate blocks are stacked row-wise in one input matrix `w_x`, one recurrent
//! matrix `w_h` and one bias:
//!
//! * vanilla: `h = tanh(W_x x + W_h h' + b)`
//! * gru, blocks `[z; r; n]`: `n = tanh(W_xn x + W_hn (r ⊙ h') + b_n)`,
//!   `h = (1 - z) ⊙ h' + z ⊙ n`
//! * lstm, blocks `[i; f; g; o]`: `c = f ⊙ c' + i ⊙ g`, `h = o ⊙ tanh(c)`

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::{gemv_acc, gemv_t_acc, outer_acc, sigmoid};
use crate::numerics::{Grads, Init, ParamId, ParamStore, Values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    #[default]
    Vanilla,
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Vanilla, CellKind::Lstm, CellKind::Gru];

    pub fn gate_blocks(self) -> usize {
        match self {
            CellKind::Vanilla => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" | "rnn" => Ok(CellKind::Vanilla),
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            _ => Err(Error::config("model.cell", format!("unknown cell `{s}`"))),
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Vanilla => "vanilla",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    /// Memory cell, present only for LSTM.
    pub c: Option<Vec<f64>>,
}

impl HiddenState {
    pub fn zeros(kind: CellKind, hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: (kind == CellKind::Lstm).then(|| vec![0.0; hidden]),
        }
    }
}

/// Activations of one step needed by the backward pass.
#[derive(Debug, Clone)]
pub struct CellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Option<Vec<f64>>,
    /// Post-activation gate values, block-stacked like the weights.
    gates: Vec<f64>,
    /// GRU: `r ⊙ h_prev`. LSTM: `tanh(c)`.
    aux: Vec<f64>,
    h: Vec<f64>,
}

/// Gradients produced by one cell backward step.
#[derive(Debug, Clone)]
pub struct CellGrad {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

impl Cell {
    /// Register weights under `cell.*`. Biases start at zero except the LSTM
    /// forget gate, which starts at one.
    pub fn register(
        params: &mut ParamStore,
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        let rows = kind.gate_blocks() * hidden_dim;
        let init = Init::Uniform {
            seed,
            scale: init_scale,
        };
        let w_x = params.add("cell.w_x", &[rows, input_dim], init)?;
        let w_h = params.add("cell.w_h", &[rows, hidden_dim], init)?;
        let b = params.add("cell.b", &[rows], Init::Constant(0.0))?;
        if kind == CellKind::Lstm {
            params.get_mut(b).value[hidden_dim..2 * hidden_dim]
                .iter_mut()
                .for_each(|v| *v = 1.0);
        }
        Ok(Self {
            kind,
            input_dim,
            hidden_dim,
            w_x,
            w_h,
            b,
        })
    }

    pub fn check_shapes(&self, params: &ParamStore) -> Result<()> {
        let rows = self.kind.gate_blocks() * self.hidden_dim;
        for (id, expected) in [
            (self.w_x, vec![rows, self.input_dim]),
            (self.w_h, vec![rows, self.hidden_dim]),
            (self.b, vec![rows]),
        ] {
            let t = params.get(id);
            if t.shape != expected {
                return Err(Error::config(
                    &t.name,
                    format!("{} cell expects shape {expected:?}, found {:?}", self.kind, t.shape),
                ));
            }
        }
        Ok(())
    }

    pub fn forward(&self, values: &Values<'_>, x: &[f64], prev: &HiddenState) -> (HiddenState, CellCache) {
        debug_assert_eq!(x.len(), self.input_dim);
        let hd = self.hidden_dim;
        let w_x = values.get(self.w_x);
        let w_h = values.get(self.w_h);
        let b = values.get(self.b);
        let mut pre = b.to_vec();
        gemv_acc(w_x, x, &mut pre);
        match self.kind {
            CellKind::Vanilla => {
                gemv_acc(w_h, &prev.h, &mut pre);
                let h: Vec<f64> = pre.iter().map(|a| a.tanh()).collect();
                let cache = CellCache {
                    x: x.to_vec(),
                    h_prev: prev.h.clone(),
                    c_prev: None,
                    gates: h.clone(),
                    aux: Vec::new(),
                    h: h.clone(),
                };
                (HiddenState { h, c: None }, cache)
            }
            CellKind::Gru => {
                gemv_acc(&w_h[..2 * hd * hd], &prev.h, &mut pre[..2 * hd]);
                let mut gates = vec![0.0; 3 * hd];
                for k in 0..2 * hd {
                    gates[k] = sigmoid(pre[k]);
                }
                let rh: Vec<f64> = (0..hd).map(|k| gates[hd + k] * prev.h[k]).collect();
                gemv_acc(&w_h[2 * hd * hd..], &rh, &mut pre[2 * hd..]);
                for k in 0..hd {
                    gates[2 * hd + k] = pre[2 * hd + k].tanh();
                }
                let h: Vec<f64> = (0..hd)
                    .map(|k| {
                        let z = gates[k];
                        (1.0 - z) * prev.h[k] + z * gates[2 * hd + k]
                    })
                    .collect();
                let cache = CellCache {
                    x: x.to_vec(),
                    h_prev: prev.h.clone(),
                    c_prev: None,
                    gates,
                    aux: rh,
                    h: h.clone(),
                };
                (HiddenState { h, c: None }, cache)
            }
            CellKind::Lstm => {
                gemv_acc(w_h, &prev.h, &mut pre);
                let c_prev = prev.c.clone().unwrap_or_else(|| vec![0.0; hd]);
                let mut gates = vec![0.0; 4 * hd];
                for k in 0..hd {
                    gates[k] = sigmoid(pre[k]);
                    gates[hd + k] = sigmoid(pre[hd + k]);
                    gates[2 * hd + k] = pre[2 * hd + k].tanh();
                    gates[3 * hd + k] = sigmoid(pre[3 * hd + k]);
                }
                let c: Vec<f64> = (0..hd)
                    .map(|k| gates[hd + k] * c_prev[k] + gates[k] * gates[2 * hd + k])
                    .collect();
                let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let h: Vec<f64> = (0..hd).map(|k| gates[3 * hd + k] * tc[k]).collect();
                let cache = CellCache {
                    x: x.to_vec(),
                    h_prev: prev.h.clone(),
                    c_prev: Some(c_prev),
                    gates,
                    aux: tc,
                    h: h.clone(),
                };
                (HiddenState { h, c: Some(c) }, cache)
            }
        }
    }

    /// Backward through one step given the gradient w.r.t. its output state.
    pub fn backward(
        &self,
        cache: &CellCache,
        dh: &[f64],
        dc: Option<&[f64]>,
        values: &Values<'_>,
        grads: &mut Grads<'_>,
    ) -> CellGrad {
        let hd = self.hidden_dim;
        let w_x = values.get(self.w_x);
        let w_h = values.get(self.w_h);
        let rows = self.kind.gate_blocks() * hd;
        let mut da = vec![0.0; rows];
        let mut dh_prev = vec![0.0; hd];
        let mut dc_prev = None;
        match self.kind {
            CellKind::Vanilla => {
                for k in 0..hd {
                    da[k] = dh[k] * (1.0 - cache.h[k] * cache.h[k]);
                }
                gemv_t_acc(w_h, &da, &mut dh_prev);
                if let Some(g) = grads.get(self.w_h) {
                    outer_acc(&da, &cache.h_prev, g);
                }
            }
            CellKind::Gru => {
                let g = &cache.gates;
                let mut drh = vec![0.0; hd];
                for k in 0..hd {
                    let (z, n) = (g[k], g[2 * hd + k]);
                    dh_prev[k] = dh[k] * (1.0 - z);
                    da[k] = dh[k] * (n - cache.h_prev[k]) * z * (1.0 - z);
                    da[2 * hd + k] = dh[k] * z * (1.0 - n * n);
                }
                gemv_t_acc(&w_h[2 * hd * hd..], &da[2 * hd..], &mut drh);
                for k in 0..hd {
                    let r = g[hd + k];
                    da[hd + k] = drh[k] * cache.h_prev[k] * r * (1.0 - r);
                    dh_prev[k] += drh[k] * r;
                }
                gemv_t_acc(&w_h[..2 * hd * hd], &da[..2 * hd], &mut dh_prev);
                if let Some(gw) = grads.get(self.w_h) {
                    outer_acc(&da[..2 * hd], &cache.h_prev, &mut gw[..2 * hd * hd]);
                    outer_acc(&da[2 * hd..], &cache.aux, &mut gw[2 * hd * hd..]);
                }
            }
            CellKind::Lstm => {
                let g = &cache.gates;
                let c_prev = cache.c_prev.as_ref().expect("lstm cache keeps c");
                let mut dcp = vec![0.0; hd];
                for k in 0..hd {
                    let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
                    let tc = cache.aux[k];
                    let dct = dc.map_or(0.0, |d| d[k]) + dh[k] * o * (1.0 - tc * tc);
                    da[k] = dct * gg * i * (1.0 - i);
                    da[hd + k] = dct * c_prev[k] * f * (1.0 - f);
                    da[2 * hd + k] = dct * i * (1.0 - gg * gg);
                    da[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
                    dcp[k] = dct * f;
                }
                gemv_t_acc(w_h, &da, &mut dh_prev);
                if let Some(gw) = grads.get(self.w_h) {
                    outer_acc(&da, &cache.h_prev, gw);
                }
                dc_prev = Some(dcp);
            }
        }
        let mut dx = vec![0.0; self.input_dim];
        gemv_t_acc(w_x, &da, &mut dx);
        if let Some(g) = grads.get(self.w_x) {
            outer_acc(&da, &cache.x, g);
        }
        if let Some(g) = grads.get(self.b) {
            for (gb, d) in g.iter_mut().zip(&da) {
                *gb += d;
            }
        }
        CellGrad { dx, dh_prev, dc_prev }
    }
}

/// Backpropagation through a window of cached steps.
///
/// `upstream[t]` is the gradient reaching `h_t` from outside the recurrence
/// (the flashback taps). Returns the gradient w.r.t. each step's input and
/// w.r.t. the state that entered the window.
pub fn bptt_backward(
    cell: &Cell,
    caches: &[CellCache],
    upstream: &[Vec<f64>],
    values: &Values<'_>,
    grads: &mut Grads<'_>,
) -> Result<(Vec<Vec<f64>>, HiddenState)> {
    if caches.len() != upstream.len() {
        return Err(Error::Dimension(format!(
            "bptt: {} cached steps but {} upstream gradients",
            caches.len(),
            upstream.len()
        )));
    }
    let hd = cell.hidden_dim;
    let mut dh_next = vec![0.0; hd];
    let mut dc_next: Option<Vec<f64>> = (cell.kind == CellKind::Lstm).then(|| vec![0.0; hd]);
    let mut dxs = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let dh: Vec<f64> = upstream[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let g = cell.backward(&caches[t], &dh, dc_next.as_deref(), values, grads);
        dxs[t] = g.dx;
        dh_next = g.dh_prev;
        dc_next = g.dc_prev;
    }
    Ok((dxs, HiddenState { h: dh_next, c: dc_next }))
}
