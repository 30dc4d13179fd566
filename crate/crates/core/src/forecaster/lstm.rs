use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};

/// Samples per parallel work unit; the reduction order is fixed by this, not by the thread count.
const GRAD_CHUNK: usize = 16;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weights of one LSTM layer. Gate rows are stacked as input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub input: usize,
    pub hidden: usize,
    /// `4·hidden × input`, row-major.
    pub w_x: Vec<f64>,
    /// `4·hidden × hidden`, row-major.
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_x: vec![0.0; 4 * hidden * input],
            w_h: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub layers: Vec<LayerParams>,
    pub head_w: Vec<f64>,
    /// Single-element block so every parameter group is a slice.
    pub head_b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize, n_layers: usize) -> Self {
        let layers = (0..n_layers)
            .map(|l| LayerParams::zeros(if l == 0 { input } else { hidden }, hidden))
            .collect();
        Self {
            layers,
            head_w: vec![0.0; hidden],
            head_b: vec![0.0],
        }
    }

    /// Uniform(−1/√n, 1/√n) weights, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, n_layers: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden, n_layers);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = |v: &mut [f64]| v.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        for layer in &mut p.layers {
            draw(&mut layer.w_x);
            draw(&mut layer.w_h);
            layer.bias[hidden..2 * hidden].fill(1.0);
        }
        draw(&mut p.head_w);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size(), self.layers.len())
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input
    }

    pub fn hidden_size(&self) -> usize {
        self.head_w.len()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Parameter groups in a fixed order: per layer `w_x, w_h, bias`, then head weights and bias.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(&l.w_x);
            out.push(&l.w_h);
            out.push(&l.bias);
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.w_x);
            out.push(&mut l.w_h);
            out.push(&mut l.bias);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn add_assign(&mut self, other: &LstmParams) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Hidden and cell vectors of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Gate activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation i, f, o, g stacked.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn cell_step(layer: &LayerParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = layer.hidden;
    let m = layer.input;
    let mut gates = layer.bias.clone();
    for (r, g) in gates.iter_mut().enumerate() {
        let wx = &layer.w_x[r * m..(r + 1) * m];
        let wh = &layer.w_h[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for (w, v) in wx.iter().zip(x) {
            acc += w * v;
        }
        for (w, v) in wh.iter().zip(h) {
            acc += w * v;
        }
        *g += acc;
    }
    for (r, g) in gates.iter_mut().enumerate() {
        *g = if r < 3 * n { sigmoid(*g) } else { g.tanh() };
    }
    let mut c_new = vec![0.0; n];
    let mut h_new = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    for j in 0..n {
        let (i, f, o, g) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
        c_new[j] = f * c[j] + i * g;
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = o * tanh_c[j];
    }
    (h_new, c_new, gates, tanh_c)
}

/// One LSTM step: `(h', c')` from input `x` and the previous state.
pub fn lstm_cell_forward(x: &[f64], h: &[f64], c: &[f64], layer: &LayerParams) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != layer.input {
        return Err(Error::Shape {
            expected: layer.input,
            got: x.len(),
        });
    }
    if h.len() != layer.hidden || c.len() != layer.hidden {
        return Err(Error::Shape {
            expected: layer.hidden,
            got: h.len().min(c.len()),
        });
    }
    if !x.iter().chain(h).chain(c).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("LSTM cell input".into()));
    }
    let (h_new, c_new, _, _) = cell_step(layer, x, h, c);
    Ok((h_new, c_new))
}

/// Per-sample inverted-dropout masks, one per layer output (the last feeds the head).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub masks: Vec<Vec<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_layers: usize, hidden: usize, rate: f64) -> Self {
        let keep = 1.0 - rate;
        let masks = (0..n_layers)
            .map(|_| {
                (0..hidden)
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { masks }
    }
}

struct Trace {
    layers: Vec<Vec<Step>>,
    head_in: Vec<f64>,
    z: f64,
}

fn run(params: &LstmParams, window: &[f64], masks: Option<&DropoutMasks>, keep_trace: bool) -> (f64, Option<Trace>) {
    let s = params.input_size();
    let n = params.hidden_size();
    let w = window.len() / s;
    let mut inputs: Vec<Vec<f64>> = window.chunks_exact(s).map(<[f64]>::to_vec).collect();
    let mut traces = Vec::with_capacity(params.n_layers());
    let mut last_h = vec![0.0; n];
    for (l, layer) in params.layers.iter().enumerate() {
        let mut h = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut steps = Vec::with_capacity(if keep_trace { w } else { 0 });
        let mut outputs = Vec::with_capacity(w);
        for x in inputs {
            let (h_new, c_new, gates, tanh_c) = cell_step(layer, &x, &h, &c);
            if keep_trace {
                steps.push(Step {
                    x,
                    h_prev: h,
                    c_prev: c,
                    gates,
                    tanh_c,
                });
            }
            let mut out = h_new.clone();
            if let Some(m) = masks {
                out.iter_mut().zip(&m.masks[l]).for_each(|(v, k)| *v *= k);
            }
            outputs.push(out);
            h = h_new;
            c = c_new;
        }
        last_h = outputs.last().cloned().unwrap_or_else(|| vec![0.0; n]);
        inputs = outputs;
        traces.push(steps);
    }
    let z = params.head_b[0] + params.head_w.iter().zip(&last_h).map(|(a, b)| a * b).sum::<f64>();
    let trace = keep_trace.then_some(Trace {
        layers: traces,
        head_in: last_h,
        z,
    });
    (z, trace)
}

fn check_window(params: &LstmParams, window: &[f64]) -> Result<()> {
    let s = params.input_size();
    if window.is_empty() || !window.len().is_multiple_of(s) {
        return Err(Error::Shape {
            expected: s,
            got: window.len(),
        });
    }
    Ok(())
}

/// Evaluation-mode prediction for a `W × s` window (dropout off).
pub fn forward(params: &LstmParams, activation: Activation, window: &[f64]) -> Result<f64> {
    check_window(params, window)?;
    Ok(activation.apply(run(params, window, None, false).0))
}

/// Training-mode prediction with explicit dropout masks.
pub fn forward_train(params: &LstmParams, activation: Activation, window: &[f64], masks: Option<&DropoutMasks>) -> Result<f64> {
    check_window(params, window)?;
    Ok(activation.apply(run(params, window, masks, false).0))
}

/// Accumulates the gradient of `dloss/dprediction = dy` for one traced sample.
fn backprop(params: &LstmParams, activation: Activation, trace: &Trace, masks: Option<&DropoutMasks>, dy: f64, grads: &mut LstmParams) {
    let n = params.hidden_size();
    let n_layers = params.n_layers();
    let dz = dy * activation.derivative(trace.z);
    for (g, x) in grads.head_w.iter_mut().zip(&trace.head_in) {
        *g += dz * x;
    }
    grads.head_b[0] += dz;

    let w = trace.layers[0].len();
    let mut dh_in = vec![vec![0.0; n]; w];
    for j in 0..n {
        let m = masks.map_or(1.0, |m| m.masks[n_layers - 1][j]);
        dh_in[w - 1][j] = dz * params.head_w[j] * m;
    }

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];
        let m = layer.input;
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut dx_seq = if l > 0 { vec![vec![0.0; m]; w] } else { Vec::new() };
        let mut da = vec![0.0; 4 * n];
        for t in (0..w).rev() {
            let st = &trace.layers[l][t];
            for j in 0..n {
                let (i, f, o, gg) = (st.gates[j], st.gates[n + j], st.gates[2 * n + j], st.gates[3 * n + j]);
                let dh = dh_in[t][j] + dh_next[j];
                let tc = st.tanh_c[j];
                let d_o = dh * tc;
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                let di = dc * gg;
                let dg = dc * i;
                let df = dc * st.c_prev[j];
                dc_next[j] = dc * f;
                da[j] = di * i * (1.0 - i);
                da[n + j] = df * f * (1.0 - f);
                da[2 * n + j] = d_o * o * (1.0 - o);
                da[3 * n + j] = dg * (1.0 - gg * gg);
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &a) in da.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                g.bias[r] += a;
                let gx = &mut g.w_x[r * m..(r + 1) * m];
                for (gv, xv) in gx.iter_mut().zip(&st.x) {
                    *gv += a * xv;
                }
                let gh = &mut g.w_h[r * n..(r + 1) * n];
                for (gv, hv) in gh.iter_mut().zip(&st.h_prev) {
                    *gv += a * hv;
                }
                let wh = &layer.w_h[r * n..(r + 1) * n];
                for (d, wv) in dh_next.iter_mut().zip(wh) {
                    *d += a * wv;
                }
                if l > 0 {
                    let wx = &layer.w_x[r * m..(r + 1) * m];
                    for (d, wv) in dx_seq[t].iter_mut().zip(wx) {
                        *d += a * wv;
                    }
                }
            }
        }
        if l > 0 {
            // the layer input was the previous layer's masked output
            for row in &mut dx_seq {
                for (j, v) in row.iter_mut().enumerate() {
                    *v *= masks.map_or(1.0, |mk| mk.masks[l - 1][j]);
                }
            }
            dh_in = dx_seq;
        }
    }
}

/// Mean squared error over `(window, label)` pairs.
pub fn batch_loss(params: &LstmParams, activation: Activation, batch: &[(&[f64], f64)], masks: Option<&[DropoutMasks]>) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let mut sum = 0.0;
    for (k, (window, label)) in batch.iter().enumerate() {
        let y = forward_train(params, activation, window, masks.map(|m| &m[k]))?;
        sum += (y - label).powi(2);
    }
    Ok(sum / batch.len() as f64)
}

/// Loss and exact gradient of the batch-mean squared error.
pub fn batch_gradient(
    params: &LstmParams,
    activation: Activation,
    batch: &[(&[f64], f64)],
    masks: Option<&[DropoutMasks]>,
) -> Result<(f64, LstmParams)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    for (window, _) in batch {
        check_window(params, window)?;
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(Error::Shape {
                expected: batch.len(),
                got: m.len(),
            });
        }
    }
    let b = batch.len() as f64;
    let partials: Vec<(f64, LstmParams)> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut grads = params.zeros_like();
            let mut loss = 0.0;
            for (k, (window, label)) in chunk.iter().enumerate() {
                let mask = masks.map(|m| &m[ci * GRAD_CHUNK + k]);
                let (z, trace) = run(params, window, mask, true);
                let y = activation.apply(z);
                let r = y - label;
                loss += r * r;
                backprop(params, activation, &trace.expect("traced"), mask, 2.0 * r / b, &mut grads);
            }
            (loss, grads)
        })
        .collect();
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for (l, g) in &partials {
        total += l;
        grads.add_assign(g);
    }
    let loss = total / b;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite(format!("batch loss {loss} over {} samples", batch.len())));
    }
    Ok((loss, grads))
}
