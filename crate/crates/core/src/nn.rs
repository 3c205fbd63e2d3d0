//! Small dense layers with hand-written adjoints, shared by the encoder, the
//! palette network and the complexity estimator.
//!
//! Feature maps are channel-major (`C×H×W`); token matrices are row-major
//! (`rows×cols`). Every parallel loop writes disjoint output slices, so
//! results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Canvas;
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn plane(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.h * self.w..(ch + 1) * self.h * self.w]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Transposes `C×H×W` into `(H·W)×C` tokens.
    pub fn to_tokens(&self) -> Vec<f64> {
        let n = self.h * self.w;
        let mut out = vec![0.0; n * self.c];
        for ch in 0..self.c {
            for (i, v) in self.plane(ch).iter().enumerate() {
                out[i * self.c + ch] = *v;
            }
        }
        out
    }

    pub fn from_tokens(tokens: &[f64], c: usize, h: usize, w: usize) -> Self {
        let mut t = Tensor3::zeros(c, h, w);
        for i in 0..h * w {
            for ch in 0..c {
                t.data[ch * h * w + i] = tokens[i * c + ch];
            }
        }
        t
    }
}

/// He-style normal initialisation, rounded to f32 so weights survive the
/// 32-bit weight containers unchanged.
pub fn init_normal(rng: &mut XorShift64Star, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| f64::from((rng.normal() * std) as f32)).collect()
}

// ---------------------------------------------------------------------------
// resize

fn bilinear_taps(dst: usize, src: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear (half-pixel centres) resize of a canvas into a `3×size×size` tensor.
pub fn resize_canvas(canvas: &Canvas, size: usize) -> Tensor3 {
    let (w, h) = (canvas.width(), canvas.height());
    let src = canvas.data();
    let mut out = Tensor3::zeros(3, size, size);
    if w == size && h == size {
        for i in 0..w * h {
            for ch in 0..3 {
                out.data[ch * w * h + i] = src[i * 3 + ch];
            }
        }
        return out;
    }
    let tx = bilinear_taps(size, w);
    let ty = bilinear_taps(size, h);
    for (y, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (x, &(x0, x1, fx)) in tx.iter().enumerate() {
            for ch in 0..3 {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * 3 + ch];
                let top = (1.0 - fx) * p(y0, x0) + fx * p(y0, x1);
                let bot = (1.0 - fx) * p(y1, x0) + fx * p(y1, x1);
                out.data[(ch * size + y) * size + x] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    out
}

/// Adjoint of [`resize_canvas`]: maps a `3×size×size` cotangent back to a
/// canvas-layout (`H×W×3`) gradient.
pub fn resize_canvas_backward(grad: &Tensor3, width: usize, height: usize) -> Vec<f64> {
    let size = grad.h;
    let mut out = vec![0.0; width * height * 3];
    if width == size && height == size {
        for i in 0..width * height {
            for ch in 0..3 {
                out[i * 3 + ch] = grad.data[ch * size * size + i];
            }
        }
        return out;
    }
    let tx = bilinear_taps(size, width);
    let ty = bilinear_taps(size, height);
    for (y, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (x, &(x0, x1, fx)) in tx.iter().enumerate() {
            for ch in 0..3 {
                let g = grad.data[(ch * size + y) * size + x];
                let mut add = |yy: usize, xx: usize, wgt: f64| out[(yy * width + xx) * 3 + ch] += wgt * g;
                add(y0, x0, (1.0 - fy) * (1.0 - fx));
                add(y0, x1, (1.0 - fy) * fx);
                add(y1, x0, fy * (1.0 - fx));
                add(y1, x1, fy * fx);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// convolution

/// 3×3 convolution with zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    /// `out × in × 3 × 3`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

fn pad1(x: &Tensor3) -> Tensor3 {
    let (hp, wp) = (x.h + 2, x.w + 2);
    let mut p = Tensor3::zeros(x.c, hp, wp);
    for ch in 0..x.c {
        for y in 0..x.h {
            let src = &x.data[(ch * x.h + y) * x.w..(ch * x.h + y + 1) * x.w];
            let off = (ch * hp + y + 1) * wp + 1;
            p.data[off..off + x.w].copy_from_slice(src);
        }
    }
    p
}

pub fn conv_out_size(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut XorShift64Star) -> Self {
        let std = (2.0 / (in_ch * 9) as f64).sqrt();
        Self {
            in_ch,
            out_ch,
            stride,
            weight: init_normal(rng, out_ch * in_ch * 9, std),
            bias: vec![0.0; out_ch],
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.weight.len() != self.out_ch * self.in_ch * 9 || self.bias.len() != self.out_ch {
            return Err(Error::config(format!(
                "conv {}→{} has {} weights and {} biases",
                self.in_ch,
                self.out_ch,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        assert_eq!(x.c, self.in_ch, "conv input channels");
        let s = self.stride;
        let (ho, wo) = (conv_out_size(x.h, s), conv_out_size(x.w, s));
        let xp = pad1(x);
        let wp = xp.w;
        let mut out = Tensor3::zeros(self.out_ch, ho, wo);
        out.data
            .par_chunks_mut(ho * wo)
            .enumerate()
            .for_each(|(o, plane)| {
                plane.fill(self.bias[o]);
                for i in 0..self.in_ch {
                    let src = xp.plane(i);
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wv = self.weight[((o * self.in_ch + i) * 3 + ky) * 3 + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for y in 0..ho {
                                let row = &src[(y * s + ky) * wp + kx..];
                                let dst = &mut plane[y * wo..(y + 1) * wo];
                                for (x, d) in dst.iter_mut().enumerate() {
                                    *d += wv * row[x * s];
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    /// Returns the input gradient (when `need_input`) and parameter gradients.
    pub fn backward(&self, x: &Tensor3, dy: &Tensor3, need_input: bool, need_params: bool) -> (Option<Tensor3>, Option<Conv2dGrad>) {
        let s = self.stride;
        let (ho, wo) = (dy.h, dy.w);
        let xp = pad1(x);
        let (hp, wp) = (xp.h, xp.w);
        let params = need_params.then(|| {
            let mut weight = vec![0.0; self.weight.len()];
            weight
                .par_chunks_mut(self.in_ch * 9)
                .enumerate()
                .for_each(|(o, wo_slice)| {
                    let g = dy.plane(o);
                    for i in 0..self.in_ch {
                        let src = xp.plane(i);
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let mut acc = 0.0;
                                for y in 0..ho {
                                    let row = &src[(y * s + ky) * wp + kx..];
                                    let grow = &g[y * wo..(y + 1) * wo];
                                    for (x, gv) in grow.iter().enumerate() {
                                        acc += gv * row[x * s];
                                    }
                                }
                                wo_slice[(i * 3 + ky) * 3 + kx] = acc;
                            }
                        }
                    }
                });
            let bias = (0..self.out_ch).map(|o| dy.plane(o).iter().sum()).collect();
            Conv2dGrad { weight, bias }
        });
        let input = need_input.then(|| {
            let mut dxp = Tensor3::zeros(self.in_ch, hp, wp);
            dxp.data
                .par_chunks_mut(hp * wp)
                .enumerate()
                .for_each(|(i, plane)| {
                    for o in 0..self.out_ch {
                        let g = dy.plane(o);
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let wv = self.weight[((o * self.in_ch + i) * 3 + ky) * 3 + kx];
                                if wv == 0.0 {
                                    continue;
                                }
                                for y in 0..ho {
                                    let base = (y * s + ky) * wp + kx;
                                    let grow = &g[y * wo..(y + 1) * wo];
                                    for (x, gv) in grow.iter().enumerate() {
                                        plane[base + x * s] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                });
            let mut dx = Tensor3::zeros(self.in_ch, x.h, x.w);
            for ch in 0..self.in_ch {
                for y in 0..x.h {
                    let off = (ch * hp + y + 1) * wp + 1;
                    dx.data[(ch * x.h + y) * x.w..(ch * x.h + y + 1) * x.w]
                        .copy_from_slice(&dxp.data[off..off + x.w]);
                }
            }
            dx
        });
        (input, params)
    }
}

/// Depth-wise 3×3 convolution, stride 1, zero padding 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConv {
    pub channels: usize,
    /// `channels × 3 × 3`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DepthwiseConv {
    pub fn new(channels: usize, rng: &mut XorShift64Star) -> Self {
        Self {
            channels,
            weight: init_normal(rng, channels * 9, (1.0f64 / 9.0).sqrt()),
            bias: vec![0.0; channels],
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.weight.len() != self.channels * 9 || self.bias.len() != self.channels {
            return Err(Error::config("depth-wise conv shape mismatch"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let xp = pad1(x);
        let mut out = Tensor3::zeros(x.c, x.h, x.w);
        for ch in 0..x.c {
            let src = xp.plane(ch);
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut acc = self.bias[ch];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            acc += self.weight[ch * 9 + ky * 3 + kx] * src[(y + ky) * xp.w + xx + kx];
                        }
                    }
                    out.data[(ch * x.h + y) * x.w + xx] = acc;
                }
            }
        }
        out
    }

    pub fn backward(&self, x: &Tensor3, dy: &Tensor3) -> (Tensor3, Vec<f64>, Vec<f64>) {
        let xp = pad1(x);
        let mut dxp = Tensor3::zeros(x.c, xp.h, xp.w);
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.channels];
        for ch in 0..x.c {
            let src = xp.plane(ch);
            for y in 0..x.h {
                for xx in 0..x.w {
                    let g = dy.data[(ch * x.h + y) * x.w + xx];
                    db[ch] += g;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let idx = (y + ky) * xp.w + xx + kx;
                            dw[ch * 9 + ky * 3 + kx] += g * src[idx];
                            dxp.data[ch * xp.h * xp.w + idx] += g * self.weight[ch * 9 + ky * 3 + kx];
                        }
                    }
                }
            }
        }
        let mut dx = Tensor3::zeros(x.c, x.h, x.w);
        for ch in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    dx.data[(ch * x.h + y) * x.w + xx] = dxp.data[(ch * xp.h + y + 1) * xp.w + xx + 1];
                }
            }
        }
        (dx, dw, db)
    }
}

// ---------------------------------------------------------------------------
// linear

/// `y = W x + b` applied to each row of a row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut XorShift64Star) -> Self {
        Self::with_std(inputs, outputs, (1.0 / inputs as f64).sqrt(), rng)
    }

    pub fn with_std(inputs: usize, outputs: usize, std: f64, rng: &mut XorShift64Star) -> Self {
        Self {
            inputs,
            outputs,
            weight: init_normal(rng, inputs * outputs, std),
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.weight.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::config(format!(
                "linear {}→{} has {} weights and {} biases",
                self.inputs,
                self.outputs,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let rows = x.len() / self.inputs;
        let mut y = Vec::with_capacity(rows * self.outputs);
        for r in 0..rows {
            let xr = &x[r * self.inputs..(r + 1) * self.inputs];
            for o in 0..self.outputs {
                let wr = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                y.push(self.bias[o] + dot(wr, xr));
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], dy: &[f64]) -> (Vec<f64>, LinearGrad) {
        let rows = x.len() / self.inputs;
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; self.weight.len()];
        let mut db = vec![0.0; self.outputs];
        for r in 0..rows {
            let xr = &x[r * self.inputs..(r + 1) * self.inputs];
            let dxr = &mut dx[r * self.inputs..(r + 1) * self.inputs];
            for o in 0..self.outputs {
                let g = dy[r * self.outputs + o];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                let wr = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                let dwr = &mut dw[o * self.inputs..(o + 1) * self.inputs];
                for i in 0..self.inputs {
                    dxr[i] += g * wr[i];
                    dwr[i] += g * xr[i];
                }
            }
        }
        (dx, LinearGrad { weight: dw, bias: db })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a (n×k) · bᵀ (m×k)ᵀ → n×m`.
pub fn matmul_bt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = dot(&a[i * k..(i + 1) * k], &b[j * k..(j + 1) * k]);
        }
    }
    out
}

/// `a (n×k) · b (k×m) → n×m`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `aᵀ (k×n)ᵀ · b (k×m) → n×m`.
pub fn matmul_at(a: &[f64], b: &[f64], k: usize, n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for p in 0..k {
        let brow = &b[p * m..(p + 1) * m];
        for i in 0..n {
            let av = a[p * n + i];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// pointwise

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` where the post-activation value is not positive.
pub fn relu_backward_inplace(output: &[f64], grad: &mut [f64]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// GELU, tanh approximation.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Vector-Jacobian product of softmax: `ds = p ⊙ (dp − ⟨p, dp⟩)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(pi, gi)| pi * (gi - inner)).collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// optimizer

/// Adaptive-moment state for one group of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for MomentState {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

/// A named parameter block and its gradient.
pub struct ParamBlock<'a> {
    pub name: &'a str,
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
}

impl<'a> ParamBlock<'a> {
    pub fn new(name: &'a str, values: &'a mut [f64], grads: &'a [f64]) -> Self {
        Self { name, values, grads }
    }
}

/// One bias-corrected adaptive-moment update. Fails without touching any
/// parameter when a gradient is non-finite or shapes disagree.
pub fn optimizer_step(blocks: &mut [ParamBlock<'_>], state: &mut MomentState, step_size: f64) -> Result<()> {
    for b in blocks.iter() {
        if b.values.len() != b.grads.len() {
            return Err(Error::config(format!(
                "block {}: {} values but {} gradients",
                b.name,
                b.values.len(),
                b.grads.len()
            )));
        }
        if let Some(i) = b.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                block: b.name.to_string(),
                detail: format!("gradient[{i}] = {}", b.grads[i]),
            });
        }
    }
    if state.first.is_empty() {
        state.first = blocks.iter().map(|b| vec![0.0; b.values.len()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != blocks.len()
        || state.first.iter().zip(blocks.iter()).any(|(m, b)| m.len() != b.values.len())
    {
        return Err(Error::config("parameter blocks do not match the moment state"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (k, b) in blocks.iter_mut().enumerate() {
        let (m, v) = (&mut state.first[k], &mut state.second[k]);
        for i in 0..b.values.len() {
            let g = b.grads[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            b.values[i] -= step_size * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}
