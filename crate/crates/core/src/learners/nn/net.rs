//! Compiled 1-D networks: shape-checked layers, forward passes with caches,
//! and reverse-mode gradients. Everything is `f64`; models are rounded to
//! `f32` only when frozen.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{normal, ChaCha8Rng};

use super::{CnnArchitecture, LayerSpec};

/// A layer with all shapes resolved. `w`/`b` index into the flat tensor list.
#[derive(Debug, Clone)]
pub(crate) enum CLayer {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        relu: bool,
        in_len: usize,
        out_len: usize,
        w: usize,
        b: usize,
    },
    Pool {
        ch: usize,
        width: usize,
        in_len: usize,
        out_len: usize,
    },
    Dropout {
        rate: f64,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
        relu: bool,
        w: usize,
        b: usize,
    },
    Parallel {
        branches: Vec<Vec<CLayer>>,
        out_ch: usize,
        out_len: usize,
    },
}

/// Walks a layer list, allocating parameter tensor slots as it goes.
pub(crate) struct Compiler {
    pub shapes: Vec<usize>,
    /// Fan-in per tensor, for He initialization (biases get 0).
    pub fan_in: Vec<usize>,
}

impl Compiler {
    pub fn new() -> Self {
        Self { shapes: Vec::new(), fan_in: Vec::new() }
    }

    fn alloc(&mut self, len: usize, fan_in: usize) -> usize {
        self.shapes.push(len);
        self.fan_in.push(fan_in);
        self.shapes.len() - 1
    }

    /// Compile the convolutional stage of a layer list. Returns the compiled
    /// layers and the output (channels, length).
    pub fn conv_stage(
        &mut self,
        layers: &[LayerSpec],
        mut ch: usize,
        mut len: usize,
    ) -> Result<(Vec<CLayer>, usize, usize)> {
        let mut out = Vec::new();
        for spec in layers {
            match *spec {
                LayerSpec::Conv { out_channels, kernel, stride, relu } => {
                    if kernel == 0 || stride == 0 {
                        return Err(Error::Arch("conv kernel and stride must be positive".into()));
                    }
                    if len < kernel {
                        return Err(Error::Arch(format!(
                            "conv kernel {kernel} exceeds input length {len}"
                        )));
                    }
                    let out_len = (len - kernel) / stride + 1;
                    let w = self.alloc(out_channels * ch * kernel, ch * kernel);
                    let b = self.alloc(out_channels, 0);
                    out.push(CLayer::Conv {
                        in_ch: ch,
                        out_ch: out_channels,
                        kernel,
                        stride,
                        relu,
                        in_len: len,
                        out_len,
                        w,
                        b,
                    });
                    ch = out_channels;
                    len = out_len;
                }
                LayerSpec::MaxPool { width } => {
                    if width == 0 || len < width {
                        return Err(Error::Arch(format!(
                            "pool width {width} invalid for length {len}"
                        )));
                    }
                    let out_len = len / width;
                    out.push(CLayer::Pool { ch, width, in_len: len, out_len });
                    len = out_len;
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Arch("dropout rate must lie in [0, 1)".into()));
                    }
                    out.push(CLayer::Dropout { rate });
                }
                LayerSpec::Parallel { ref branches } => {
                    if branches.is_empty() {
                        return Err(Error::Arch("parallel block needs branches".into()));
                    }
                    let mut compiled = Vec::new();
                    let mut total_ch = 0;
                    let mut out_len = None;
                    for branch in branches {
                        let (b_layers, b_ch, b_len) = self.conv_stage(branch, ch, len)?;
                        match out_len {
                            None => out_len = Some(b_len),
                            Some(l) if l != b_len => {
                                return Err(Error::Arch(format!(
                                    "parallel branches end at lengths {l} and {b_len}"
                                )));
                            }
                            _ => {}
                        }
                        total_ch += b_ch;
                        compiled.push(b_layers);
                    }
                    let out_len = out_len.expect("nonempty branches");
                    out.push(CLayer::Parallel { branches: compiled, out_ch: total_ch, out_len });
                    ch = total_ch;
                    len = out_len;
                }
                LayerSpec::Dense { .. } | LayerSpec::Softmax => {
                    return Err(Error::Arch(
                        "dense/softmax layers cannot appear inside the convolutional stage".into(),
                    ));
                }
            }
        }
        Ok((out, ch, len))
    }

    /// Compile the dense head. `in_dim` is the flattened conv output.
    pub fn dense_stage(
        &mut self,
        layers: &[LayerSpec],
        mut in_dim: usize,
        n_classes: usize,
    ) -> Result<Vec<CLayer>> {
        let mut out = Vec::new();
        let mut saw_softmax = false;
        for (i, spec) in layers.iter().enumerate() {
            if saw_softmax {
                return Err(Error::Arch("softmax must be the final layer".into()));
            }
            match *spec {
                LayerSpec::Dense { units, relu } => {
                    if units == 0 {
                        return Err(Error::Arch("dense layer needs at least one unit".into()));
                    }
                    let w = self.alloc(units * in_dim, in_dim);
                    let b = self.alloc(units, 0);
                    out.push(CLayer::Dense { in_dim, out_dim: units, relu, w, b });
                    in_dim = units;
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Arch("dropout rate must lie in [0, 1)".into()));
                    }
                    out.push(CLayer::Dropout { rate });
                }
                LayerSpec::Softmax => {
                    if i != layers.len() - 1 {
                        return Err(Error::Arch("softmax must be the final layer".into()));
                    }
                    saw_softmax = true;
                }
                _ => {
                    return Err(Error::Arch(
                        "convolutional layers cannot follow the dense head".into(),
                    ));
                }
            }
        }
        if !saw_softmax {
            return Err(Error::Arch("architecture must end with a softmax layer".into()));
        }
        if in_dim != n_classes {
            return Err(Error::Arch(format!(
                "final dense layer has {in_dim} units but there are {n_classes} classes"
            )));
        }
        Ok(out)
    }
}

/// A compiled single-input network producing logits.
#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub conv: Vec<CLayer>,
    pub dense: Vec<CLayer>,
    pub shapes: Vec<usize>,
    pub fan_in: Vec<usize>,
    pub input_len: usize,
}

/// Split an architecture's layer list at the first dense layer.
fn split_stages(layers: &[LayerSpec]) -> (&[LayerSpec], &[LayerSpec]) {
    let cut = layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Dense { .. } | LayerSpec::Softmax))
        .unwrap_or(layers.len());
    layers.split_at(cut)
}

pub(crate) fn compile(arch: &CnnArchitecture, n_classes: usize) -> Result<Net> {
    if n_classes == 0 {
        return Err(Error::Arch("network needs at least one class".into()));
    }
    let (conv_specs, dense_specs) = split_stages(&arch.layers);
    let mut compiler = Compiler::new();
    let (conv, ch, len) = compiler.conv_stage(conv_specs, 1, arch.input_length)?;
    let dense = compiler.dense_stage(dense_specs, ch * len, n_classes)?;
    Ok(Net {
        conv,
        dense,
        shapes: compiler.shapes,
        fan_in: compiler.fan_in,
        input_len: arch.input_length,
    })
}

/// He-style initialization: weights ~ N(0, sqrt(2 / fan_in)), biases zero.
pub(crate) fn init_params(shapes: &[usize], fan_in: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    shapes
        .iter()
        .zip(fan_in)
        .map(|(&len, &fan)| {
            if fan == 0 {
                vec![0.0; len]
            } else {
                let scale = (2.0 / fan as f64).sqrt();
                (0..len).map(|_| scale * normal(rng)).collect()
            }
        })
        .collect()
}

/// Per-layer forward caches for the backward pass.
pub(crate) enum Cache {
    Conv { input: Vec<f64>, preact: Vec<f64> },
    Pool { argmax: Vec<usize> },
    Dropout { mask: Option<Vec<f64>> },
    Dense { input: Vec<f64>, preact: Vec<f64> },
    Parallel { branch_caches: Vec<Vec<Cache>> },
}

pub(crate) enum Mode<'r> {
    /// Inference: dropout off, no caches needed (pass a scratch Vec anyway).
    Eval,
    /// Training: dropout draws from the rng, caches recorded.
    Train(&'r mut ChaCha8Rng),
}

impl Mode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Run a compiled stage. Returns the output activations; pushes one cache
/// entry per layer when training.
pub(crate) fn forward_stage(
    layers: &[CLayer],
    params: &[Vec<f64>],
    mut x: Vec<f64>,
    mode: &mut Mode,
    caches: &mut Vec<Cache>,
) -> Vec<f64> {
    for layer in layers {
        x = match layer {
            CLayer::Conv { in_ch, out_ch, kernel, stride, relu, in_len, out_len, w, b } => {
                let wv = &params[*w];
                let bv = &params[*b];
                let mut out = vec![0.0; out_ch * out_len];
                for oc in 0..*out_ch {
                    let obase = oc * out_len;
                    out[obase..obase + out_len].fill(bv[oc]);
                    for ic in 0..*in_ch {
                        let wrow = &wv[(oc * in_ch + ic) * kernel..(oc * in_ch + ic + 1) * kernel];
                        let xin = &x[ic * in_len..(ic + 1) * in_len];
                        for j in 0..*out_len {
                            let window = &xin[j * stride..j * stride + kernel];
                            let mut acc = 0.0;
                            for (wt, xt) in wrow.iter().zip(window) {
                                acc += wt * xt;
                            }
                            out[obase + j] += acc;
                        }
                    }
                }
                let preact = if mode.is_train() { out.clone() } else { Vec::new() };
                if *relu {
                    for v in &mut out {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                if mode.is_train() {
                    caches.push(Cache::Conv { input: std::mem::take(&mut x), preact });
                }
                out
            }
            CLayer::Pool { ch, width, in_len, out_len } => {
                let mut out = vec![0.0; ch * out_len];
                let mut argmax = if mode.is_train() { vec![0usize; ch * out_len] } else { Vec::new() };
                for c in 0..*ch {
                    let xin = &x[c * in_len..(c + 1) * in_len];
                    for j in 0..*out_len {
                        let start = j * width;
                        let mut best = start;
                        for t in start + 1..start + width {
                            if xin[t] > xin[best] {
                                best = t;
                            }
                        }
                        out[c * out_len + j] = xin[best];
                        if mode.is_train() {
                            argmax[c * out_len + j] = c * in_len + best;
                        }
                    }
                }
                if mode.is_train() {
                    caches.push(Cache::Pool { argmax });
                }
                out
            }
            CLayer::Dropout { rate } => match mode {
                Mode::Eval => x,
                Mode::Train(rng) => {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = x
                        .iter()
                        .map(|_| if rng.gen_range(0.0..1.0) < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for (v, m) in x.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    caches.push(Cache::Dropout { mask: Some(mask) });
                    x
                }
            },
            CLayer::Dense { in_dim, out_dim, relu, w, b } => {
                let wv = &params[*w];
                let bv = &params[*b];
                let mut out = vec![0.0; *out_dim];
                for o in 0..*out_dim {
                    let wrow = &wv[o * in_dim..(o + 1) * in_dim];
                    let mut acc = bv[o];
                    for (wi, xi) in wrow.iter().zip(&x) {
                        acc += wi * xi;
                    }
                    out[o] = acc;
                }
                let preact = if mode.is_train() { out.clone() } else { Vec::new() };
                if *relu {
                    for v in &mut out {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                if mode.is_train() {
                    caches.push(Cache::Dense { input: std::mem::take(&mut x), preact });
                }
                out
            }
            CLayer::Parallel { branches, out_ch, out_len } => {
                let mut out = Vec::with_capacity(out_ch * out_len);
                let mut branch_caches = Vec::new();
                for branch in branches {
                    let mut bc = Vec::new();
                    let y = forward_stage(branch, params, x.clone(), mode, &mut bc);
                    out.extend_from_slice(&y);
                    branch_caches.push(bc);
                }
                if mode.is_train() {
                    caches.push(Cache::Parallel { branch_caches });
                }
                out
            }
        };
    }
    x
}

/// Reverse a stage: consumes the caches pushed by `forward_stage` (in
/// reverse), accumulates parameter gradients into `grads`, returns the
/// gradient with respect to the stage input.
pub(crate) fn backward_stage(
    layers: &[CLayer],
    params: &[Vec<f64>],
    caches: &mut Vec<Cache>,
    mut dy: Vec<f64>,
    grads: &mut [Vec<f64>],
) -> Vec<f64> {
    for layer in layers.iter().rev() {
        let cache = caches.pop().expect("cache/layer mismatch");
        dy = match (layer, cache) {
            (
                CLayer::Conv { in_ch, out_ch, kernel, stride, relu, in_len, out_len, w, b },
                Cache::Conv { input, preact },
            ) => {
                let mut dpre = dy;
                if *relu {
                    for (g, p) in dpre.iter_mut().zip(&preact) {
                        if *p <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                let wv = &params[*w];
                let mut dx = vec![0.0; in_ch * in_len];
                for oc in 0..*out_ch {
                    let obase = oc * out_len;
                    let mut db = 0.0;
                    for j in 0..*out_len {
                        db += dpre[obase + j];
                    }
                    grads[*b][oc] += db;
                    for ic in 0..*in_ch {
                        let wbase = (oc * in_ch + ic) * kernel;
                        let xin = &input[ic * in_len..(ic + 1) * in_len];
                        let dxin = &mut dx[ic * in_len..(ic + 1) * in_len];
                        for j in 0..*out_len {
                            let g = dpre[obase + j];
                            if g == 0.0 {
                                continue;
                            }
                            let start = j * stride;
                            for t in 0..*kernel {
                                grads[*w][wbase + t] += g * xin[start + t];
                                dxin[start + t] += g * wv[wbase + t];
                            }
                        }
                    }
                }
                dx
            }
            (CLayer::Pool { ch, in_len, .. }, Cache::Pool { argmax }) => {
                let mut dx = vec![0.0; ch * in_len];
                for (g, &src) in dy.iter().zip(&argmax) {
                    dx[src] += g;
                }
                dx
            }
            (CLayer::Dropout { .. }, Cache::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (g, m) in dy.iter_mut().zip(&mask) {
                        *g *= m;
                    }
                }
                dy
            }
            (
                CLayer::Dense { in_dim, out_dim, relu, w, b },
                Cache::Dense { input, preact },
            ) => {
                let mut dpre = dy;
                if *relu {
                    for (g, p) in dpre.iter_mut().zip(&preact) {
                        if *p <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                let wv = &params[*w];
                let mut dx = vec![0.0; *in_dim];
                for o in 0..*out_dim {
                    let g = dpre[o];
                    grads[*b][o] += g;
                    if g == 0.0 {
                        continue;
                    }
                    let wrow = &wv[o * in_dim..(o + 1) * in_dim];
                    let grow = &mut grads[*w][o * in_dim..(o + 1) * in_dim];
                    for i in 0..*in_dim {
                        grow[i] += g * input[i];
                        dx[i] += g * wrow[i];
                    }
                }
                dx
            }
            (CLayer::Parallel { branches, out_len, .. }, Cache::Parallel { branch_caches }) => {
                let mut dx: Option<Vec<f64>> = None;
                let mut offset = 0;
                for (branch, mut bc) in branches.iter().zip(branch_caches) {
                    let b_ch = stage_out_channels(branch);
                    let take = b_ch * out_len;
                    let dband = dy[offset..offset + take].to_vec();
                    offset += take;
                    let dxb = backward_stage(branch, params, &mut bc, dband, grads);
                    match &mut dx {
                        None => dx = Some(dxb),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&dxb) {
                                *a += g;
                            }
                        }
                    }
                }
                dx.expect("nonempty branches")
            }
            _ => unreachable!("cache kind mismatch"),
        };
    }
    dy
}

fn stage_out_channels(layers: &[CLayer]) -> usize {
    for layer in layers.iter().rev() {
        match layer {
            CLayer::Conv { out_ch, .. } => return *out_ch,
            CLayer::Parallel { out_ch, .. } => return *out_ch,
            CLayer::Pool { ch, .. } => return *ch,
            _ => continue,
        }
    }
    1
}

/// Mean cross-entropy loss and the logits gradient for one sample.
pub(crate) fn ce_loss_grad(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - max).exp();
    }
    let log_z = max + sum.ln();
    let loss = log_z - logits[target];
    let mut grad: Vec<f64> = logits.iter().map(|&z| ((z - max).exp()) / sum).collect();
    grad[target] -= 1.0;
    (loss, grad)
}

/// Full network forward to logits.
pub(crate) fn forward_logits(
    net: &Net,
    params: &[Vec<f64>],
    input: &[f64],
    mode: &mut Mode,
    caches: &mut Vec<Cache>,
) -> Vec<f64> {
    let x = forward_stage(&net.conv, params, input.to_vec(), mode, caches);
    forward_stage(&net.dense, params, x, mode, caches)
}

/// Forward + backward for one sample under cross-entropy. Accumulates
/// parameter gradients; returns the loss.
pub(crate) fn backprop_sample(
    net: &Net,
    params: &[Vec<f64>],
    input: &[f64],
    target: usize,
    rng: &mut ChaCha8Rng,
    grads: &mut [Vec<f64>],
) -> f64 {
    let mut caches = Vec::new();
    let mut mode = Mode::Train(rng);
    let logits = forward_logits(net, params, input, &mut mode, &mut caches);
    let (loss, dlogits) = ce_loss_grad(&logits, target);
    let dconv_out = backward_stage(&net.dense, params, &mut caches, dlogits, grads);
    backward_stage(&net.conv, params, &mut caches, dconv_out, grads);
    loss
}

pub(crate) fn zero_like(shapes: &[usize]) -> Vec<Vec<f64>> {
    shapes.iter().map(|&n| vec![0.0; n]).collect()
}
