use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Temporal convolution with "same" padding, stride 1.
///
/// Weight layout `[kernel][in][out]`; the left pad is `(kernel - 1) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Transposed temporal convolution with kernel 2 and stride 2 (doubles the
/// time axis). Weight layout `[2][in][out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvTranspose1d {
    pub cin: usize,
    pub cout: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Affine map on flattened samples. Weight layout `[in][out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub nin: usize,
    pub nout: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv1d(Conv1d),
    ConvTranspose1d(ConvTranspose1d),
    Linear(Linear),
    Elu,
    Sigmoid,
    /// Non-overlapping mean over pairs of timesteps (odd tail dropped).
    AvgPool2,
    /// Mean over the time axis: `[B, T, C] -> [B, C]`.
    GlobalAvgPool,
    /// Reinterpret the per-sample shape.
    Reshape(Vec<usize>),
    /// Truncate or zero-pad the time axis to a fixed length.
    CropPad(usize),
}

impl Conv1d {
    pub fn new(cin: usize, cout: usize, kernel: usize) -> Self {
        Self {
            cin,
            cout,
            kernel,
            weight: vec![0.0; kernel * cin * cout],
            bias: vec![0.0; cout],
        }
    }
}

impl ConvTranspose1d {
    pub fn new(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            weight: vec![0.0; 2 * cin * cout],
            bias: vec![0.0; cout],
        }
    }
}

impl Linear {
    pub fn new(nin: usize, nout: usize) -> Self {
        Self {
            nin,
            nout,
            weight: vec![0.0; nin * nout],
            bias: vec![0.0; nout],
        }
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv",
            Layer::ConvTranspose1d(_) => "convt",
            Layer::Linear(_) => "linear",
            Layer::Elu => "elu",
            Layer::Sigmoid => "sigmoid",
            Layer::AvgPool2 => "avgpool",
            Layer::GlobalAvgPool => "gap",
            Layer::Reshape(_) => "reshape",
            Layer::CropPad(_) => "croppad",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Layer::Conv1d(c) => format!("conv({}->{},k{})", c.cin, c.cout, c.kernel),
            Layer::ConvTranspose1d(c) => format!("convt({}->{})", c.cin, c.cout),
            Layer::Linear(l) => format!("linear({}->{})", l.nin, l.nout),
            Layer::Reshape(s) => format!("reshape{s:?}"),
            Layer::CropPad(n) => format!("croppad({n})"),
            other => other.kind().to_string(),
        }
    }

    pub fn num_param_tensors(&self) -> usize {
        match self {
            Layer::Conv1d(_) | Layer::ConvTranspose1d(_) | Layer::Linear(_) => 2,
            _ => 0,
        }
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv1d(c) => vec![&c.weight, &c.bias],
            Layer::ConvTranspose1d(c) => vec![&c.weight, &c.bias],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::ConvTranspose1d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            Layer::Conv1d(c) => vec![vec![c.kernel, c.cin, c.cout], vec![c.cout]],
            Layer::ConvTranspose1d(c) => vec![vec![2, c.cin, c.cout], vec![c.cout]],
            Layer::Linear(l) => vec![vec![l.nin, l.nout], vec![l.nout]],
            _ => Vec::new(),
        }
    }

    pub(super) fn init<R: Rng>(&mut self, rng: &mut R) {
        let (fan_in, weight, bias) = match self {
            Layer::Conv1d(c) => (c.cin * c.kernel, &mut c.weight, &mut c.bias),
            Layer::ConvTranspose1d(c) => (c.cin, &mut c.weight, &mut c.bias),
            Layer::Linear(l) => (l.nin, &mut l.weight, &mut l.bias),
            _ => return,
        };
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        weight.iter_mut().for_each(|w| *w = normal.sample(rng));
        bias.iter_mut().for_each(|b| *b = 0.0);
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let seq = |what: &str| -> Result<(usize, usize)> {
            match input {
                [t, c] => Ok((*t, *c)),
                _ => Err(Error::Shape(format!("{what} expects [time, channels], got {input:?}"))),
            }
        };
        match self {
            Layer::Conv1d(c) => {
                let (t, ch) = seq("conv")?;
                if ch != c.cin {
                    return Err(Error::Shape(format!("conv expects {} channels, got {ch}", c.cin)));
                }
                Ok(vec![t, c.cout])
            }
            Layer::ConvTranspose1d(c) => {
                let (t, ch) = seq("convt")?;
                if ch != c.cin {
                    return Err(Error::Shape(format!("convt expects {} channels, got {ch}", c.cin)));
                }
                Ok(vec![2 * t, c.cout])
            }
            Layer::Linear(l) => {
                let n: usize = input.iter().product();
                if n != l.nin {
                    return Err(Error::Shape(format!("linear expects {} inputs, got {n}", l.nin)));
                }
                Ok(vec![l.nout])
            }
            Layer::Elu | Layer::Sigmoid => Ok(input.to_vec()),
            Layer::AvgPool2 => {
                let (t, ch) = seq("avgpool")?;
                if t < 2 {
                    return Err(Error::Shape("avgpool needs at least 2 timesteps".into()));
                }
                Ok(vec![t / 2, ch])
            }
            Layer::GlobalAvgPool => {
                let (_, ch) = seq("gap")?;
                Ok(vec![ch])
            }
            Layer::Reshape(s) => {
                if s.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(Error::Shape(format!("cannot reshape {input:?} to {s:?}")));
                }
                Ok(s.clone())
            }
            Layer::CropPad(n) => {
                let (_, ch) = seq("croppad")?;
                Ok(vec![*n, ch])
            }
        }
    }

    pub(super) fn forward(&self, x: &Tensor) -> Tensor {
        let b = x.batch();
        match self {
            Layer::Conv1d(c) => {
                let t_len = x.shape[1];
                let pad = (c.kernel - 1) / 2;
                let mut out = vec![0.0; b * t_len * c.cout];
                for bi in 0..b {
                    for t in 0..t_len {
                        let o = &mut out[(bi * t_len + t) * c.cout..][..c.cout];
                        o.copy_from_slice(&c.bias);
                        for j in 0..c.kernel {
                            let Some(ti) = (t + j).checked_sub(pad).filter(|&v| v < t_len) else {
                                continue;
                            };
                            let xin = &x.data[(bi * t_len + ti) * c.cin..][..c.cin];
                            for (i, &xv) in xin.iter().enumerate() {
                                axpy(o, xv, &c.weight[(j * c.cin + i) * c.cout..][..c.cout]);
                            }
                        }
                    }
                }
                Tensor { data: out, shape: vec![b, t_len, c.cout] }
            }
            Layer::ConvTranspose1d(c) => {
                let t_len = x.shape[1];
                let mut out = vec![0.0; b * 2 * t_len * c.cout];
                for bi in 0..b {
                    for t in 0..t_len {
                        let xin = &x.data[(bi * t_len + t) * c.cin..][..c.cin];
                        for j in 0..2 {
                            let o = &mut out[(bi * 2 * t_len + 2 * t + j) * c.cout..][..c.cout];
                            o.copy_from_slice(&c.bias);
                            for (i, &xv) in xin.iter().enumerate() {
                                axpy(o, xv, &c.weight[(j * c.cin + i) * c.cout..][..c.cout]);
                            }
                        }
                    }
                }
                Tensor { data: out, shape: vec![b, 2 * t_len, c.cout] }
            }
            Layer::Linear(l) => {
                let mut out = vec![0.0; b * l.nout];
                for bi in 0..b {
                    let o = &mut out[bi * l.nout..][..l.nout];
                    o.copy_from_slice(&l.bias);
                    for (i, &xv) in x.row(bi).iter().enumerate() {
                        axpy(o, xv, &l.weight[i * l.nout..][..l.nout]);
                    }
                }
                Tensor { data: out, shape: vec![b, l.nout] }
            }
            Layer::Elu => Tensor {
                data: x.data.iter().map(|&v| elu(v)).collect(),
                shape: x.shape.clone(),
            },
            Layer::Sigmoid => Tensor {
                data: x.data.iter().map(|&v| sigmoid(v)).collect(),
                shape: x.shape.clone(),
            },
            Layer::AvgPool2 => {
                let (t_len, ch) = (x.shape[1], x.shape[2]);
                let half = t_len / 2;
                let mut out = vec![0.0; b * half * ch];
                for bi in 0..b {
                    for t in 0..half {
                        let a = &x.data[(bi * t_len + 2 * t) * ch..][..ch];
                        let n = &x.data[(bi * t_len + 2 * t + 1) * ch..][..ch];
                        let o = &mut out[(bi * half + t) * ch..][..ch];
                        for k in 0..ch {
                            o[k] = 0.5 * (a[k] + n[k]);
                        }
                    }
                }
                Tensor { data: out, shape: vec![b, half, ch] }
            }
            Layer::GlobalAvgPool => {
                let (t_len, ch) = (x.shape[1], x.shape[2]);
                let mut out = vec![0.0; b * ch];
                for bi in 0..b {
                    let o = &mut out[bi * ch..][..ch];
                    for t in 0..t_len {
                        axpy(o, 1.0, &x.data[(bi * t_len + t) * ch..][..ch]);
                    }
                    o.iter_mut().for_each(|v| *v /= t_len as f64);
                }
                Tensor { data: out, shape: vec![b, ch] }
            }
            Layer::Reshape(s) => {
                let mut shape = vec![b];
                shape.extend(s);
                Tensor { data: x.data.clone(), shape }
            }
            Layer::CropPad(n) => {
                let (t_len, ch) = (x.shape[1], x.shape[2]);
                let keep = t_len.min(*n);
                let mut out = vec![0.0; b * n * ch];
                for bi in 0..b {
                    out[bi * n * ch..][..keep * ch].copy_from_slice(&x.data[bi * t_len * ch..][..keep * ch]);
                }
                Tensor { data: out, shape: vec![b, *n, ch] }
            }
        }
    }

    /// Input gradient for `grad` at input `x`; `param_grads` (weight, bias)
    /// receives accumulated parameter gradients when present.
    pub(super) fn backward(&self, x: &Tensor, grad: &Tensor, param_grads: Option<&mut [Vec<f64>]>) -> Tensor {
        let b = x.batch();
        match self {
            Layer::Conv1d(c) => {
                let t_len = x.shape[1];
                let pad = (c.kernel - 1) / 2;
                let mut gin = vec![0.0; x.data.len()];
                let mut pg = param_grads;
                for bi in 0..b {
                    for t in 0..t_len {
                        let g = &grad.data[(bi * t_len + t) * c.cout..][..c.cout];
                        if let Some(pg) = pg.as_deref_mut() {
                            axpy(&mut pg[1], 1.0, g);
                        }
                        for j in 0..c.kernel {
                            let Some(ti) = (t + j).checked_sub(pad).filter(|&v| v < t_len) else {
                                continue;
                            };
                            let base = (bi * t_len + ti) * c.cin;
                            for i in 0..c.cin {
                                let w_off = (j * c.cin + i) * c.cout;
                                gin[base + i] += dot(&c.weight[w_off..][..c.cout], g);
                                if let Some(pg) = pg.as_deref_mut() {
                                    axpy(&mut pg[0][w_off..][..c.cout], x.data[base + i], g);
                                }
                            }
                        }
                    }
                }
                Tensor { data: gin, shape: x.shape.clone() }
            }
            Layer::ConvTranspose1d(c) => {
                let t_len = x.shape[1];
                let mut gin = vec![0.0; x.data.len()];
                let mut pg = param_grads;
                for bi in 0..b {
                    for t in 0..t_len {
                        let base = (bi * t_len + t) * c.cin;
                        for j in 0..2 {
                            let g = &grad.data[(bi * 2 * t_len + 2 * t + j) * c.cout..][..c.cout];
                            if let Some(pg) = pg.as_deref_mut() {
                                axpy(&mut pg[1], 1.0, g);
                            }
                            for i in 0..c.cin {
                                let w_off = (j * c.cin + i) * c.cout;
                                gin[base + i] += dot(&c.weight[w_off..][..c.cout], g);
                                if let Some(pg) = pg.as_deref_mut() {
                                    axpy(&mut pg[0][w_off..][..c.cout], x.data[base + i], g);
                                }
                            }
                        }
                    }
                }
                Tensor { data: gin, shape: x.shape.clone() }
            }
            Layer::Linear(l) => {
                let mut gin = vec![0.0; x.data.len()];
                let mut pg = param_grads;
                for bi in 0..b {
                    let g = &grad.data[bi * l.nout..][..l.nout];
                    let xr = x.row(bi);
                    if let Some(pg) = pg.as_deref_mut() {
                        axpy(&mut pg[1], 1.0, g);
                    }
                    for i in 0..l.nin {
                        let w_off = i * l.nout;
                        gin[bi * l.nin + i] = dot(&l.weight[w_off..][..l.nout], g);
                        if let Some(pg) = pg.as_deref_mut() {
                            axpy(&mut pg[0][w_off..][..l.nout], xr[i], g);
                        }
                    }
                }
                Tensor { data: gin, shape: x.shape.clone() }
            }
            Layer::Elu => Tensor {
                data: x
                    .data
                    .iter()
                    .zip(&grad.data)
                    .map(|(&v, &g)| if v > 0.0 { g } else { g * v.exp() })
                    .collect(),
                shape: x.shape.clone(),
            },
            Layer::Sigmoid => Tensor {
                data: x
                    .data
                    .iter()
                    .zip(&grad.data)
                    .map(|(&v, &g)| {
                        let s = sigmoid(v);
                        g * s * (1.0 - s)
                    })
                    .collect(),
                shape: x.shape.clone(),
            },
            Layer::AvgPool2 => {
                let (t_len, ch) = (x.shape[1], x.shape[2]);
                let half = t_len / 2;
                let mut gin = vec![0.0; x.data.len()];
                for bi in 0..b {
                    for t in 0..half {
                        let g = &grad.data[(bi * half + t) * ch..][..ch];
                        for k in 0..ch {
                            gin[(bi * t_len + 2 * t) * ch + k] = 0.5 * g[k];
                            gin[(bi * t_len + 2 * t + 1) * ch + k] = 0.5 * g[k];
                        }
                    }
                }
                Tensor { data: gin, shape: x.shape.clone() }
            }
            Layer::GlobalAvgPool => {
                let (t_len, ch) = (x.shape[1], x.shape[2]);
                let mut gin = vec![0.0; x.data.len()];
                let inv = 1.0 / t_len as f64;
                for bi in 0..b {
                    let g = &grad.data[bi * ch..][..ch];
                    for t in 0..t_len {
                        axpy(&mut gin[(bi * t_len + t) * ch..][..ch], inv, g);
                    }
                }
                Tensor { data: gin, shape: x.shape.clone() }
            }
            Layer::Reshape(_) => Tensor {
                data: grad.data.clone(),
                shape: x.shape.clone(),
            },
            Layer::CropPad(n) => {
                let (t_len, ch) = (x.shape[1], x.shape[2]);
                let keep = t_len.min(*n);
                let mut gin = vec![0.0; x.data.len()];
                for bi in 0..b {
                    gin[bi * t_len * ch..][..keep * ch].copy_from_slice(&grad.data[bi * n * ch..][..keep * ch]);
                }
                Tensor { data: gin, shape: x.shape.clone() }
            }
        }
    }
}
