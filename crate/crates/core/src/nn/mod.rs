//! Minimal f64 tensor and layer library with explicit reverse-mode passes.
//!
//! A [`Network`] is a sequence of [`Layer`]s. `forward_tape` records the
//! input of every layer so that `backward` can return the input gradient
//! and, when asked, accumulate parameter gradients. Backpropagating through a
//! network without requesting parameter gradients leaves it untouched, which
//! is how frozen blocks pass gradients upstream.
//!
//! Layouts are row-major. Sequence tensors are `[batch, time, channels]`,
//! vector tensors `[batch, features]`.

mod adam;
mod layers;

pub use adam::{Adam, AdamConfig};
pub use layers::{Conv1d, ConvTranspose1d, Layer, Linear};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { data, shape })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { data: vec![0.0; n], shape }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self { data: vec![value; n], shape }
    }

    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Shape without the leading batch axis.
    pub fn sample_shape(&self) -> &[usize] {
        &self.shape[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn row_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack along the batch axis. All inputs must share a sample shape.
    pub fn stack(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        let sample = first.sample_shape().to_vec();
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut batch = 0;
        for p in parts {
            if p.sample_shape() != sample.as_slice() {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    p.shape, first.shape
                )));
            }
            data.extend_from_slice(&p.data);
            batch += p.batch();
        }
        let mut shape = vec![batch];
        shape.extend(sample);
        Ok(Tensor { data, shape })
    }

    /// Rows `[start, end)` of the batch axis.
    pub fn slice_batch(&self, start: usize, end: usize) -> Tensor {
        let n = self.sample_len();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor {
            data: self.data[start * n..end * n].to_vec(),
            shape,
        }
    }

    /// Row-wise concatenation of two `[B, d]` tensors into `[B, da + db]`.
    pub fn concat_features(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.shape.len() != 2 || b.shape.len() != 2 || a.batch() != b.batch() {
            return Err(Error::Shape(format!("cannot concat {:?} and {:?}", a.shape, b.shape)));
        }
        let (da, db) = (a.shape[1], b.shape[1]);
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for i in 0..a.batch() {
            data.extend_from_slice(&a.data[i * da..(i + 1) * da]);
            data.extend_from_slice(&b.data[i * db..(i + 1) * db]);
        }
        Ok(Tensor {
            data,
            shape: vec![a.batch(), da + db],
        })
    }

    /// Inverse of [`Tensor::concat_features`] for a `[B, 2d]` gradient.
    pub fn split_features(&self, left: usize) -> (Tensor, Tensor) {
        let b = self.batch();
        let d = self.shape[1];
        let right = d - left;
        let mut l = Vec::with_capacity(b * left);
        let mut r = Vec::with_capacity(b * right);
        for i in 0..b {
            l.extend_from_slice(&self.data[i * d..i * d + left]);
            r.extend_from_slice(&self.data[i * d + left..(i + 1) * d]);
        }
        (
            Tensor { data: l, shape: vec![b, left] },
            Tensor { data: r, shape: vec![b, right] },
        )
    }

    pub fn scale(mut self, k: f64) -> Tensor {
        self.data.iter_mut().for_each(|v| *v *= k);
        self
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }
}

/// Parameter gradients, one buffer per parameter tensor in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= k);
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }
}

/// Per-layer inputs recorded during a training forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

impl Network {
    /// Build a network for per-sample input `input_shape`, checking that
    /// every layer accepts the shape produced by its predecessor.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(Self {
            layers,
            input_shape,
            output_shape: shape,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Fan-in scaled normal weights, zero biases.
    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.init(rng);
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.sample_shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "expected per-sample shape {:?}, got {:?}",
                self.input_shape,
                x.sample_shape()
            )));
        }
        if x.batch() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h);
        }
        Ok(h)
    }

    pub fn forward_tape(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&h);
            inputs.push(h);
            h = next;
        }
        Ok((h, Tape { inputs }))
    }

    /// Propagate `grad_out` back to the input. Parameter gradients are added
    /// into `grads` when given.
    pub fn backward(&self, tape: &Tape, grad_out: Tensor, mut grads: Option<&mut Grads>) -> Tensor {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut k = 0;
        for layer in &self.layers {
            offsets.push(k);
            k += layer.num_param_tensors();
        }
        let mut g = grad_out;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let slot = grads
                .as_deref_mut()
                .filter(|_| layer.num_param_tensors() > 0)
                .map(|gr| &mut gr.0[offsets[idx]..offsets[idx] + 2]);
            g = layer.backward(&tape.inputs[idx], &g, slot);
        }
        g
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params().iter().map(|p| vec![0.0; p.len()]).collect())
    }

    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// `layer<i>.<kind>.weight` / `.bias`, in parameter order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.num_param_tensors() > 0 {
                names.push(format!("layer{i}.{}.weight", l.kind()));
                names.push(format!("layer{i}.{}.bias", l.kind()));
            }
        }
        names
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(|l| l.param_shapes()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().into_iter().flatten().copied().collect()
    }

    /// Overwrite every parameter from a flat vector in parameter order.
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// One-line description of the architecture (layer kinds and shapes).
    pub fn describe(&self) -> String {
        let mut parts = vec![format!("in{:?}", self.input_shape)];
        parts.extend(self.layers.iter().map(|l| l.describe()));
        parts.join(" -> ")
    }
}
