//! Scalar objectives and their gradients with respect to the block outputs.
//!
//! Reductions: reconstruction is an element mean per sample, then a batch
//! mean; everything else is a batch mean. Probabilities are clamped to
//! `[EPS, 1 - EPS]` before taking logs, and the gradient is zero where the
//! clamp is active.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::softmax;
use crate::nn::Tensor;

pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_a: f64,
    pub w_r: f64,
    pub w_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_a: 0.1,
            w_r: 0.7,
            w_c: 0.2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_a, self.w_r, self.w_c].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Loss value together with its gradient w.r.t. the loss input.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Tensor,
}

fn check_probs(p: &Tensor, g: &[u8]) -> Result<()> {
    if p.data.len() != g.len() {
        return Err(Error::Shape(format!("{} probabilities for {} labels", p.data.len(), g.len())));
    }
    if g.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(v) = p.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("probability {v} outside [0, 1]")));
    }
    if g.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("pair labels must be 0 or 1".into()));
    }
    Ok(())
}

fn clamp(p: f64) -> (f64, bool) {
    let c = p.clamp(EPS, 1.0 - EPS);
    (c, c == p)
}

/// Mean squared reconstruction error.
pub fn recon_loss(x_hat: &Tensor, x: &Tensor) -> Result<LossGrad> {
    if x_hat.shape != x.shape {
        return Err(Error::Shape(format!("reconstruction {:?} vs input {:?}", x_hat.shape, x.shape)));
    }
    let n = x.data.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    // element mean per sample followed by batch mean == global mean here
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (a, b) in x_hat.data.iter().zip(&x.data) {
        let d = a - b;
        value += d * d;
        grad.push(2.0 * d / n as f64);
    }
    Ok(LossGrad {
        value: value / n as f64,
        grad: Tensor { data: grad, shape: x.shape.clone() },
    })
}

/// Softmax cross-entropy of `[B, K]` logits against class indices.
pub fn classification_loss(logits: &Tensor, y: &[usize]) -> Result<LossGrad> {
    if logits.shape.len() != 2 || logits.batch() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!("logits {:?} for {} labels", logits.shape, y.len())));
    }
    let k = logits.shape[1];
    if let Some(bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!("class {bad} out of range for K = {k}")));
    }
    let b = y.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.data.len());
    for (i, &target) in y.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        value += lse - row[target];
        for (j, s) in softmax(row).into_iter().enumerate() {
            grad.push((s - f64::from(u8::from(j == target))) / b);
        }
    }
    Ok(LossGrad {
        value: value / b,
        grad: Tensor { data: grad, shape: logits.shape.clone() },
    })
}

/// Binary cross-entropy of same-subject probabilities against `g`.
pub fn discrimination_loss(p: &Tensor, g: &[u8]) -> Result<LossGrad> {
    check_probs(p, g)?;
    let b = g.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(g.len());
    for (&raw, &label) in p.data.iter().zip(g) {
        let (pc, live) = clamp(raw);
        let gl = f64::from(label);
        value -= gl * pc.ln() + (1.0 - gl) * (1.0 - pc).ln();
        let d = if live { (-gl / pc + (1.0 - gl) / (1.0 - pc)) / b } else { 0.0 };
        grad.push(d);
    }
    Ok(LossGrad {
        value: value / b,
        grad: Tensor { data: grad, shape: p.shape.clone() },
    })
}

/// Non-saturating generator loss: mean of `-log p` over the `g = 0` pairs
/// only. Same-subject pairs contribute neither value nor gradient.
pub fn adversarial_loss(p: &Tensor, g: &[u8]) -> Result<LossGrad> {
    check_probs(p, g)?;
    let n0 = g.iter().filter(|&&v| v == 0).count();
    if n0 == 0 {
        return Err(Error::EmptySubset);
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; g.len()];
    for (i, (&raw, &label)) in p.data.iter().zip(g).enumerate() {
        if label != 0 {
            continue;
        }
        let (pc, live) = clamp(raw);
        value -= pc.ln();
        if live {
            grad[i] = -1.0 / (pc * n0 as f64);
        }
    }
    Ok(LossGrad {
        value: value / n0 as f64,
        grad: Tensor { data: grad, shape: p.shape.clone() },
    })
}

/// Cross-entropy between the per-subject prediction and the uniform
/// distribution; the feature extractor's objective against `D_i`. Equals
/// `ln(n_subjects)` when the prediction is exactly uniform.
pub fn subject_confusion_loss(logits: &Tensor) -> Result<LossGrad> {
    if logits.shape.len() != 2 || logits.batch() == 0 {
        return Err(Error::Shape(format!("bad logits shape {:?}", logits.shape)));
    }
    let (b, n) = (logits.batch(), logits.shape[1]);
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.data.len());
    for i in 0..b {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        value += lse - row.iter().sum::<f64>() / n as f64;
        for s in softmax(row) {
            grad.push((s - 1.0 / n as f64) / b as f64);
        }
    }
    Ok(LossGrad {
        value: value / b as f64,
        grad: Tensor { data: grad, shape: logits.shape.clone() },
    })
}

/// Feature-extractor objective of the joint supervised step: `L_C + L_R`.
pub fn feature_step2_loss(l_c: f64, l_r: f64) -> f64 {
    l_c + l_r
}

/// Feature-extractor objective of the adversarial sub-step:
/// `w_A L_A + w_R L_R + w_C L_C`.
pub fn feature_step31_loss(l_a: f64, l_r: f64, l_c: f64, w: &LossWeights) -> f64 {
    w.w_a * l_a + w.w_r * l_r + w.w_c * l_c
}
