//! The four trainable blocks and the bundle that owns them.
//!
//! * `F`: convolutional encoder, `[w, c] -> [d_latent]`
//! * `R`: mirrored transposed-convolution decoder, `[d_latent] -> [w, c]`
//! * `C`: two-layer perceptron, `[d_latent] -> K` logits
//! * `D`: one of three discriminators (see [`DiscriminatorKind`])
//!
//! Freezing is enforced twice: the bundle refuses optimizer updates on a
//! frozen block, and bit-level snapshots let callers prove nothing moved.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Adam, Conv1d, ConvTranspose1d, Grads, Layer, Linear, Network, Tensor};
use crate::segmentation::WindowedSample;

pub const CLASSIFIER_HIDDEN: usize = 64;
pub const DISCRIMINATOR_HIDDEN: [usize; 2] = [128, 64];
const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_latent: usize,
    pub width_scale: f64,
    pub kernel: usize,
    /// Encoder channel widths before scaling; one entry per conv block.
    pub widths: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_latent: 128,
            width_scale: 1.0,
            kernel: 8,
            widths: vec![32, 64, 128],
        }
    }
}

impl ModelConfig {
    pub fn scaled_widths(&self) -> Vec<usize> {
        self.widths
            .iter()
            .map(|&w| ((w as f64 * self.width_scale).round() as usize).max(1))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_latent < 2 {
            return Err(Error::Config("d_latent must be at least 2".into()));
        }
        if !(self.width_scale > 0.0) || self.kernel == 0 || self.widths.is_empty() {
            return Err(Error::Config("width_scale, kernel and widths must be positive".into()));
        }
        Ok(())
    }
}

/// `[w, c] -> [d_latent]`: `B x {conv, ELU, avgpool}`, global mean, linear.
pub fn make_feature_extractor(c: usize, w: usize, cfg: &ModelConfig) -> Result<Network> {
    cfg.validate()?;
    let mut layers = Vec::new();
    let mut prev = c;
    for width in cfg.scaled_widths() {
        layers.push(Layer::Conv1d(Conv1d::new(prev, width, cfg.kernel)));
        layers.push(Layer::Elu);
        layers.push(Layer::AvgPool2);
        prev = width;
    }
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Linear(Linear::new(prev, cfg.d_latent)));
    Network::new(vec![w, c], layers)
}

/// Mirror of the encoder: linear to the deepest feature map, then per level a
/// stride-2 transposed conv, crop/pad to the encoder length at that level,
/// conv + ELU; a final conv maps back to `c` channels.
pub fn make_reconstructor(d_latent: usize, w: usize, c: usize, cfg: &ModelConfig) -> Result<Network> {
    cfg.validate()?;
    let widths = cfg.scaled_widths();
    let depth = widths.len();
    let mut lengths = vec![w];
    for _ in 0..depth {
        let last = *lengths.last().expect("non-empty");
        if last < 2 {
            return Err(Error::Shape(format!("window {w} too short for {depth} pooling levels")));
        }
        lengths.push(last / 2);
    }
    let deepest = widths[depth - 1];
    let mut layers = vec![
        Layer::Linear(Linear::new(d_latent, lengths[depth] * deepest)),
        Layer::Reshape(vec![lengths[depth], deepest]),
        Layer::Elu,
    ];
    let mut prev = deepest;
    for level in (1..=depth).rev() {
        let out = if level >= 2 { widths[level - 2] } else { widths[0] };
        layers.push(Layer::ConvTranspose1d(ConvTranspose1d::new(prev, out)));
        layers.push(Layer::CropPad(lengths[level - 1]));
        layers.push(Layer::Conv1d(Conv1d::new(out, out, cfg.kernel)));
        layers.push(Layer::Elu);
        prev = out;
    }
    layers.push(Layer::Conv1d(Conv1d::new(prev, c, cfg.kernel)));
    Network::new(vec![d_latent], layers)
}

/// `[d_latent] -> K` logits (softmax lives in the loss).
pub fn make_classifier(d_latent: usize, k: usize) -> Result<Network> {
    Network::new(
        vec![d_latent],
        vec![
            Layer::Linear(Linear::new(d_latent, CLASSIFIER_HIDDEN)),
            Layer::Elu,
            Layer::Linear(Linear::new(CLASSIFIER_HIDDEN, k)),
        ],
    )
}

fn mlp_head(nin: usize, nout: usize, sigmoid: bool) -> Result<Network> {
    let [h1, h2] = DISCRIMINATOR_HIDDEN;
    let mut layers = vec![
        Layer::Linear(Linear::new(nin, h1)),
        Layer::Elu,
        Layer::Linear(Linear::new(h1, h2)),
        Layer::Elu,
        Layer::Linear(Linear::new(h2, nout)),
    ];
    if sigmoid {
        layers.push(Layer::Sigmoid);
    }
    Network::new(vec![nin], layers)
}

/// Same-subject probability for a same-activity pair `F(x_a) ⊕ F(x_b)`.
pub fn make_discriminator_ours(d_latent: usize) -> Result<Network> {
    mlp_head(2 * d_latent, 1, true)
}

/// Per-subject logits over the training subjects.
pub fn make_discriminator_subject_id(d_latent: usize, n_train_subjects: usize) -> Result<Network> {
    if n_train_subjects < 2 {
        return Err(Error::InvalidArgument("subject discriminator needs >= 2 subjects".into()));
    }
    mlp_head(d_latent, n_train_subjects, false)
}

/// Same head as [`make_discriminator_ours`]; it differs only in the pairs it
/// is fed (drawn without the activity constraint).
pub fn make_discriminator_pair_random(d_latent: usize) -> Result<Network> {
    mlp_head(2 * d_latent, 1, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    /// Same-activity pairs labelled by subject equality.
    Ours,
    /// Per-subject classifier (`D_i`).
    SubjectId,
    /// Activity-agnostic random pairs (`D_b`).
    PairRandom,
}

impl DiscriminatorKind {
    pub const ALL: [DiscriminatorKind; 3] = [
        DiscriminatorKind::SubjectId,
        DiscriminatorKind::PairRandom,
        DiscriminatorKind::Ours,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            DiscriminatorKind::Ours => "ours",
            DiscriminatorKind::SubjectId => "D_i",
            DiscriminatorKind::PairRandom => "D_b",
        }
    }
}

impl std::str::FromStr for DiscriminatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(DiscriminatorKind::Ours),
            "subject_id" | "d_i" | "D_i" => Ok(DiscriminatorKind::SubjectId),
            "pair_random" | "d_b" | "D_b" => Ok(DiscriminatorKind::PairRandom),
            other => Err(Error::Config(format!("unknown discriminator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockName {
    F,
    R,
    C,
    D,
}

impl BlockName {
    pub const ALL: [BlockName; 4] = [BlockName::F, BlockName::R, BlockName::C, BlockName::D];

    pub fn as_str(&self) -> &'static str {
        match self {
            BlockName::F => "F",
            BlockName::R => "R",
            BlockName::C => "C",
            BlockName::D => "D",
        }
    }
}

/// Everything needed to rebuild a bundle's architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub window: usize,
    pub channels: usize,
    pub classes: usize,
    pub discriminator: DiscriminatorKind,
    /// Only meaningful for [`DiscriminatorKind::SubjectId`].
    pub n_train_subjects: usize,
    pub model: ModelConfig,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub spec: BundleSpec,
    pub f: Network,
    pub r: Network,
    pub c: Network,
    pub d: Network,
    frozen: BTreeMap<BlockName, bool>,
    snapshots: HashMap<BlockName, Vec<u64>>,
}

impl ModelBundle {
    /// Build and initialise all four blocks from `seed`.
    pub fn new(spec: BundleSpec, seed: u64) -> Result<Self> {
        let d_latent = spec.model.d_latent;
        let mut f = make_feature_extractor(spec.channels, spec.window, &spec.model)?;
        let mut r = make_reconstructor(d_latent, spec.window, spec.channels, &spec.model)?;
        let mut c = make_classifier(d_latent, spec.classes)?;
        let mut d = match spec.discriminator {
            DiscriminatorKind::Ours => make_discriminator_ours(d_latent)?,
            DiscriminatorKind::PairRandom => make_discriminator_pair_random(d_latent)?,
            DiscriminatorKind::SubjectId => make_discriminator_subject_id(d_latent, spec.n_train_subjects)?,
        };
        for (stream, net) in [&mut f, &mut r, &mut c, &mut d].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64 + 1);
            net.init(&mut rng);
        }
        Ok(Self {
            spec,
            f,
            r,
            c,
            d,
            frozen: BlockName::ALL.iter().map(|&b| (b, false)).collect(),
            snapshots: HashMap::new(),
        })
    }

    pub fn block(&self, name: BlockName) -> &Network {
        match name {
            BlockName::F => &self.f,
            BlockName::R => &self.r,
            BlockName::C => &self.c,
            BlockName::D => &self.d,
        }
    }

    fn block_mut(&mut self, name: BlockName) -> &mut Network {
        match name {
            BlockName::F => &mut self.f,
            BlockName::R => &mut self.r,
            BlockName::C => &mut self.c,
            BlockName::D => &mut self.d,
        }
    }

    pub fn set_frozen(&mut self, name: BlockName, frozen: bool) {
        self.frozen.insert(name, frozen);
    }

    /// Freeze exactly the listed blocks; unfreeze the rest.
    pub fn freeze_only(&mut self, names: &[BlockName]) {
        for b in BlockName::ALL {
            self.frozen.insert(b, names.contains(&b));
        }
    }

    pub fn is_frozen(&self, name: BlockName) -> bool {
        self.frozen.get(&name).copied().unwrap_or(false)
    }

    /// Apply one optimizer step to a block. Frozen blocks (and their optimizer
    /// state) are never touched.
    pub fn apply_update(&mut self, name: BlockName, opt: &mut Adam, grads: &Grads) -> Result<()> {
        if self.is_frozen(name) {
            return Err(Error::FreezeViolation(name.as_str().into()));
        }
        opt.step(self.block_mut(name).params_mut(), grads);
        Ok(())
    }

    fn fingerprint(net: &Network) -> Vec<u64> {
        net.params().into_iter().flatten().map(|v| v.to_bits()).collect()
    }

    pub fn snapshot(&mut self, name: BlockName) {
        let fp = Self::fingerprint(self.block(name));
        self.snapshots.insert(name, fp);
    }

    /// True iff the block's parameters are bit-identical to its last snapshot.
    pub fn snapshot_and_verify_frozen(&self, name: BlockName) -> bool {
        self.snapshots
            .get(&name)
            .is_some_and(|fp| *fp == Self::fingerprint(self.block(name)))
    }

    /// Hash of the F, R and C architectures (not their weights).
    pub fn encoder_arch_hash(&self) -> String {
        let mut h = Sha256::new();
        for net in [&self.f, &self.r, &self.c] {
            h.update(net.describe().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.f.forward(x)
    }

    /// Latent vectors for windows, evaluated in chunks.
    pub fn embed(&self, windows: &[&WindowedSample]) -> Result<Tensor> {
        let mut parts = Vec::new();
        for chunk in windows.chunks(256) {
            parts.push(self.f.forward(&windows_tensor(chunk)?)?);
        }
        Tensor::stack(&parts.iter().collect::<Vec<_>>())
    }

    /// Arg-max class per window (ties go to the lowest index).
    pub fn predict(&self, windows: &[&WindowedSample]) -> Result<Vec<usize>> {
        let mut preds = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(256) {
            let logits = self.c.forward(&self.f.forward(&windows_tensor(chunk)?)?)?;
            for b in 0..logits.batch() {
                preds.push(argmax(logits.row(b)));
            }
        }
        Ok(preds)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let manifest = serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "spec": self.spec,
            "architecture": {
                "F": self.f.describe(),
                "R": self.r.describe(),
                "C": self.c.describe(),
                "D": self.d.describe(),
            },
        });
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut bytes: Vec<Vec<u8>> = Vec::new();
        for b in BlockName::ALL {
            let net = self.block(b);
            for ((name, shape), p) in net.param_names().into_iter().zip(net.param_shapes()).zip(net.params()) {
                names.push(format!("{}.{name}", b.as_str()));
                shapes.push(shape);
                bytes.push(p.iter().flat_map(|v| v.to_le_bytes()).collect());
            }
        }
        let views = names
            .iter()
            .zip(&shapes)
            .zip(&bytes)
            .map(|((n, s), b)| {
                TensorView::new(Dtype::F64, s.clone(), b)
                    .map(|v| (n.clone(), v))
                    .map_err(|e| Error::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = Some(HashMap::from([("manifest".to_string(), manifest.to_string())]));
        safetensors::tensor::serialize_to_file(views, &meta, path).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)?;
        let (_, meta) = SafeTensors::read_metadata(&raw).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let manifest = meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get("manifest"))
            .ok_or_else(|| Error::Checkpoint("missing manifest".into()))?;
        let manifest: serde_json::Value = serde_json::from_str(manifest)?;
        if manifest["format"] != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {}", manifest["format"])));
        }
        let spec: BundleSpec = serde_json::from_value(manifest["spec"].clone())?;
        let mut bundle = Self::new(spec, 0)?;
        let tensors = SafeTensors::deserialize(&raw).map_err(|e| Error::Checkpoint(e.to_string()))?;
        for b in BlockName::ALL {
            let net = bundle.block_mut(b);
            let names = net.param_names();
            for (name, p) in names.into_iter().zip(net.params_mut()) {
                let key = format!("{}.{name}", b.as_str());
                let view = tensors.tensor(&key).map_err(|e| Error::Checkpoint(format!("{key}: {e}")))?;
                if view.dtype() != Dtype::F64 || view.data().len() != p.len() * 8 {
                    return Err(Error::Checkpoint(format!("{key}: wrong dtype or size")));
                }
                for (dst, chunk) in p.iter_mut().zip(view.data().chunks_exact(8)) {
                    *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                }
            }
        }
        Ok(bundle)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Stack windows into a `[B, w, c]` tensor.
pub fn windows_tensor(windows: &[&WindowedSample]) -> Result<Tensor> {
    let first = windows.first().ok_or_else(|| Error::Shape("no windows".into()))?;
    let (w, c) = first.x.dim();
    let mut data = Vec::with_capacity(windows.len() * w * c);
    for win in windows {
        if win.x.dim() != (w, c) {
            return Err(Error::Shape(format!("window {:?} vs {:?}", win.x.dim(), (w, c))));
        }
        data.extend(win.x.iter());
    }
    Tensor::new(vec![windows.len(), w, c], data)
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
