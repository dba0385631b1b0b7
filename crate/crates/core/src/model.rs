//! Detection models: the fused dual-branch classifier and the single-branch
//! binary classifier, their losses, analytic gradients and checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataprep::TrainingLabels;
use crate::error::{Error, Result};
use crate::nn::{Backbone, ConvNet, ConvNetConfig, SpatialStage, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fused,
    Binary,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Fused => "fused",
            Variant::Binary => "binary",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(Variant::Fused),
            "binary" => Ok(Variant::Binary),
            other => Err(Error::Domain(format!("unknown variant {other:?} (fused|binary)"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Weights of the two identity losses and the detection loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
}

impl LossWeights {
    pub const CANONICAL: LossWeights = LossWeights {
        alpha1: 0.2,
        alpha2: 0.2,
        beta: 1.0,
    };

    /// Tied identity weights `alpha` and detection weight `beta`.
    pub fn tied(alpha: f64, beta: f64) -> Result<Self> {
        let w = LossWeights {
            alpha1: alpha,
            alpha2: alpha,
            beta,
        };
        w.validate()?;
        Ok(w)
    }

    /// Non-negative, finite, and not all zero.
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha1, self.alpha2, self.beta];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || all.iter().all(|w| *w == 0.0) {
            return Err(Error::Domain(format!("invalid loss weights {self:?}")));
        }
        Ok(())
    }

    pub fn is_tied(&self) -> bool {
        self.alpha1 == self.alpha2
    }

    pub fn combine(&self, l1: f64, l2: f64, l3: f64) -> f64 {
        self.alpha1 * l1 + self.alpha2 * l2 + self.beta * l3
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::CANONICAL
    }
}

/// Batch-mean loss components, their weighted total, and per-sample scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub scores: Vec<f64>,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.l2.is_finite() && self.l3.is_finite() && self.total.is_finite()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of a softmax over `logits` against class `y`.
pub fn softmax_ce(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[y]
}

/// Loss and `d loss / d logits` (softmax minus one-hot).
pub fn softmax_ce_grad(logits: &[f64], y: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    let loss = m + s.ln() - logits[y];
    p[y] -= 1.0;
    (loss, p)
}

/// Binary cross-entropy of `sigmoid(x)` against target `t`, evaluated on the logit.
pub fn bce_with_logit(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Detection score `sigmoid(f1 . f2)` and its BCE term against `target`.
pub fn fused_detection_loss(f1: &[f64], f2: &[f64], target: f64) -> (f64, f64) {
    let x = dot(f1, f2);
    (sigmoid(x), bce_with_logit(x, target))
}

/// Linear classifier `z = W f + b` with `W` stored row-major `C x D`
/// followed by `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    classes: usize,
    dim: usize,
    params: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        ClassifierHead {
            classes,
            dim,
            params: vec![0.0; classes * dim + classes],
        }
    }

    pub fn from_params(classes: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != classes * dim + classes {
            return Err(Error::Contract(format!(
                "head ({classes} x {dim}) expects {} parameters, got {}",
                classes * dim + classes,
                params.len()
            )));
        }
        Ok(ClassifierHead { classes, dim, params })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, c: usize) -> &[f64] {
        &self.params[c * self.dim..(c + 1) * self.dim]
    }

    pub fn bias(&self, c: usize) -> f64 {
        self.params[self.classes * self.dim + c]
    }

    pub fn logits(&self, f: &[f64]) -> Vec<f64> {
        (0..self.classes).map(|c| dot(self.weight(c), f) + self.bias(c)).collect()
    }

    /// Accumulate head gradients and `d / d f` for logit gradient `dz`.
    fn backward(&self, f: &[f64], dz: &[f64], grads: &mut [f64], d_f: &mut [f64]) {
        let bias_off = self.classes * self.dim;
        for (c, &g) in dz.iter().enumerate() {
            grads[bias_off + c] += g;
            let w = self.weight(c);
            let gw = &mut grads[c * self.dim..(c + 1) * self.dim];
            for k in 0..self.dim {
                gw[k] += g * f[k];
                d_f[k] += g * w[k];
            }
        }
    }
}

/// One training example: an input tensor and its label triple.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub input: &'a Tensor3,
    pub labels: TrainingLabels,
}

/// Shared behavior of the two detection variants.
pub trait DetectionModel {
    fn variant(&self) -> Variant;
    fn num_params(&self) -> usize;
    /// Parameter buffers in a fixed order; gradients use the same layout.
    fn param_segments(&self) -> Vec<&[f64]>;
    fn param_segments_mut(&mut self) -> Vec<&mut [f64]>;

    /// Batch-mean losses; when `grads` is given, the gradient of `total`
    /// is accumulated into it.
    fn loss(&self, batch: &[Example], weights: &LossWeights, grads: Option<&mut [f64]>) -> Result<LossBundle>;

    /// Pre-sigmoid detection logit; high means bona fide.
    fn detection_logit(&self, input: &Tensor3) -> Result<f64>;

    fn detection_score(&self, input: &Tensor3) -> Result<f64> {
        Ok(sigmoid(self.detection_logit(input)?))
    }

    fn score_batch(&self, inputs: &[Tensor3]) -> Result<Vec<f64>> {
        inputs.iter().map(|t| self.detection_score(t)).collect()
    }

    /// Last-stage activations and gradients of `sign * logit`, one entry
    /// per branch.
    fn cam_stages(&self, input: &Tensor3, sign: f64) -> Result<Vec<SpatialStage>>;

    fn flat_params(&self) -> Vec<f64> {
        self.param_segments().concat()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for seg in self.param_segments_mut() {
            let n = seg.len();
            seg.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

fn check_batch(batch: &[Example], classes: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    for e in batch {
        if e.labels.first_class >= classes || e.labels.second_class >= classes {
            return Err(Error::Contract(format!(
                "class index out of range for {classes} classes: {:?}",
                e.labels
            )));
        }
    }
    Ok(())
}

/// Two parallel branches, each a backbone with an identity head; the
/// detection logit is the dot product of the two feature vectors.
#[derive(Clone, Debug)]
pub struct FusedModel<B: Backbone = ConvNet> {
    pub first: B,
    pub head1: ClassifierHead,
    pub second: B,
    pub head2: ClassifierHead,
}

impl<B: Backbone> FusedModel<B> {
    pub fn new(first: B, second: B, classes: usize) -> Result<Self> {
        if first.feature_dim() != second.feature_dim() || first.input_shape() != second.input_shape() {
            return Err(Error::Contract("fused branches disagree on shapes".into()));
        }
        if classes == 0 {
            return Err(Error::Domain("at least one identity class is required".into()));
        }
        let d = first.feature_dim();
        Ok(FusedModel {
            first,
            head1: ClassifierHead::zeros(classes, d),
            second,
            head2: ClassifierHead::zeros(classes, d),
        })
    }

    pub fn classes(&self) -> usize {
        self.head1.classes()
    }

    /// `(f1, f2)` for one input.
    pub fn features(&self, input: &Tensor3) -> Result<(Vec<f64>, Vec<f64>)> {
        let t1 = self.first.forward(input)?;
        let t2 = self.second.forward(input)?;
        Ok((self.first.features(&t1).to_vec(), self.second.features(&t2).to_vec()))
    }
}

impl FusedModel<ConvNet> {
    pub fn with_config(config: &ConvNetConfig, classes: usize, seed: u64) -> Result<Self> {
        let first = ConvNet::new(config.clone(), seed)?;
        let second = ConvNet::new(config.clone(), seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
        FusedModel::new(first, second, classes)
    }
}

impl<B: Backbone> DetectionModel for FusedModel<B> {
    fn variant(&self) -> Variant {
        Variant::Fused
    }

    fn num_params(&self) -> usize {
        self.first.num_params() + self.head1.params.len() + self.second.num_params() + self.head2.params.len()
    }

    fn param_segments(&self) -> Vec<&[f64]> {
        vec![self.first.params(), &self.head1.params, self.second.params(), &self.head2.params]
    }

    fn param_segments_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.first.params_mut(),
            &mut self.head1.params,
            self.second.params_mut(),
            &mut self.head2.params,
        ]
    }

    fn loss(&self, batch: &[Example], w: &LossWeights, mut grads: Option<&mut [f64]>) -> Result<LossBundle> {
        check_batch(batch, self.classes())?;
        if let Some(g) = grads.as_deref() {
            if g.len() != self.num_params() {
                return Err(Error::Contract("gradient buffer size mismatch".into()));
            }
        }
        let n = batch.len() as f64;
        let d = self.first.feature_dim();
        let (n1, h1) = (self.first.num_params(), self.head1.params.len());
        let n2 = self.second.num_params();
        let (mut l1, mut l2, mut l3) = (0.0, 0.0, 0.0);
        let mut scores = Vec::with_capacity(batch.len());
        for e in batch {
            let t1 = self.first.forward(e.input)?;
            let t2 = self.second.forward(e.input)?;
            let f1 = self.first.features(&t1);
            let f2 = self.second.features(&t2);
            let z1 = self.head1.logits(f1);
            let z2 = self.head2.logits(f2);
            let (c1, dz1) = softmax_ce_grad(&z1, e.labels.first_class);
            let (c2, dz2) = softmax_ce_grad(&z2, e.labels.second_class);
            let x = dot(f1, f2);
            let s = sigmoid(x);
            l1 += c1;
            l2 += c2;
            l3 += bce_with_logit(x, e.labels.target);
            scores.push(s);

            if let Some(g) = grads.as_deref_mut() {
                let (g_first, rest) = g.split_at_mut(n1);
                let (g_head1, rest) = rest.split_at_mut(h1);
                let (g_second, g_head2) = rest.split_at_mut(n2);
                let dx = w.beta * (s - e.labels.target) / n;
                let mut d_f1: Vec<f64> = f2.iter().map(|v| dx * v).collect();
                let mut d_f2: Vec<f64> = f1.iter().map(|v| dx * v).collect();
                if w.alpha1 != 0.0 {
                    let dz: Vec<f64> = dz1.iter().map(|v| v * w.alpha1 / n).collect();
                    self.head1.backward(f1, &dz, g_head1, &mut d_f1);
                }
                if w.alpha2 != 0.0 {
                    let dz: Vec<f64> = dz2.iter().map(|v| v * w.alpha2 / n).collect();
                    self.head2.backward(f2, &dz, g_head2, &mut d_f2);
                }
                debug_assert_eq!(d_f1.len(), d);
                self.first.backward(&t1, &d_f1, g_first);
                self.second.backward(&t2, &d_f2, g_second);
            }
        }
        let (l1, l2, l3) = (l1 / n, l2 / n, l3 / n);
        Ok(LossBundle {
            l1,
            l2,
            l3,
            total: w.combine(l1, l2, l3),
            scores,
        })
    }

    fn detection_logit(&self, input: &Tensor3) -> Result<f64> {
        let (f1, f2) = self.features(input)?;
        Ok(dot(&f1, &f2))
    }

    fn cam_stages(&self, input: &Tensor3, sign: f64) -> Result<Vec<SpatialStage>> {
        let t1 = self.first.forward(input)?;
        let t2 = self.second.forward(input)?;
        let f1 = self.first.features(&t1);
        let f2 = self.second.features(&t2);
        let d1: Vec<f64> = f2.iter().map(|v| sign * v).collect();
        let d2: Vec<f64> = f1.iter().map(|v| sign * v).collect();
        let stages = [self.first.spatial_stage(&t1, &d1), self.second.spatial_stage(&t2, &d2)];
        stages
            .into_iter()
            .map(|s| s.ok_or_else(|| Error::Capability("backbone has no spatial stage".into())))
            .collect()
    }
}

/// One backbone with a scalar logit head.
#[derive(Clone, Debug)]
pub struct BinaryModel<B: Backbone = ConvNet> {
    pub net: B,
    /// `D` weights followed by the bias.
    pub head: Vec<f64>,
}

impl<B: Backbone> BinaryModel<B> {
    pub fn new(net: B) -> Self {
        let d = net.feature_dim();
        BinaryModel {
            net,
            head: vec![0.0; d + 1],
        }
    }

    fn logit_of(&self, f: &[f64]) -> f64 {
        let d = f.len();
        dot(&self.head[..d], f) + self.head[d]
    }
}

impl BinaryModel<ConvNet> {
    /// Random backbone and a small random head, so the backbone receives
    /// gradient from the first step.
    pub fn with_config(config: &ConvNetConfig, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut m = BinaryModel::new(ConvNet::new(config.clone(), seed)?);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5851_F42D_4C95_7F2D);
        let d = config.feature_dim;
        let bound = (3.0 / d as f64).sqrt();
        for w in &mut m.head[..d] {
            *w = rng.gen_range(-bound..bound);
        }
        Ok(m)
    }
}

impl<B: Backbone> DetectionModel for BinaryModel<B> {
    fn variant(&self) -> Variant {
        Variant::Binary
    }

    fn num_params(&self) -> usize {
        self.net.num_params() + self.head.len()
    }

    fn param_segments(&self) -> Vec<&[f64]> {
        vec![self.net.params(), &self.head]
    }

    fn param_segments_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.net.params_mut(), &mut self.head]
    }

    /// `l1 = l2 = 0`; `total = l3`, the mean BCE, whatever the weights.
    fn loss(&self, batch: &[Example], _w: &LossWeights, mut grads: Option<&mut [f64]>) -> Result<LossBundle> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if let Some(g) = grads.as_deref() {
            if g.len() != self.num_params() {
                return Err(Error::Contract("gradient buffer size mismatch".into()));
            }
        }
        let n = batch.len() as f64;
        let nb = self.net.num_params();
        let d = self.net.feature_dim();
        let mut l3 = 0.0;
        let mut scores = Vec::with_capacity(batch.len());
        for e in batch {
            let t = self.net.forward(e.input)?;
            let f = self.net.features(&t);
            let x = self.logit_of(f);
            let s = sigmoid(x);
            l3 += bce_with_logit(x, e.labels.target);
            scores.push(s);
            if let Some(g) = grads.as_deref_mut() {
                let (g_net, g_head) = g.split_at_mut(nb);
                let dx = (s - e.labels.target) / n;
                for k in 0..d {
                    g_head[k] += dx * f[k];
                }
                g_head[d] += dx;
                let d_f: Vec<f64> = self.head[..d].iter().map(|w| dx * w).collect();
                self.net.backward(&t, &d_f, g_net);
            }
        }
        let l3 = l3 / n;
        Ok(LossBundle {
            l1: 0.0,
            l2: 0.0,
            l3,
            total: l3,
            scores,
        })
    }

    fn detection_logit(&self, input: &Tensor3) -> Result<f64> {
        let t = self.net.forward(input)?;
        Ok(self.logit_of(self.net.features(&t)))
    }

    fn cam_stages(&self, input: &Tensor3, sign: f64) -> Result<Vec<SpatialStage>> {
        let t = self.net.forward(input)?;
        let d = self.net.feature_dim();
        let d_f: Vec<f64> = self.head[..d].iter().map(|w| sign * w).collect();
        self.net
            .spatial_stage(&t, &d_f)
            .map(|s| vec![s])
            .ok_or_else(|| Error::Capability("backbone has no spatial stage".into()))
    }
}

/// Either variant over the default backbone; the unit of checkpointing.
#[derive(Clone, Debug)]
pub enum Model {
    Fused(FusedModel<ConvNet>),
    Binary(BinaryModel<ConvNet>),
}

impl Model {
    pub fn new(variant: Variant, config: &ConvNetConfig, classes: usize, seed: u64) -> Result<Self> {
        Ok(match variant {
            Variant::Fused => Model::Fused(FusedModel::with_config(config, classes, seed)?),
            Variant::Binary => Model::Binary(BinaryModel::with_config(config, seed)?),
        })
    }

    pub fn backbone_config(&self) -> &ConvNetConfig {
        match self {
            Model::Fused(m) => m.first.config(),
            Model::Binary(m) => m.net.config(),
        }
    }

    /// Number of identity classes (zero for the binary variant).
    pub fn classes(&self) -> usize {
        match self {
            Model::Fused(m) => m.classes(),
            Model::Binary(_) => 0,
        }
    }

    fn inner(&self) -> &dyn DetectionModel {
        match self {
            Model::Fused(m) => m,
            Model::Binary(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn DetectionModel {
        match self {
            Model::Fused(m) => m,
            Model::Binary(m) => m,
        }
    }

    fn named_arrays(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            Model::Fused(m) => vec![
                ("first.backbone", m.first.params()),
                ("first.head", m.head1.params()),
                ("second.backbone", m.second.params()),
                ("second.head", m.head2.params()),
            ],
            Model::Binary(m) => vec![("backbone", m.net.params()), ("head", &m.head)],
        }
    }
}

impl DetectionModel for Model {
    fn variant(&self) -> Variant {
        self.inner().variant()
    }
    fn num_params(&self) -> usize {
        self.inner().num_params()
    }
    fn param_segments(&self) -> Vec<&[f64]> {
        self.inner().param_segments()
    }
    fn param_segments_mut(&mut self) -> Vec<&mut [f64]> {
        self.inner_mut().param_segments_mut()
    }
    fn loss(&self, batch: &[Example], weights: &LossWeights, grads: Option<&mut [f64]>) -> Result<LossBundle> {
        self.inner().loss(batch, weights, grads)
    }
    fn detection_logit(&self, input: &Tensor3) -> Result<f64> {
        self.inner().detection_logit(input)
    }
    fn cam_stages(&self, input: &Tensor3, sign: f64) -> Result<Vec<SpatialStage>> {
        self.inner().cam_stages(input, sign)
    }
}

const MAGIC: &[u8; 8] = b"SMADCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub variant: Variant,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub alignment: Option<char>,
    pub weights: LossWeights,
    pub backbone: ConvNetConfig,
}

/// A model plus the metadata needed to rebuild and interpret it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(model: Model, alignment: Option<char>, weights: LossWeights) -> Self {
        let header = CheckpointHeader {
            variant: model.variant(),
            feature_dim: model.backbone_config().feature_dim,
            num_classes: model.classes(),
            alignment,
            weights,
            backbone: model.backbone_config().clone(),
        };
        Checkpoint { header, model }
    }

    /// Layout: magic, `u32` version, `u32`-prefixed JSON header, `u32`
    /// array count, then per array a `u32`-prefixed name, a `u64` length and
    /// little-endian `f64` values.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let arrays = self.model.named_arrays();
        let mut out = Vec::with_capacity(64 + header.len() + 8 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, values) in arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let bad = |msg: &str| Error::Integrity(format!("checkpoint: {msg}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = read_u32(&mut r)? as usize;
        let header_bytes = take(&mut r, hlen)?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes)?;
        let count = read_u32(&mut r)? as usize;
        let mut arrays: Vec<(String, Vec<f64>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = read_u32(&mut r)? as usize;
            let name = std::str::from_utf8(take(&mut r, nlen)?)
                .map_err(|_| bad("array name is not utf-8"))?
                .to_string();
            let len = read_u64(&mut r)? as usize;
            let raw = take(&mut r, len.checked_mul(8).ok_or_else(|| bad("array too large"))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push((name, values));
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }

        let mut model = Model::new(header.variant, &header.backbone, header.num_classes.max(1), 0)?;
        let expected: Vec<(&str, usize)> = model.named_arrays().iter().map(|(n, v)| (*n, v.len())).collect();
        if expected.len() != arrays.len()
            || expected
                .iter()
                .zip(&arrays)
                .any(|((en, el), (n, v))| en != n || *el != v.len())
        {
            return Err(bad("array layout does not match header"));
        }
        if header.variant == Variant::Fused && header.num_classes != model.classes() {
            return Err(bad("class count mismatch"));
        }
        let flat: Vec<f64> = arrays.into_iter().flat_map(|(_, v)| v).collect();
        model.set_flat_params(&flat)?;
        Ok(Checkpoint { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::imageio::ensure_parent(path)?;
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Integrity(msg) => Error::format(path, msg),
            other => other,
        })
    }
}

fn take<'a>(r: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if r.len() < n {
        return Err(Error::Integrity("checkpoint: truncated".into()));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r, 4)?.try_into().unwrap()))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(r, 8)?.try_into().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ConvNetConfig {
        ConvNetConfig {
            input: (3, 6, 6),
            channels: vec![3],
            feature_dim: 4,
        }
    }

    #[test]
    fn softmax_examples() {
        assert!((softmax_ce(&[0.3; 4], 2) - 4f64.ln()).abs() < 1e-12);
        let l = softmax_ce(&[1000.0, 0.0, 0.0], 0);
        assert!(l.is_finite() && l < 1e-300 + 1e-12);
    }

    #[test]
    fn softmax_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let y = rng.gen_range(0..5);
            let direct = -(z[y].exp() / z.iter().map(|v| v.exp()).sum::<f64>()).ln();
            assert!((softmax_ce(&z, y) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn detection_loss_examples() {
        let (s, l) = fused_detection_loss(&[1.0, 0.0], &[0.0, 1.0], 1.0);
        assert_eq!(s, 0.5);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let (_, l0) = fused_detection_loss(&[1.0, 0.0], &[0.0, 1.0], 0.0);
        assert!((l0 - 2f64.ln()).abs() < 1e-15);
        let (_, big) = fused_detection_loss(&[30.0], &[30.0], 1.0);
        assert!(big < 1e-300);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
            let (_, l) = fused_detection_loss(&a, &b, 0.0);
            assert!((l - x.exp().ln_1p()).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_saturation() {
        assert!((bce_with_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_with_logit(20.0, 1.0) < 1e-8);
        assert!(bce_with_logit(-20.0, 0.0) < 1e-8);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 2..6), c in -50.0f64..50.0, y in 0usize..2) {
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            prop_assert!((softmax_ce(&z, y) - softmax_ce(&shifted, y)).abs() < 1e-12);
        }

        #[test]
        fn detection_loss_symmetric(a in prop::collection::vec(-3.0f64..3.0, 8), b in prop::collection::vec(-3.0f64..3.0, 8), t in 0u8..2) {
            let t = t as f64;
            prop_assert_eq!(fused_detection_loss(&a, &b, t), fused_detection_loss(&b, &a, t));
        }
    }

    fn inputs(n: usize, seed: u64) -> Vec<Tensor3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Tensor3::from_vec(3, 6, 6, (0..108).map(|_| rng.gen_range(-1.5..1.5)).collect()))
            .collect()
    }

    #[test]
    fn zero_initialized_scores_are_half() {
        let mut m = FusedModel::with_config(&tiny(), 3, 1).unwrap();
        m.first.zero_projection();
        let x = &inputs(1, 0)[0];
        assert_eq!(m.detection_score(x).unwrap(), 0.5);
        let b = BinaryModel::new(ConvNet::new(tiny(), 1).unwrap());
        assert_eq!(b.detection_score(x).unwrap(), 0.5);
    }

    #[test]
    fn batch_scoring_matches_single() {
        let m = FusedModel::with_config(&tiny(), 3, 4).unwrap();
        let xs = inputs(5, 1);
        let batch = m.score_batch(&xs).unwrap();
        for (x, s) in xs.iter().zip(batch) {
            assert_eq!(m.detection_score(x).unwrap(), s);
        }
    }

    #[test]
    fn permutation_invariant_batch_mean() {
        let m = FusedModel::with_config(&tiny(), 3, 2).unwrap();
        let xs = inputs(4, 2);
        let labels = [(0, 0, 1.0), (1, 2, 0.0), (2, 2, 1.0), (0, 1, 0.0)];
        let ex: Vec<Example> = xs
            .iter()
            .zip(labels)
            .map(|(x, (a, b, t))| Example {
                input: x,
                labels: TrainingLabels {
                    first_class: a,
                    second_class: b,
                    target: t,
                },
            })
            .collect();
        let mut rev = ex.clone();
        rev.reverse();
        let a = m.loss(&ex, &LossWeights::CANONICAL, None).unwrap();
        let b = m.loss(&rev, &LossWeights::CANONICAL, None).unwrap();
        assert!((a.l1 - b.l1).abs() < 1e-12 && (a.l2 - b.l2).abs() < 1e-12 && (a.l3 - b.l3).abs() < 1e-12);
        assert!((a.total - (0.2 * a.l1 + 0.2 * a.l2 + a.l3)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_class_is_contract_error() {
        let m = FusedModel::with_config(&tiny(), 2, 0).unwrap();
        let x = &inputs(1, 0)[0];
        let e = Example {
            input: x,
            labels: TrainingLabels {
                first_class: 2,
                second_class: 0,
                target: 0.0,
            },
        };
        assert!(matches!(m.loss(&[e], &LossWeights::CANONICAL, None), Err(Error::Contract(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_byte_exact() {
        for variant in [Variant::Fused, Variant::Binary] {
            let mut model = Model::new(variant, &tiny(), 3, 7).unwrap();
            let mut flat = model.flat_params();
            for (i, v) in flat.iter_mut().enumerate() {
                *v += (i as f64 * 0.1).sin();
            }
            model.set_flat_params(&flat).unwrap();
            let ck = Checkpoint::new(model, Some('d'), LossWeights::CANONICAL);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back.header, ck.header);
            assert_eq!(back.model.flat_params(), flat);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    fn central_difference_agrees(model: &mut dyn DetectionModel, batch: &[Example], w: &LossWeights) {
        let mut grads = vec![0.0; model.num_params()];
        model.loss(batch, w, Some(&mut grads)).unwrap();
        let mut flat = model.flat_params();
        let h = 1e-6;
        for i in 0..flat.len() {
            let orig = flat[i];
            flat[i] = orig + h;
            model.set_flat_params(&flat).unwrap();
            let up = model.loss(batch, w, None).unwrap().total;
            flat[i] = orig - h;
            model.set_flat_params(&flat).unwrap();
            let down = model.loss(batch, w, None).unwrap().total;
            flat[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grads[i].abs()).max(1e-5);
            assert!((fd - grads[i]).abs() / denom < 1e-4, "param {i}: {fd} vs {}", grads[i]);
        }
        model.set_flat_params(&flat).unwrap();
    }

    #[test]
    fn gradients_match_finite_differences() {
        let xs = inputs(3, 3);
        let labels = [(0, 0, 1.0), (1, 2, 0.0), (2, 1, 0.0)];
        let ex: Vec<Example> = xs
            .iter()
            .zip(labels)
            .map(|(x, (a, b, t))| Example {
                input: x,
                labels: TrainingLabels {
                    first_class: a,
                    second_class: b,
                    target: t,
                },
            })
            .collect();
        let mut fused = FusedModel::with_config(&tiny(), 3, 5).unwrap();
        let mut flat = fused.flat_params();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in flat.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        fused.set_flat_params(&flat).unwrap();
        for w in [
            LossWeights::CANONICAL,
            LossWeights { alpha1: 1.0, alpha2: 0.0, beta: 0.0 },
            LossWeights { alpha1: 0.0, alpha2: 1.0, beta: 0.0 },
            LossWeights { alpha1: 0.0, alpha2: 0.0, beta: 1.0 },
        ] {
            central_difference_agrees(&mut fused, &ex, &w);
        }
        let mut binary = BinaryModel::with_config(&tiny(), 6).unwrap();
        for v in binary.head.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        central_difference_agrees(&mut binary, &ex, &LossWeights::CANONICAL);
    }

    #[test]
    fn corrupted_checkpoint_rejected() {
        let ck = Checkpoint::new(Model::new(Variant::Binary, &tiny(), 0, 0).unwrap(), None, LossWeights::CANONICAL);
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Integrity(_))));
    }
}
