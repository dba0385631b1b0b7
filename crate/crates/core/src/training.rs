//! SGD with momentum and a per-step linear learning-rate decay.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataprep::TrainingLabels;
use crate::error::{Error, Result};
use crate::imageio::ImageBuffer;
use crate::model::{Checkpoint, DetectionModel, Example, LossWeights, Model, Variant};
use crate::nn::{image_to_tensor, ConvNetConfig, Tensor3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub nesterov: bool,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub alignment: char,
    pub variant: Variant,
    pub weights: LossWeights,
    pub backbone: ConvNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 28,
            momentum: 0.9,
            nesterov: false,
            lr_start: 0.075,
            lr_end: 1e-5,
            seed: 0,
            alignment: 'd',
            variant: Variant::Fused,
            weights: LossWeights::CANONICAL,
            backbone: ConvNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_end > 0.0 && self.lr_start > self.lr_end && self.lr_start.is_finite()) {
            return Err(Error::Domain(format!(
                "learning rates must satisfy lr_start > lr_end > 0 (got {} -> {})",
                self.lr_start, self.lr_end
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        self.weights.validate()?;
        if !self.weights.is_tied() {
            return Err(Error::Domain("alpha1 and alpha2 must be equal".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.epochs * self.steps_per_epoch(n)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Linearly interpolated learning rate at `step` of `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::Contract(format!("step {step} outside [0, {total_steps}]")));
    }
    if step == total_steps {
        return Ok(cfg.lr_end);
    }
    Ok(cfg.lr_start + (cfg.lr_end - cfg.lr_start) * step as f64 / total_steps as f64)
}

/// One momentum update in place: `v = momentum * v + g`, then
/// `p -= lr * v` (classical) or `p -= lr * (g + momentum * v)` (Nesterov).
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    nesterov: bool,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Contract(format!(
            "sgd shapes differ: params {}, grads {}, velocity {}",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= if nesterov { lr * (g + momentum * *v) } else { lr * *v };
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        // explicit header so an empty log still has one
        w.write_record(["step", "epoch", "lr", "L1", "L2", "L3", "total"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<TrainLogRow>, _>>()?;
        Ok(TrainLog { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::imageio::ensure_parent(path)?;
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Mean total loss over the first and last `k` steps.
    pub fn head_tail_means(&self, k: usize) -> Option<(f64, f64)> {
        if self.rows.is_empty() {
            return None;
        }
        let k = k.clamp(1, self.rows.len());
        let mean = |rs: &[TrainLogRow]| rs.iter().map(|r| r.total).sum::<f64>() / rs.len() as f64;
        Some((mean(&self.rows[..k]), mean(&self.rows[self.rows.len() - k..])))
    }
}

/// Source of training inputs: pre-built tensors or images converted lazily.
pub enum Inputs<'a> {
    Tensors(&'a [Tensor3]),
    Images(&'a [ImageBuffer]),
}

impl Inputs<'_> {
    fn len(&self) -> usize {
        match self {
            Inputs::Tensors(t) => t.len(),
            Inputs::Images(i) => i.len(),
        }
    }
}

/// Train a freshly initialized model of `cfg.variant` with `classes`
/// identity classes on `inputs` and `labels`.
pub fn train(inputs: Inputs, labels: &[TrainingLabels], classes: usize, cfg: &TrainConfig) -> Result<(Checkpoint, TrainLog)> {
    cfg.validate()?;
    let model = Model::new(cfg.variant, &cfg.backbone, classes.max(1), cfg.seed)?;
    train_model(model, inputs, labels, cfg)
}

/// Continue training `model` under `cfg`'s schedule.
pub fn train_model(mut model: Model, inputs: Inputs, labels: &[TrainingLabels], cfg: &TrainConfig) -> Result<(Checkpoint, TrainLog)> {
    cfg.validate()?;
    let n = inputs.len();
    if n == 0 {
        return Err(Error::Domain("cannot train on an empty set".into()));
    }
    if labels.len() != n {
        return Err(Error::Contract(format!("{n} inputs but {} labels", labels.len())));
    }
    let total_steps = cfg.total_steps(n);
    let mut velocity = vec![0.0; model.num_params()];
    let mut grads = vec![0.0; model.num_params()];
    let mut flat = model.flat_params();
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for ids in order.chunks(cfg.batch_size) {
            let converted: Vec<Tensor3>;
            let tensors: Vec<&Tensor3> = match &inputs {
                Inputs::Tensors(t) => ids.iter().map(|&i| &t[i]).collect(),
                Inputs::Images(imgs) => {
                    converted = ids.iter().map(|&i| image_to_tensor(&imgs[i])).collect();
                    converted.iter().collect()
                }
            };
            let batch: Vec<Example> = ids
                .iter()
                .zip(tensors)
                .map(|(&i, input)| Example {
                    input,
                    labels: labels[i],
                })
                .collect();
            grads.fill(0.0);
            let bundle = model.loss(&batch, &cfg.weights, Some(&mut grads))?;
            if !bundle.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss at step {step} (epoch {epoch}); batch sample ids {ids:?}; \
                     L1={} L2={} L3={}",
                    bundle.l1, bundle.l2, bundle.l3
                )));
            }
            let lr = lr_at(step, total_steps, cfg)?;
            sgd_step(&mut flat, &grads, &mut velocity, lr, cfg.momentum, cfg.nesterov)?;
            model.set_flat_params(&flat)?;
            log.rows.push(TrainLogRow {
                step,
                epoch,
                lr,
                l1: bundle.l1,
                l2: bundle.l2,
                l3: bundle.l3,
                total: bundle.total,
            });
            log::debug!("step {step} epoch {epoch} lr {lr:.5} total {:.5}", bundle.total);
            step += 1;
        }
        if let Some(last) = log.rows.last() {
            log::info!("epoch {epoch} done, last total {:.4}", last.total);
        }
    }
    Ok((Checkpoint::new(model, Some(cfg.alignment), cfg.weights), log))
}
