//! Small strided convolutional backbone: `stages` blocks of 3×3 stride-2
//! convolution + ReLU, global average pooling, and a linear projection to
//! the feature dimension. Convolutions run as im2col + dgemm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr_lite::normal;
use serde::{Deserialize, Serialize};

use super::{Backbone, SpatialStage, Tensor3};
use crate::error::{Error, Result};

const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvNetConfig {
    /// `(channels, height, width)` of the input tensor.
    pub input: (usize, usize, usize),
    /// Output channels of each conv stage.
    pub channels: Vec<usize>,
    pub feature_dim: usize,
}

impl Default for ConvNetConfig {
    fn default() -> Self {
        ConvNetConfig {
            input: (3, 112, 112),
            channels: vec![8, 16, 32, 32],
            feature_dim: 128,
        }
    }
}

#[derive(Clone, Debug)]
struct StageShape {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    out_h: usize,
    out_w: usize,
    w_off: usize,
    b_off: usize,
}

impl StageShape {
    fn k(&self) -> usize {
        self.in_c * KERNEL * KERNEL
    }
    fn hw(&self) -> usize {
        self.out_h * self.out_w
    }
}

#[derive(Clone, Debug)]
pub struct ConvNet {
    config: ConvNetConfig,
    stages: Vec<StageShape>,
    fc_w: usize,
    fc_b: usize,
    params: Vec<f64>,
}

/// Cached intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct ConvTrace {
    cols: Vec<Vec<f64>>,
    /// Post-ReLU activations per stage, `out_c x hw`.
    acts: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    features: Vec<f64>,
}

fn out_len(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

impl ConvNet {
    pub fn new(config: ConvNetConfig, seed: u64) -> Result<Self> {
        let (c0, h0, w0) = config.input;
        if c0 == 0 || h0 == 0 || w0 == 0 || config.channels.is_empty() || config.feature_dim == 0 {
            return Err(Error::Domain(format!("invalid backbone config {config:?}")));
        }
        let mut stages = Vec::with_capacity(config.channels.len());
        let (mut c, mut h, mut w) = config.input;
        let mut off = 0;
        for &oc in &config.channels {
            if oc == 0 {
                return Err(Error::Domain("zero-width conv stage".into()));
            }
            let s = StageShape {
                in_c: c,
                in_h: h,
                in_w: w,
                out_c: oc,
                out_h: out_len(h),
                out_w: out_len(w),
                w_off: off,
                b_off: off + oc * c * KERNEL * KERNEL,
            };
            off = s.b_off + oc;
            c = oc;
            h = s.out_h;
            w = s.out_w;
            stages.push(s);
        }
        let fc_w = off;
        let fc_b = fc_w + config.feature_dim * c;
        let n = fc_b + config.feature_dim;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; n];
        for s in &stages {
            let std = (2.0 / s.k() as f64).sqrt();
            for v in &mut params[s.w_off..s.b_off] {
                *v = std * normal(&mut rng);
            }
        }
        // keeps the dot product of two independent feature vectors near unit scale
        let std = (1.0 / c as f64).sqrt() / (config.feature_dim as f64).powf(0.25);
        for v in &mut params[fc_w..fc_b] {
            *v = std * normal(&mut rng);
        }
        Ok(ConvNet {
            config,
            stages,
            fc_w,
            fc_b,
            params,
        })
    }

    pub fn config(&self) -> &ConvNetConfig {
        &self.config
    }

    /// Replace all parameters (e.g. from a checkpoint).
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "backbone expects {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// Zero the final projection so every feature vector is the bias (zero).
    pub fn zero_projection(&mut self) {
        for v in &mut self.params[self.fc_w..] {
            *v = 0.0;
        }
    }

    fn last_channels(&self) -> usize {
        self.stages.last().map(|s| s.out_c).unwrap_or(self.config.input.0)
    }
}

fn im2col(s: &StageShape, input: &[f64], col: &mut [f64]) {
    let hw = s.hw();
    for ic in 0..s.in_c {
        let plane = &input[ic * s.in_h * s.in_w..(ic + 1) * s.in_h * s.in_w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut col[((ic * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for oy in 0..s.out_h {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    let dst = &mut row[oy * s.out_w..(oy + 1) * s.out_w];
                    if iy < 0 || iy >= s.in_h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * s.in_w..(iy as usize + 1) * s.in_w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        *d = if ix < 0 || ix >= s.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(s: &StageShape, col: &[f64], d_input: &mut [f64]) {
    let hw = s.hw();
    d_input.fill(0.0);
    for ic in 0..s.in_c {
        let plane = &mut d_input[ic * s.in_h * s.in_w..(ic + 1) * s.in_h * s.in_w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &col[((ic * KERNEL + ky) * KERNEL + kx) * hw..][..hw];
                for oy in 0..s.out_h {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= s.in_h as isize {
                        continue;
                    }
                    let base = iy as usize * s.in_w;
                    for ox in 0..s.out_w {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix >= 0 && ix < s.in_w as isize {
                            plane[base + ix as usize] += row[oy * s.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c (m x n) = alpha * a (m x k) * b (k x n) + beta * c`, with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Backbone for ConvNet {
    type Trace = ConvTrace;

    fn input_shape(&self) -> (usize, usize, usize) {
        self.config.input
    }

    fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, input: &Tensor3) -> Result<ConvTrace> {
        if input.shape() != self.config.input {
            return Err(Error::Contract(format!(
                "backbone input {:?} does not match {:?}",
                input.shape(),
                self.config.input
            )));
        }
        let mut cols = Vec::with_capacity(self.stages.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let x: &[f64] = if i == 0 { &input.data } else { &acts[i - 1] };
            let (k, hw) = (s.k(), s.hw());
            let mut col = vec![0.0; k * hw];
            im2col(s, x, &mut col);
            let mut out = vec![0.0; s.out_c * hw];
            for (o, row) in out.chunks_mut(hw).enumerate() {
                row.fill(self.params[s.b_off + o]);
            }
            gemm(
                s.out_c,
                k,
                hw,
                &self.params[s.w_off..s.b_off],
                (k, 1),
                &col,
                (hw, 1),
                1.0,
                &mut out,
            );
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            cols.push(col);
            acts.push(out);
        }
        let last = self.stages.last().expect("at least one stage");
        let hw = last.hw() as f64;
        let pooled: Vec<f64> = acts
            .last()
            .unwrap()
            .chunks(last.hw())
            .map(|ch| ch.iter().sum::<f64>() / hw)
            .collect();
        let lc = self.last_channels();
        let features: Vec<f64> = (0..self.config.feature_dim)
            .map(|d| {
                let w = &self.params[self.fc_w + d * lc..self.fc_w + (d + 1) * lc];
                self.params[self.fc_b + d] + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(ConvTrace {
            cols,
            acts,
            pooled,
            features,
        })
    }

    fn features<'a>(&self, trace: &'a ConvTrace) -> &'a [f64] {
        &trace.features
    }

    fn backward(&self, trace: &ConvTrace, d_features: &[f64], grads: &mut [f64]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let lc = self.last_channels();
        let mut d_pooled = vec![0.0; lc];
        for (d, &g) in d_features.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads[self.fc_b + d] += g;
            let w = &self.params[self.fc_w + d * lc..self.fc_w + (d + 1) * lc];
            let gw = &mut grads[self.fc_w + d * lc..self.fc_w + (d + 1) * lc];
            for c in 0..lc {
                gw[c] += g * trace.pooled[c];
                d_pooled[c] += g * w[c];
            }
        }
        let last = self.stages.last().unwrap();
        let hw = last.hw();
        let mut d_act: Vec<f64> = Vec::with_capacity(lc * hw);
        for &g in &d_pooled {
            d_act.extend(std::iter::repeat_n(g / hw as f64, hw));
        }
        for i in (0..self.stages.len()).rev() {
            let s = &self.stages[i];
            let (k, hw) = (s.k(), s.hw());
            // through the ReLU
            for (g, &a) in d_act.iter_mut().zip(&trace.acts[i]) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            for o in 0..s.out_c {
                grads[s.b_off + o] += d_act[o * hw..(o + 1) * hw].iter().sum::<f64>();
            }
            gemm(
                s.out_c,
                hw,
                k,
                &d_act,
                (hw, 1),
                &trace.cols[i],
                (1, hw),
                1.0,
                &mut grads[s.w_off..s.b_off],
            );
            if i == 0 {
                break;
            }
            let mut d_col = vec![0.0; k * hw];
            gemm(
                k,
                s.out_c,
                hw,
                &self.params[s.w_off..s.b_off],
                (1, k),
                &d_act,
                (hw, 1),
                0.0,
                &mut d_col,
            );
            let mut d_in = vec![0.0; s.in_c * s.in_h * s.in_w];
            col2im(s, &d_col, &mut d_in);
            d_act = d_in;
        }
    }

    fn spatial_stage(&self, trace: &ConvTrace, d_features: &[f64]) -> Option<SpatialStage> {
        let last = self.stages.last()?;
        let lc = last.out_c;
        let hw = last.hw();
        let mut grads = vec![0.0; lc * hw];
        for c in 0..lc {
            let mut g = 0.0;
            for (d, &df) in d_features.iter().enumerate() {
                g += df * self.params[self.fc_w + d * lc + c];
            }
            grads[c * hw..(c + 1) * hw].fill(g / hw as f64);
        }
        Some(SpatialStage {
            activations: Tensor3::from_vec(lc, last.out_h, last.out_w, trace.acts.last()?.clone()),
            gradients: Tensor3::from_vec(lc, last.out_h, last.out_w, grads),
        })
    }
}

/// Standard-normal draws without pulling in a distributions crate.
mod rand_distr_lite {
    use rand::Rng;

    pub fn normal<R: Rng>(rng: &mut R) -> f64 {
        // Box-Muller, one value per call
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
