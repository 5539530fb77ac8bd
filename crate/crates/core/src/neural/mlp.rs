use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, ClassWeights};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};
use crate::rng::{rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Dropout active, batch statistics for normalization.
    Train,
    /// Deterministic: no dropout, running statistics.
    Infer,
}

/// Offsets of one hidden layer's parameters in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Slots {
    fan_in: usize,
    width: usize,
    weight: usize,
    bias: Option<usize>,
    gamma: Option<usize>,
    beta: Option<usize>,
}

/// Multi-layer perceptron with a single sigmoid output.
///
/// All trainable parameters live in one flat vector (hidden layers in order,
/// each as weight matrix `fan_in x width` row-major, then bias or
/// scale/shift, then the output layer), which is what the optimizer and the
/// model file see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: ArchitectureSpec,
    input_dim: usize,
    slots: Vec<Slots>,
    out_weight: usize,
    out_bias: usize,
    params: Vec<f64>,
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
    bn_momentum: f64,
    bn_eps: f64,
}

/// Per-layer batch statistics from a training-mode pass.
#[derive(Debug, Clone, Default)]
pub struct BatchStats {
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub batch_size: usize,
}

struct LayerCache {
    input: Vec<f64>,
    pre_norm: Vec<f64>,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
    pre_act: Vec<f64>,
    mask: Option<Vec<f64>>,
    output: Vec<f64>,
}

/// `out (rows x cols) += a (rows x inner) * w (inner x cols)`; zero inputs
/// are skipped, which pays off on one-hot features.
fn gemm_acc(a: &[f64], rows: usize, inner: usize, w: &[f64], cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        let arow = &a[i * inner..(i + 1) * inner];
        let orow = &mut out[i * cols..(i + 1) * cols];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let wrow = &w[k * cols..(k + 1) * cols];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += aik * wv;
            }
        }
    }
}

impl Mlp {
    /// Initializes weights from a fan-in-scaled normal; batch-norm scale 1,
    /// shift 0, running mean 0 and variance 1.
    pub fn new(spec: ArchitectureSpec, input_dim: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be >= 1".into()));
        }
        let mut rng = rng_from(seed, &[0x1417]);
        let mut params = Vec::with_capacity(spec.parameter_count(input_dim));
        let mut slots = Vec::with_capacity(spec.depth());
        let mut fan_in = input_dim;
        for &width in &spec.hidden_layer_widths {
            let normal = Normal::new(0.0, spec.activation.init_std(fan_in)).unwrap();
            let weight = params.len();
            params.extend((0..fan_in * width).map(|_| normal.sample(&mut rng)));
            let (bias, gamma, beta) = if spec.batch_norm {
                let g = params.len();
                params.extend(std::iter::repeat_n(1.0, width));
                let b = params.len();
                params.extend(std::iter::repeat_n(0.0, width));
                (None, Some(g), Some(b))
            } else {
                let b = params.len();
                params.extend(std::iter::repeat_n(0.0, width));
                (Some(b), None, None)
            };
            slots.push(Slots { fan_in, width, weight, bias, gamma, beta });
            fan_in = width;
        }
        let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).unwrap();
        let out_weight = params.len();
        params.extend((0..fan_in).map(|_| normal.sample(&mut rng)));
        let out_bias = params.len();
        params.push(0.0);
        let running_mean = spec.hidden_layer_widths.iter().map(|&w| vec![0.0; w]).collect();
        let running_var = spec.hidden_layer_widths.iter().map(|&w| vec![1.0; w]).collect();
        Ok(Self {
            spec,
            input_dim,
            slots,
            out_weight,
            out_bias,
            params,
            running_mean,
            running_var,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running_stats(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.running_mean, &self.running_var)
    }

    /// `(rows, cols)` of every weight matrix, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<_> = self.slots.iter().map(|s| (s.fan_in, s.width)).collect();
        v.push((self.slots.last().map_or(self.input_dim, |s| s.width), 1));
        v
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                x.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    fn pass(&self, x: &Matrix, mode: Mode, mut rng: Option<&mut Rng>) -> (Vec<f64>, Vec<LayerCache>, BatchStats) {
        let rows = x.rows();
        let act = self.spec.activation;
        let p = &self.params;
        let keep = 1.0 - self.spec.dropout_rate;
        let mut caches = Vec::with_capacity(self.slots.len());
        let mut stats = BatchStats { batch_size: rows, ..Default::default() };
        let mut input = x.as_slice().to_vec();

        for (li, s) in self.slots.iter().enumerate() {
            let w = s.width;
            let mut z = vec![0.0; rows * w];
            if let Some(b) = s.bias {
                for row in z.chunks_exact_mut(w) {
                    row.copy_from_slice(&p[b..b + w]);
                }
            }
            gemm_acc(&input, rows, s.fan_in, &p[s.weight..s.weight + s.fan_in * w], w, &mut z);

            let (normalized, inv_std, pre_act) = if let (Some(g), Some(bt)) = (s.gamma, s.beta) {
                let (mean, var) = match mode {
                    Mode::Train => {
                        let mut mean = vec![0.0; w];
                        let mut var = vec![0.0; w];
                        for row in z.chunks_exact(w) {
                            for (m, v) in mean.iter_mut().zip(row) {
                                *m += v;
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= rows as f64);
                        for row in z.chunks_exact(w) {
                            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                                *acc += (v - m) * (v - m);
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= rows as f64);
                        (mean, var)
                    }
                    Mode::Infer => (self.running_mean[li].clone(), self.running_var[li].clone()),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.bn_eps).sqrt()).collect();
                let mut xhat = z.clone();
                let mut y = vec![0.0; rows * w];
                for (xr, yr) in xhat.chunks_exact_mut(w).zip(y.chunks_exact_mut(w)) {
                    for j in 0..w {
                        xr[j] = (xr[j] - mean[j]) * inv_std[j];
                        yr[j] = p[g + j] * xr[j] + p[bt + j];
                    }
                }
                stats.mean.push(mean);
                stats.var.push(var);
                (xhat, inv_std, y)
            } else {
                (Vec::new(), Vec::new(), z.clone())
            };

            let mut out: Vec<f64> = pre_act.iter().map(|&v| act.apply(v)).collect();
            let mask = match (mode, rng.as_deref_mut()) {
                (Mode::Train, Some(r)) if self.spec.dropout_rate > 0.0 => {
                    let m: Vec<f64> = (0..out.len())
                        .map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    out.iter_mut().zip(&m).for_each(|(o, k)| *o *= k);
                    Some(m)
                }
                _ => None,
            };
            caches.push(LayerCache {
                input: std::mem::take(&mut input),
                pre_norm: z,
                normalized,
                inv_std,
                pre_act,
                mask,
                output: out.clone(),
            });
            input = out;
        }

        let fan_in = self.slots.last().map_or(self.input_dim, |s| s.width);
        let mut logits = vec![p[self.out_bias]; rows];
        gemm_acc(&input, rows, fan_in, &p[self.out_weight..self.out_weight + fan_in], 1, &mut logits);
        (logits, caches, stats)
    }

    /// Forward pass returning probabilities. Training mode draws dropout
    /// masks from `rng` and folds the batch statistics into the running ones.
    pub fn forward(&mut self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (logits, _, stats) = self.pass(x, mode, Some(rng));
        if mode == Mode::Train {
            self.update_running_stats(&stats);
        }
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    pub fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.pass(x, Mode::Infer, None).0)
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_logits(x)?.into_iter().map(sigmoid).collect())
    }

    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        let m = self.bn_momentum;
        let n = stats.batch_size as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (li, (mean, var)) in stats.mean.iter().zip(&stats.var).enumerate() {
            for j in 0..mean.len() {
                self.running_mean[li][j] = (1.0 - m) * self.running_mean[li][j] + m * mean[j];
                self.running_var[li][j] = (1.0 - m) * self.running_var[li][j] + m * var[j] * unbias;
            }
        }
    }

    /// Training-mode loss (mean weighted cross-entropy) and its gradient with
    /// respect to every parameter in the flat layout.
    pub fn loss_and_gradient(
        &self,
        x: &Matrix,
        labels: &[u8],
        weights: ClassWeights,
        rng: &mut Rng,
    ) -> Result<(f64, Vec<f64>, BatchStats)> {
        self.check_input(x)?;
        if labels.len() != x.rows() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), labels.len())));
        }
        let rows = x.rows();
        let (logits, caches, stats) = self.pass(x, Mode::Train, Some(rng));
        let (loss, mut dlogit) = super::weighted_bce_logits(&logits, labels, weights);
        dlogit.iter_mut().for_each(|g| *g /= rows as f64);

        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let fan_in = self.slots.last().map_or(self.input_dim, |s| s.width);
        let last_out: &[f64] = caches.last().map_or(x.as_slice(), |c| &c.output);
        grad[self.out_bias] = dlogit.iter().sum();
        let mut upstream = vec![0.0; rows * fan_in];
        for i in 0..rows {
            let d = dlogit[i];
            for k in 0..fan_in {
                grad[self.out_weight + k] += last_out[i * fan_in + k] * d;
                upstream[i * fan_in + k] = d * p[self.out_weight + k];
            }
        }

        let act = self.spec.activation;
        for (li, (s, c)) in self.slots.iter().zip(&caches).enumerate().rev() {
            let w = s.width;
            let mut dy = upstream;
            if let Some(m) = &c.mask {
                dy.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
            }
            dy.iter_mut().zip(&c.pre_act).for_each(|(d, &v)| *d *= act.derivative(v));

            let dz = if let (Some(g), Some(bt)) = (s.gamma, s.beta) {
                let mut sum_dy = vec![0.0; w];
                let mut sum_dy_xhat = vec![0.0; w];
                for (dr, xr) in dy.chunks_exact(w).zip(c.normalized.chunks_exact(w)) {
                    for j in 0..w {
                        sum_dy[j] += dr[j];
                        sum_dy_xhat[j] += dr[j] * xr[j];
                    }
                }
                grad[g..g + w].copy_from_slice(&sum_dy_xhat);
                grad[bt..bt + w].copy_from_slice(&sum_dy);
                let n = rows as f64;
                let mut dz = vec![0.0; rows * w];
                for ((zr, dr), xr) in dz.chunks_exact_mut(w).zip(dy.chunks_exact(w)).zip(c.normalized.chunks_exact(w)) {
                    for j in 0..w {
                        zr[j] = p[g + j] * c.inv_std[j] / n * (n * dr[j] - sum_dy[j] - xr[j] * sum_dy_xhat[j]);
                    }
                }
                dz
            } else {
                dy
            };
            debug_assert_eq!(c.pre_norm.len(), dz.len());

            if let Some(b) = s.bias {
                for row in dz.chunks_exact(w) {
                    for j in 0..w {
                        grad[b + j] += row[j];
                    }
                }
            }
            let wt = &p[s.weight..s.weight + s.fan_in * w];
            {
                let gw = &mut grad[s.weight..s.weight + s.fan_in * w];
                for i in 0..rows {
                    let arow = &c.input[i * s.fan_in..(i + 1) * s.fan_in];
                    let drow = &dz[i * w..(i + 1) * w];
                    for (k, &a) in arow.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        for (gv, &d) in gw[k * w..(k + 1) * w].iter_mut().zip(drow) {
                            *gv += a * d;
                        }
                    }
                }
            }
            upstream = if li > 0 {
                let mut da = vec![0.0; rows * s.fan_in];
                for i in 0..rows {
                    let drow = &dz[i * w..(i + 1) * w];
                    for k in 0..s.fan_in {
                        da[i * s.fan_in + k] = wt[k * w..(k + 1) * w].iter().zip(drow).map(|(a, b)| a * b).sum();
                    }
                }
                da
            } else {
                Vec::new()
            };
        }
        Ok((loss, grad, stats))
    }

    /// Pre-activation values of every hidden unit for `x` in training mode;
    /// gradient checks use this to stay clear of the ReLU kink.
    pub fn min_abs_pre_activation(&self, x: &Matrix, rng: &mut Rng) -> f64 {
        let (_, caches, _) = self.pass(x, Mode::Train, Some(rng));
        caches
            .iter()
            .flat_map(|c| c.pre_act.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Whether the batch-norm running statistics are all finite.
    pub fn running_stats_finite(&self) -> bool {
        self.running_mean.iter().chain(&self.running_var).flatten().all(|v| v.is_finite())
    }

    pub(crate) fn from_parts(
        spec: ArchitectureSpec,
        input_dim: usize,
        params: Vec<f64>,
        running_mean: Vec<Vec<f64>>,
        running_var: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut m = Mlp::new(spec, input_dim, 0)?;
        if params.len() != m.params.len()
            || running_mean.len() != m.running_mean.len()
            || running_var.len() != m.running_var.len()
            || running_mean.iter().zip(&m.running_mean).any(|(a, b)| a.len() != b.len())
            || running_var.iter().zip(&m.running_var).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::Model("parameter vector does not match architecture".into()));
        }
        m.params = params;
        m.running_mean = running_mean;
        m.running_var = running_var;
        Ok(m)
    }
}
