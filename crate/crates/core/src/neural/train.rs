use log::{debug, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassWeights, Mlp};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::auroc;
use crate::rng::{rng_from, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassWeighting {
    None,
    /// Positive weight `n_neg / n_pos` from the training labels.
    InverseFrequency,
    Fixed(ClassWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// `None` disables early stopping; the final epoch's weights are kept.
    pub patience: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::final_retrain(42)
    }
}

impl TrainConfig {
    /// Candidate training inside the architecture search.
    pub fn search(seed: u64) -> Self {
        Self { max_epochs: 30, patience: None, ..Self::final_retrain(seed) }
    }

    pub fn final_retrain(seed: u64) -> Self {
        Self {
            max_epochs: 50,
            patience: Some(5),
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            class_weighting: ClassWeighting::InverseFrequency,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if let Some(p) = self.patience {
            if p == 0 || p >= self.max_epochs {
                return Err(Error::Config(format!(
                    "patience {p} must be in 1..{} (below max_epochs)",
                    self.max_epochs
                )));
            }
        }
        if let ClassWeighting::Fixed(w) = self.class_weighting {
            if !(w.negative > 0.0 && w.positive > 0.0) {
                return Err(Error::Config("class weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Tracks the best validation score and counts epochs without improvement.
/// Epochs are numbered from 1.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: Option<usize>,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: Option<usize>) -> Self {
        Self { patience, best: f64::NEG_INFINITY, best_epoch: 0, stale: 0 }
    }

    /// Records the score of `epoch`; returns `(improved, should_stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = score > self.best || self.best_epoch == 0;
        if improved {
            self.best = score;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        (improved, self.patience.is_some_and(|p| self.stale >= p))
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_score(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub mlp: Mlp,
    /// Epoch whose weights were kept (the last one when there is no validation set).
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_validation_score: Option<f64>,
    pub history: Vec<EpochLog>,
    pub class_weights: ClassWeights,
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        Self { kind, lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => params.iter_mut().zip(grad).for_each(|(p, g)| *p -= self.lr * g),
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.t);
                let c2 = 1.0 - Self::BETA2.powi(self.t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
                    self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
                    params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Mini-batch training with validation-AUROC early stopping. With a
/// validation set the weights from the best epoch are restored.
pub fn train(
    mlp: Mlp,
    train_x: &Matrix,
    train_y: &[u8],
    validation: Option<(&Matrix, &[u8])>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let validation = validation.filter(|(x, _)| x.rows() > 0);
    match validation {
        Some((vx, vy)) => {
            if vx.rows() != vy.len() {
                return Err(Error::Shape(format!("{} validation rows but {} labels", vx.rows(), vy.len())));
            }
            let single_class = vy.iter().all(|&y| y == vy[0]);
            if single_class {
                warn!("validation split has a single class; early stopping uses validation loss");
            }
            train_monitored(mlp, train_x, train_y, config, |m: &Mlp| {
                let p = m.predict_proba(vx)?;
                if single_class {
                    let (loss, _) = super::weighted_bce(&p, vy, ClassWeights::UNIT)?;
                    Ok(-loss)
                } else {
                    auroc(&p, vy)
                }
            })
        }
        None => train_monitored(mlp, train_x, train_y, config, |_: &Mlp| Ok(f64::NAN)),
    }
}

/// Training loop with an arbitrary per-epoch validation score (higher is
/// better). A NaN score means "no validation": nothing is restored and
/// training runs to `max_epochs`.
pub fn train_monitored<F>(
    mut mlp: Mlp,
    x: &Matrix,
    y: &[u8],
    config: &TrainConfig,
    mut score: F,
) -> Result<TrainReport>
where
    F: FnMut(&Mlp) -> Result<f64>,
{
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} training rows but {} labels", x.rows(), y.len())));
    }
    let weights = match config.class_weighting {
        ClassWeighting::None => ClassWeights::UNIT,
        ClassWeighting::InverseFrequency => ClassWeights::inverse_frequency(y),
        ClassWeighting::Fixed(w) => w,
    };
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng_from(config.seed, &[0x5_4a1e]);
    let mut dropout_rng: Rng = rng_from(config.seed, &[0xd_0900]);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, mlp.params().len());
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: Option<Mlp> = None;
    let mut history = Vec::with_capacity(config.max_epochs);

    // A trailing batch of one row would make batch statistics degenerate.
    let mut bounds: Vec<(usize, usize)> = (0..n).step_by(config.batch_size).map(|s| (s, (s + config.batch_size).min(n))).collect();
    if bounds.len() > 1 && bounds.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = bounds.pop().unwrap();
        bounds.last_mut().unwrap().1 = e;
    }

    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, &(s, e)) in bounds.iter().enumerate() {
            let idx = &order[s..e];
            let bx = x.select_rows(idx);
            let by: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
            let (loss, grad, stats) = mlp.loss_and_gradient(&bx, &by, weights, &mut dropout_rng)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            opt.step(mlp.params_mut(), &grad);
            mlp.update_running_stats(&stats);
            loss_sum += loss * (e - s) as f64;
        }
        epochs_run = epoch;
        let train_loss = loss_sum / n as f64;
        let s = score(&mlp)?;
        let validation_score = (!s.is_nan()).then_some(s);
        history.push(EpochLog { epoch, train_loss, validation_score });
        debug!("epoch {epoch}: loss {train_loss:.5} validation {validation_score:?}");
        if validation_score.is_some() {
            let (improved, stop) = stopper.observe(epoch, s);
            if improved {
                best = Some(mlp.clone());
            }
            if stop {
                break;
            }
        }
    }

    let (mlp, best_epoch, best_validation_score) = match best {
        Some(b) => (b, stopper.best_epoch(), Some(stopper.best_score())),
        None => (mlp, epochs_run, None),
    };
    Ok(TrainReport { mlp, best_epoch, epochs_run, best_validation_score, history, class_weights: weights })
}
