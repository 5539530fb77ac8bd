//! Feed-forward network engine: dense layers, four activations, dropout,
//! batch normalization, class-weighted cross-entropy and mini-batch training
//! with early stopping.

mod loss;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{weighted_bce, weighted_bce_logits, ClassWeights};
pub use mlp::{BatchStats, Mlp, Mode};
pub use train::{train, train_monitored, ClassWeighting, EarlyStopping, EpochLog, OptimizerKind, TrainConfig, TrainReport};

pub const ALLOWED_WIDTHS: [usize; 4] = [16, 32, 64, 128];
pub const MAX_DEPTH: usize = 5;
pub const MAX_DROPOUT: f64 = 0.5;

pub const ELU_ALPHA: f64 = 1.0;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Elu,
    Selu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::Relu, Activation::Elu, Activation::Selu, Activation::Tanh];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    ELU_ALPHA * x.exp_m1()
                }
            }
            Activation::Selu => {
                SELU_LAMBDA * if x > 0.0 { x } else { SELU_ALPHA * x.exp_m1() }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => (x > 0.0) as u8 as f64,
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    ELU_ALPHA * x.exp()
                }
            }
            Activation::Selu => SELU_LAMBDA * if x > 0.0 { 1.0 } else { SELU_ALPHA * x.exp() },
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Standard deviation of the fan-in-scaled normal initializer.
    pub fn init_std(self, fan_in: usize) -> f64 {
        let gain = match self {
            Activation::Relu | Activation::Elu => 2.0,
            Activation::Selu | Activation::Tanh => 1.0,
        };
        (gain / fan_in as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub hidden_layer_widths: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub batch_norm: bool,
}

impl ArchitectureSpec {
    /// The single 64-unit ELU layer with 30% dropout and batch norm.
    pub fn reference() -> Self {
        Self {
            hidden_layer_widths: vec![64],
            activation: Activation::Elu,
            dropout_rate: 0.3,
            batch_norm: true,
        }
    }

    pub fn depth(&self) -> usize {
        self.hidden_layer_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.depth();
        if !(1..=MAX_DEPTH).contains(&d) {
            return Err(Error::Config(format!("depth {d} outside 1..={MAX_DEPTH}")));
        }
        if let Some(w) = self.hidden_layer_widths.iter().find(|w| !ALLOWED_WIDTHS.contains(w)) {
            return Err(Error::Config(format!("width {w} not in {ALLOWED_WIDTHS:?}")));
        }
        if !(0.0..=MAX_DROPOUT).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, {MAX_DROPOUT}]",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Trainable parameter count. Dense layers feeding batch norm carry no
    /// bias (the shift parameter replaces it).
    pub fn parameter_count(&self, input_dim: usize) -> usize {
        let mut fan_in = input_dim;
        let mut total = 0;
        for &w in &self.hidden_layer_widths {
            total += fan_in * w + if self.batch_norm { 2 * w } else { w };
            fan_in = w;
        }
        total + fan_in + 1
    }
}
