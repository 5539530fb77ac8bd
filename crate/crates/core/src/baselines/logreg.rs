use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, solve, Matrix};
use crate::neural::ClassWeights;

/// L2-regularized logistic regression. The bias is not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub max_iterations: usize,
    /// Stop once the gradient norm falls to this value.
    pub tolerance: f64,
    pub class_weights: ClassWeights,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-6, class_weights: ClassWeights::UNIT }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl LinearModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.bias + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_logits(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::Shape(format!("{} columns, model has {} weights", x.cols(), self.weights.len())));
        }
        Ok((0..x.rows()).map(|i| self.decision(x.row(i))).collect())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict_logits(x)?.into_iter().map(sigmoid).collect())
    }
}

struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    w: ClassWeights,
    l2: f64,
}

impl Problem<'_> {
    /// Parameters are `[weights..., bias]`.
    fn objective(&self, theta: &[f64]) -> f64 {
        let d = self.x.cols();
        let n = self.x.rows() as f64;
        let mut loss = 0.0;
        for i in 0..self.x.rows() {
            let z = theta[d] + self.x.row(i).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            // Stable softplus form of the cross-entropy.
            let l = if self.y[i] == 1 { softplus(-z) } else { softplus(z) };
            loss += self.w.of(self.y[i]) * l;
        }
        loss / n + 0.5 * self.l2 * theta[..d].iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient_hessian(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.x.cols();
        let k = d + 1;
        let n = self.x.rows() as f64;
        let mut g = vec![0.0; k];
        let mut h = vec![0.0; k * k];
        let mut row = vec![1.0; k];
        for i in 0..self.x.rows() {
            row[..d].copy_from_slice(self.x.row(i));
            let z = theta[d] + row[..d].iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
            let p = sigmoid(z);
            let wi = self.w.of(self.y[i]);
            let r = wi * (p - self.y[i] as f64);
            let c = wi * p * (1.0 - p);
            for a in 0..k {
                if row[a] == 0.0 {
                    continue;
                }
                g[a] += r * row[a];
                let ca = c * row[a];
                for b in a..k {
                    h[a * k + b] += ca * row[b];
                }
            }
        }
        for a in 0..k {
            g[a] /= n;
            for b in a..k {
                h[a * k + b] /= n;
                h[b * k + a] = h[a * k + b];
            }
        }
        for a in 0..d {
            g[a] += self.l2 * theta[a];
            h[a * k + a] += self.l2;
        }
        (g, h)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes mean class-weighted cross-entropy plus `l2 * |w|^2 / 2` with
/// damped Newton steps (backtracking line search, Levenberg damping when the
/// Hessian is singular). Stops at gradient norm <= tolerance or the
/// iteration cap; a cap hit returns the best iterate with a warning.
pub fn train_logreg(x: &Matrix, y: &[u8], l2: f64, config: &LogRegConfig) -> Result<LogRegFit> {
    if x.rows() == 0 {
        return Err(Error::Empty("training set"));
    }
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::Config(format!("l2 strength {l2} must be finite and >= 0")));
    }
    let problem = Problem { x, y, w: config.class_weights, l2 };
    let d = x.cols();
    let mut theta = vec![0.0; d + 1];
    let mut f = problem.objective(&theta);
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let (g, h) = problem.gradient_hessian(&theta);
        gnorm = norm(&g);
        if gnorm <= config.tolerance {
            break;
        }
        iterations += 1;
        let mut damping = 0.0;
        let step = loop {
            let mut hd = h.clone();
            for a in 0..=d {
                hd[a * (d + 1) + a] += damping;
            }
            match solve(hd, g.clone()) {
                Ok(s) if s.iter().all(|v| v.is_finite()) => break s,
                _ => damping = if damping == 0.0 { 1e-8 } else { damping * 10.0 },
            }
            if damping > 1e8 {
                return Err(Error::Singular("logistic regression Hessian"));
            }
        };
        let slope: f64 = -g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let fc = problem.objective(&cand);
            if fc <= f + 1e-4 * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable decrease left: we are at the optimum to machine precision.
            gnorm = norm(&problem.gradient_hessian(&theta).0);
            break;
        }
    }
    if iterations == config.max_iterations {
        gnorm = norm(&problem.gradient_hessian(&theta).0);
    }
    let converged = gnorm <= config.tolerance;
    if !converged {
        warn!("logistic regression stopped at gradient norm {gnorm:.3e} after {iterations} iterations");
    }
    let bias = theta.pop().unwrap();
    Ok(LogRegFit { model: LinearModel { weights: theta, bias, l2 }, iterations, gradient_norm: gnorm, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auroc;
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn data(rows: usize, seed: u64, separable: bool) -> (Matrix, Vec<u8>) {
        let mut r = rng_from(seed, &[]);
        let mut v = Vec::new();
        let mut y = Vec::new();
        for _ in 0..rows {
            let a: f64 = r.random_range(-1.0..1.0);
            let b: f64 = r.random_range(-1.0..1.0);
            v.extend([a, b]);
            let label = if separable { a - b > 0.0 } else { r.random_bool(sigmoid(2.0 * a - b)) };
            y.push(label as u8);
        }
        (Matrix::from_vec(rows, 2, v).unwrap(), y)
    }

    #[test]
    fn separable_data_is_ranked_perfectly() {
        let (x, y) = data(200, 1, true);
        let fit = train_logreg(&x, &y, 1e-4, &LogRegConfig::default()).unwrap();
        let auc = auroc(&fit.model.predict_proba(&x).unwrap(), &y).unwrap();
        assert!(auc >= 0.99, "{auc}");
        assert!(fit.converged);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let (x, y) = data(500, 2, false);
        let cfg = LogRegConfig { class_weights: ClassWeights { negative: 1.0, positive: 3.0 }, ..Default::default() };
        let fit = train_logreg(&x, &y, 0.01, &cfg).unwrap();
        assert!(fit.converged && fit.gradient_norm <= 1e-6);
        // Independent check by central differences of the objective.
        let p = Problem { x: &x, y: &y, w: cfg.class_weights, l2: 0.01 };
        let mut theta = fit.model.weights.clone();
        theta.push(fit.model.bias);
        for k in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            assert!(((p.objective(&up) - p.objective(&dn)) / 2e-6).abs() < 1e-6);
        }
    }

    #[test]
    fn huge_penalty_predicts_weighted_base_rate() {
        let (x, y) = data(400, 3, false);
        let w = ClassWeights::inverse_frequency(&y);
        let cfg = LogRegConfig { class_weights: w, ..Default::default() };
        let fit = train_logreg(&x, &y, 1e6, &cfg).unwrap();
        assert!(fit.model.weights.iter().all(|v| v.abs() < 1e-5));
        let pos: f64 = y.iter().map(|&l| w.of(l) * l as f64).sum();
        let total: f64 = y.iter().map(|&l| w.of(l)).sum();
        for p in fit.model.predict_proba(&x).unwrap() {
            assert!((p - pos / total).abs() < 1e-4);
        }
    }

    #[test]
    fn deterministic() {
        let (x, y) = data(300, 4, false);
        let a = train_logreg(&x, &y, 0.1, &LogRegConfig::default()).unwrap();
        let b = train_logreg(&x, &y, 0.1, &LogRegConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]
        #[test]
        fn duplicated_feature_gets_equal_weights(seed in any::<u64>(), l2 in 1e-3f64..1.0) {
            let (x, y) = data(150, seed, false);
            let dup: Vec<f64> = (0..x.rows()).flat_map(|i| [x.get(i, 0), x.get(i, 1), x.get(i, 0)]).collect();
            let xd = Matrix::from_vec(x.rows(), 3, dup).unwrap();
            let fit = train_logreg(&xd, &y, l2, &LogRegConfig::default()).unwrap();
            let w = &fit.model.weights;
            prop_assert!((w[0] - w[2]).abs() < 1e-6, "{w:?}");
        }
    }
}
