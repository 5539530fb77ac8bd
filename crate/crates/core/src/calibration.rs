//! Platt scaling: a two-parameter logistic map from a model's log-odds to a
//! calibrated probability, fitted on the validation split.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{logit, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

impl PlattCalibrator {
    pub const IDENTITY: PlattCalibrator = PlattCalibrator { a: 1.0, b: 0.0 };

    /// Calibrated probability for a log-odds score.
    pub fn apply(&self, score: f64) -> f64 {
        sigmoid(self.a * score + self.b)
    }

    /// Calibrated probability for a raw probability (via its log-odds).
    pub fn apply_proba(&self, p: f64) -> f64 {
        self.apply(logit(p))
    }

    pub fn apply_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

pub fn apply_platt(c: &PlattCalibrator, score: f64) -> f64 {
    c.apply(score)
}

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

/// Negative log-likelihood of `sigmoid(a s + b)` against (possibly soft) targets.
fn nll(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let z = a * s + b;
            // t * softplus(-z) + (1 - t) * softplus(z)
            let sp = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
            t * sp(-z) + (1.0 - t) * sp(z)
        })
        .sum()
}

/// Maximum-likelihood Platt fit by Newton iterations with step halving.
///
/// When the scores separate the classes perfectly the likelihood has no
/// maximizer; the fit then falls back to Platt's prior-smoothed targets,
/// which keeps both parameters bounded.
pub fn fit_platt(scores: &[f64], labels: &[u8]) -> Result<PlattCalibrator> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("calibration scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let max_of = |c: u8| scores.iter().zip(labels).filter(|(_, &y)| y == c).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    let min_of = |c: u8| scores.iter().zip(labels).filter(|(_, &y)| y == c).map(|(s, _)| *s).fold(f64::INFINITY, f64::min);
    let separated = max_of(0) < min_of(1) || max_of(1) < min_of(0);
    let targets: Vec<f64> = if separated {
        warn!("calibration scores separate the classes; using smoothed targets");
        let hi = (pos as f64 + 1.0) / (pos as f64 + 2.0);
        let lo = 1.0 / (neg as f64 + 2.0);
        labels.iter().map(|&y| if y == 1 { hi } else { lo }).collect()
    } else {
        labels.iter().map(|&y| y as f64).collect()
    };

    let (mut a, mut b) = (1.0, 0.0);
    let mut f = nll(scores, &targets, a, b);
    for _ in 0..MAX_ITERATIONS {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = sigmoid(a * s + b);
            let r = p - t;
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let n = scores.len() as f64;
        if (ga * ga + gb * gb).sqrt() / n <= TOLERANCE {
            break;
        }
        // Tiny ridge keeps the 2x2 system solvable when all scores coincide.
        let (haa, hbb) = (haa + 1e-12, hbb + 1e-12);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det.abs() > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga / haa, gb / hbb)
        };
        let mut t = 1.0;
        let mut moved = false;
        while t >= 1e-10 {
            let (na, nb) = (a - t * da, b - t * db);
            let fc = nll(scores, &targets, na, nb);
            if fc <= f {
                let step = (t * da).abs().max((t * db).abs());
                a = na;
                b = nb;
                f = fc;
                moved = step > TOLERANCE;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Model("Platt fit diverged".into()));
    }
    if a <= 0.0 {
        warn!("Platt slope {a:.4} is not positive; calibration reverses or flattens the ranking");
    }
    Ok(PlattCalibrator { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{auroc, brier, max_calibration_gap, reliability_bins};
    use crate::rng::rng_from;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, Normal};

    fn simulate(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut r = rng_from(seed, &[]);
        let d = Normal::new(-1.0, 1.5).unwrap();
        let logits: Vec<f64> = (0..n).map(|_| d.sample(&mut r)).collect();
        let labels = logits.iter().map(|&z| r.random_bool(sigmoid(z)) as u8).collect();
        (logits, labels)
    }

    #[test]
    fn calibrated_scores_give_identity() {
        let (s, y) = simulate(50_000, 1);
        let c = fit_platt(&s, &y).unwrap();
        assert!((c.a - 1.0).abs() < 0.05 && c.b.abs() < 0.05, "{c:?}");
    }

    #[test]
    fn inflated_scores_are_shrunk() {
        let (s, y) = simulate(50_000, 2);
        let inflated: Vec<f64> = s.iter().map(|v| v * 3.0).collect();
        let c = fit_platt(&inflated, &y).unwrap();
        assert!((c.a - 1.0 / 3.0).abs() < 0.02, "{c:?}");

        let raw: Vec<f64> = inflated.iter().map(|&z| sigmoid(z)).collect();
        let cal = c.apply_all(&inflated);
        assert!(brier(&cal, &y).unwrap() < brier(&raw, &y).unwrap());
        let gap_raw = max_calibration_gap(&reliability_bins(&raw, &y, 10).unwrap());
        let gap_cal = max_calibration_gap(&reliability_bins(&cal, &y, 10).unwrap());
        assert!(gap_cal <= 0.5 * gap_raw, "{gap_cal} vs {gap_raw}");
        assert_eq!(auroc(&raw, &y).unwrap(), auroc(&cal, &y).unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        assert!(matches!(fit_platt(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn separation_falls_back_to_bounded_fit() {
        let s = [-2.0, -1.0, 1.0, 2.0];
        let c = fit_platt(&s, &[0, 0, 1, 1]).unwrap();
        assert!(c.a.is_finite() && c.a > 0.0 && c.a < 10.0, "{c:?}");
    }

    #[test]
    fn identity_maps_zero_to_half() {
        assert_eq!(apply_platt(&PlattCalibrator::IDENTITY, 0.0), 0.5);
        assert!((PlattCalibrator::IDENTITY.apply_proba(0.3) - 0.3).abs() < 1e-12);
    }

    proptest! {
        // Domain keeps a*s+b well inside the range where the sigmoid is not 1.0 in f64.
        #[test]
        fn positive_slope_is_strictly_monotone(a in 0.01f64..2.0, b in -3.0f64..3.0, s1 in -10.0f64..10.0, d in 1e-3f64..5.0) {
            let c = PlattCalibrator { a, b };
            prop_assert!(c.apply(s1) < c.apply(s1 + d));
        }

        #[test]
        fn calibration_preserves_auroc(seed in any::<u64>(), n in 20usize..300) {
            let (s, y) = simulate(n, seed);
            prop_assume!(y.contains(&1) && y.contains(&0));
            let c = fit_platt(&s, &y).unwrap();
            prop_assume!(c.a > 0.0);
            // Ranks survive exactly unless two distinct scores collapse to the same double.
            let cal = c.apply_all(&s);
            let mut pairs: Vec<(f64, f64)> = s.iter().copied().zip(cal.iter().copied()).collect();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            prop_assume!(pairs.windows(2).all(|w| w[0].0 == w[1].0 || w[0].1 < w[1].1));
            prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&cal, &y).unwrap());
        }
    }
}
