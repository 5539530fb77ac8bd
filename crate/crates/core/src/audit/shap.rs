use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureGroup;
use crate::linalg::{sigmoid, solve, Matrix};
use crate::model::RiskModel;
use crate::rng::{rng_from, stream, Rng};

/// Scale the attributions are expressed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapOutput {
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    /// Number of coalitions evaluated per instance.
    pub budget: usize,
    pub seed: u64,
    pub output: ShapOutput,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self { budget: 2048, seed: 42, output: ShapOutput::Probability }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub attributions: Vec<f64>,
    /// Mean model output over the background.
    pub base_value: f64,
    pub model_output: f64,
    pub budget_used: usize,
    /// Every coalition was enumerated, so the attributions are exact.
    pub exhaustive: bool,
}

/// Coalitions are bit masks; bit `j` set means feature `j` takes the
/// instance's value.
type Mask = u64;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of one coalition of size `k` among `d` players.
fn kernel_weight(d: usize, k: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, k) * k as f64 * (d - k) as f64)
}

fn coalitions(d: usize, budget: usize, rng: &mut Rng) -> (Vec<(Mask, f64)>, bool) {
    if d < 63 && budget as u128 >= (1u128 << d) - 2 {
        let all = (1..(1u64 << d) - 1).map(|m| (m, kernel_weight(d, m.count_ones() as usize))).collect();
        return (all, true);
    }
    // Sizes drawn from the kernel's size distribution; each draw is paired
    // with its complement and all draws carry equal weight.
    let size_w: Vec<f64> = (1..d).map(|k| (d - 1) as f64 / (k * (d - k)) as f64).collect();
    let total: f64 = size_w.iter().sum();
    let mut counts: HashMap<Mask, f64> = HashMap::new();
    let mut order: Vec<Mask> = Vec::new();
    for _ in 0..budget.div_ceil(2) {
        let mut u = rng.random::<f64>() * total;
        let mut k = d - 1;
        for (i, w) in size_w.iter().enumerate() {
            if u < *w {
                k = i + 1;
                break;
            }
            u -= w;
        }
        let mask: Mask = sample(rng, d, k).iter().fold(0, |m, j| m | (1 << j));
        let full: Mask = (1u64 << d) - 1;
        for m in [mask, full ^ mask] {
            let e = counts.entry(m).or_insert_with(|| {
                order.push(m);
                0.0
            });
            *e += 1.0;
        }
    }
    (order.into_iter().map(|m| (m, counts[&m])).collect(), false)
}

struct ValueFn<'a> {
    model: &'a dyn RiskModel,
    instance: &'a [f64],
    background: &'a Matrix,
    output: ShapOutput,
}

impl ValueFn<'_> {
    /// Mean output over the background with coalition features fixed to the instance.
    fn eval(&self, masks: &[Mask]) -> Result<Vec<f64>> {
        const CHUNK: usize = 64;
        let d = self.instance.len();
        let nb = self.background.rows();
        let mut out = Vec::with_capacity(masks.len());
        for chunk in masks.chunks(CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * nb * d);
            for &m in chunk {
                for b in 0..nb {
                    let row = self.background.row(b);
                    data.extend((0..d).map(|j| if m >> j & 1 == 1 { self.instance[j] } else { row[j] }));
                }
            }
            let x = Matrix::from_vec(chunk.len() * nb, d, data)?;
            let logits = self.model.predict_logits(&x)?;
            for c in 0..chunk.len() {
                let vals = &logits[c * nb..(c + 1) * nb];
                let mean = match self.output {
                    ShapOutput::Logit => vals.iter().sum::<f64>() / nb as f64,
                    ShapOutput::Probability => vals.iter().map(|&z| sigmoid(z)).sum::<f64>() / nb as f64,
                };
                out.push(mean);
            }
        }
        Ok(out)
    }
}

/// Kernel SHAP: weighted least squares over coalitions with the Shapley
/// kernel, with local accuracy imposed as a hard constraint. When the
/// budget covers every coalition the result equals the exact Shapley values.
pub fn kernel_shap(
    model: &dyn RiskModel,
    instance: &[f64],
    background: &Matrix,
    config: &ShapConfig,
) -> Result<ShapExplanation> {
    let d = instance.len();
    if background.rows() == 0 {
        return Err(Error::Empty("SHAP background"));
    }
    if background.cols() != d {
        return Err(Error::Shape(format!("instance has {d} features, background {}", background.cols())));
    }
    if d == 0 || d > 62 {
        return Err(Error::Config(format!("kernel SHAP supports 1..=62 features, got {d}")));
    }
    let v = ValueFn { model, instance, background, output: config.output };
    let full: Mask = (1u64 << d) - 1;
    let ends = v.eval(&[0, full])?;
    let (base_value, model_output) = (ends[0], ends[1]);
    let total = model_output - base_value;
    if d == 1 {
        return Ok(ShapExplanation {
            attributions: vec![total],
            base_value,
            model_output,
            budget_used: 0,
            exhaustive: true,
        });
    }
    if config.budget < d + 2 {
        return Err(Error::Config(format!("SHAP budget {} must be >= features + 2 = {}", config.budget, d + 2)));
    }
    let mut rng = rng_from(config.seed, &[stream::SHAP]);
    let (coal, exhaustive) = coalitions(d, config.budget, &mut rng);
    let masks: Vec<Mask> = coal.iter().map(|c| c.0).collect();
    let values = v.eval(&masks)?;

    // Eliminate the last attribution through the constraint sum = total.
    let p = d - 1;
    let last = d - 1;
    let mut ata = vec![0.0; p * p];
    let mut atb = vec![0.0; p];
    let mut row = vec![0.0; p];
    for ((m, w), val) in coal.iter().zip(&values) {
        let zl = (m >> last & 1) as f64;
        for (j, r) in row.iter_mut().enumerate() {
            *r = (m >> j & 1) as f64 - zl;
        }
        let target = (val - base_value) - zl * total;
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            atb[a] += w * row[a] * target;
            for b in 0..p {
                ata[a * p + b] += w * row[a] * row[b];
            }
        }
    }
    let phi = solve(ata, atb).map_err(|_| Error::Singular("kernel SHAP system; increase the budget"))?;
    let mut attributions = phi;
    attributions.push(total - attributions.iter().sum::<f64>());
    Ok(ShapExplanation { attributions, base_value, model_output, budget_used: coal.len(), exhaustive })
}

/// `size` distinct rows of `x` chosen by `seed` (all rows when fewer).
pub fn sample_background(x: &Matrix, size: usize, seed: u64) -> Matrix {
    if size >= x.rows() {
        return x.clone();
    }
    let mut rng = rng_from(seed, &[stream::SHAP, 1]);
    let mut idx = sample(&mut rng, x.rows(), size).into_vec();
    idx.sort_unstable();
    x.select_rows(&idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAttribution {
    pub name: String,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapRanking {
    /// Per column, descending.
    pub features: Vec<RankedAttribution>,
    /// Per group, using mean |sum of the group's attributions|, descending.
    pub groups: Vec<RankedAttribution>,
    pub explanations: Vec<ShapExplanation>,
}

fn ranked(mut v: Vec<RankedAttribution>) -> Vec<RankedAttribution> {
    v.sort_by(|a, b| b.mean_abs.total_cmp(&a.mean_abs));
    v
}

/// Mean absolute attribution over a sample of instances.
pub fn shap_ranking(
    model: &dyn RiskModel,
    instances: &Matrix,
    background: &Matrix,
    names: &[&str],
    groups: &[FeatureGroup],
    config: &ShapConfig,
) -> Result<ShapRanking> {
    if instances.rows() == 0 {
        return Err(Error::Empty("SHAP instance sample"));
    }
    if names.len() != instances.cols() {
        return Err(Error::Shape(format!("{} names for {} features", names.len(), instances.cols())));
    }
    let explanations: Vec<ShapExplanation> = (0..instances.rows())
        .into_par_iter()
        .map(|i| {
            let cfg = ShapConfig { seed: crate::rng::derive_seed(config.seed, &[i as u64]), ..*config };
            kernel_shap(model, instances.row(i), background, &cfg)
        })
        .collect::<Result<_>>()?;
    let n = explanations.len() as f64;
    let features = names
        .iter()
        .enumerate()
        .map(|(j, name)| RankedAttribution {
            name: name.to_string(),
            mean_abs: explanations.iter().map(|e| e.attributions[j].abs()).sum::<f64>() / n,
        })
        .collect();
    let group_rows = groups
        .iter()
        .map(|g| RankedAttribution {
            name: g.name.to_string(),
            mean_abs: explanations
                .iter()
                .map(|e| e.attributions[g.columns.clone()].iter().sum::<f64>().abs())
                .sum::<f64>()
                / n,
        })
        .collect();
    Ok(ShapRanking { features: ranked(features), groups: ranked(group_rows), explanations })
}

/// Long-format rows: instance_id, feature, value, attribution.
pub fn write_shap_csv<W: Write>(out: W, instances: &Matrix, names: &[&str], explanations: &[ShapExplanation]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["instance_id", "feature", "value", "attribution"])?;
    for (i, e) in explanations.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            w.write_record([i.to_string(), name.to_string(), instances.get(i, j).to_string(), format!("{:.10}", e.attributions[j])])?;
        }
    }
    w.flush().map_err(|e| Error::io("shap csv", e))?;
    Ok(())
}
