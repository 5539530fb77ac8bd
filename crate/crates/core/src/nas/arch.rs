use log::{info, warn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{evolve, Genome, SearchConfig, SearchResult};
use crate::error::Result;
use crate::features::{FeatureSet, FEATURE_COUNT};
use crate::metrics::auroc;
use crate::neural::{train, Activation, ArchitectureSpec, Mlp, TrainConfig, TrainReport, ALLOWED_WIDTHS, MAX_DEPTH};
use crate::rng::{derive_seed, stream, Rng};

pub const DROPOUT_MAX: f64 = 0.5;

/// Architecture genome. All five width genes are always present; only the
/// first `depth` are expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchGenome {
    pub depth: usize,
    pub widths: [usize; MAX_DEPTH],
    pub activation: Activation,
    pub dropout: f64,
    pub batch_norm: bool,
}

fn random_width(rng: &mut Rng) -> usize {
    ALLOWED_WIDTHS[rng.random_range(0..ALLOWED_WIDTHS.len())]
}

fn random_activation(rng: &mut Rng) -> Activation {
    Activation::ALL[rng.random_range(0..Activation::ALL.len())]
}

fn random_dropout(rng: &mut Rng) -> f64 {
    rng.random_range(0.0..=DROPOUT_MAX)
}

impl ArchGenome {
    pub fn decode(&self) -> ArchitectureSpec {
        ArchitectureSpec {
            hidden_layer_widths: self.widths[..self.depth].to_vec(),
            activation: self.activation,
            dropout_rate: self.dropout,
            batch_norm: self.batch_norm,
        }
    }

    /// Inverse of [`decode`](Self::decode); inactive width genes are set to the smallest width.
    pub fn encode(spec: &ArchitectureSpec) -> Self {
        let mut widths = [ALLOWED_WIDTHS[0]; MAX_DEPTH];
        widths[..spec.depth()].copy_from_slice(&spec.hidden_layer_widths);
        Self {
            depth: spec.depth(),
            widths,
            activation: spec.activation,
            dropout: spec.dropout_rate,
            batch_norm: spec.batch_norm,
        }
    }
}

impl Genome for ArchGenome {
    fn random(rng: &mut Rng) -> Self {
        let depth = rng.random_range(1..=MAX_DEPTH);
        let mut widths = [0; MAX_DEPTH];
        widths.iter_mut().for_each(|w| *w = random_width(rng));
        Self {
            depth,
            widths,
            activation: random_activation(rng),
            dropout: random_dropout(rng),
            batch_norm: rng.random_bool(0.5),
        }
    }

    fn crossover(&self, other: &Self, rng: &mut Rng) -> Self {
        let mut pick = || rng.random_bool(0.5);
        let mut widths = self.widths;
        for (w, &o) in widths.iter_mut().zip(&other.widths) {
            if !pick() {
                *w = o;
            }
        }
        Self {
            depth: if pick() { self.depth } else { other.depth },
            widths,
            activation: if pick() { self.activation } else { other.activation },
            dropout: if pick() { self.dropout } else { other.dropout },
            batch_norm: if pick() { self.batch_norm } else { other.batch_norm },
        }
    }

    fn mutate(&self, rate: f64, rng: &mut Rng) -> Self {
        let mut g = self.clone();
        if rng.random_bool(rate) {
            g.depth = rng.random_range(1..=MAX_DEPTH);
        }
        for w in g.widths.iter_mut() {
            if rng.random_bool(rate) {
                *w = random_width(rng);
            }
        }
        if rng.random_bool(rate) {
            g.activation = random_activation(rng);
        }
        if rng.random_bool(rate) {
            g.dropout = random_dropout(rng);
        }
        if rng.random_bool(rate) {
            g.batch_norm = rng.random_bool(0.5);
        }
        g
    }

    fn complexity(&self) -> usize {
        self.decode().parameter_count(FEATURE_COUNT)
    }

    fn key(&self) -> String {
        format!(
            "{:?}|{:?}|{}|{}",
            &self.widths[..self.depth],
            self.activation,
            self.dropout.to_bits(),
            self.batch_norm
        )
    }

    fn csv_header() -> Vec<&'static str> {
        vec!["depth", "widths", "activation", "dropout", "batch_norm", "parameters"]
    }

    fn csv_fields(&self) -> Vec<String> {
        let widths: Vec<String> = self.widths[..self.depth].iter().map(|w| w.to_string()).collect();
        vec![
            self.depth.to_string(),
            widths.join("-"),
            format!("{:?}", self.activation),
            format!("{:.6}", self.dropout),
            self.batch_norm.to_string(),
            self.complexity().to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct NasOutcome {
    pub search: SearchResult<ArchGenome>,
    pub report: TrainReport,
}

/// Searches architectures by validation AUROC of candidates trained for
/// `candidate_epochs` on the training split, then retrains the winner.
pub fn run_nas(
    train_set: &FeatureSet,
    validation: &FeatureSet,
    search: &SearchConfig,
    train_cfg: &TrainConfig,
) -> Result<NasOutcome> {
    let dim = train_set.x.cols();
    let candidate_cfg = TrainConfig { max_epochs: search.candidate_epochs, patience: None, ..train_cfg.clone() };
    let fitness = |g: &ArchGenome, seed: u64| -> f64 {
        let cfg = TrainConfig { seed, ..candidate_cfg.clone() };
        let run = Mlp::new(g.decode(), dim, seed)
            .and_then(|m| train(m, &train_set.x, &train_set.labels, None, &cfg))
            .and_then(|r| auroc(&r.mlp.predict_proba(&validation.x)?, &validation.labels));
        match run {
            Ok(a) => a,
            Err(e) => {
                warn!("candidate {:?} failed: {e}", g.decode());
                f64::NAN
            }
        }
    };
    let result = evolve(search, fitness)?;
    info!(
        "search finished: best {:?} validation AUROC {:.4} after {} trainings",
        result.best.decode(),
        result.best_fitness,
        result.evaluations
    );
    let seed = derive_seed(train_cfg.seed, &[stream::FINAL_TRAIN]);
    let mlp = Mlp::new(result.best.decode(), dim, seed)?;
    let report = train(
        mlp,
        &train_set.x,
        &train_set.labels,
        Some((&validation.x, &validation.labels)),
        &TrainConfig { seed, ..train_cfg.clone() },
    )?;
    Ok(NasOutcome { search: result, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;

    #[test]
    fn random_genome_marginals() {
        let mut r = rng_from(1, &[]);
        let n = 10_000;
        let mut counts = [0usize; 4];
        let mut dropout = 0.0;
        for _ in 0..n {
            let g = ArchGenome::random(&mut r);
            counts[ALLOWED_WIDTHS.iter().position(|&w| w == g.widths[0]).unwrap()] += 1;
            dropout += g.dropout;
            assert!(g.decode().validate().is_ok());
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((0.2..=0.3).contains(&f), "{f}");
        }
        assert!((dropout / n as f64 - 0.25).abs() < 0.01);
        assert_eq!(ArchGenome::random(&mut rng_from(5, &[])), ArchGenome::random(&mut rng_from(5, &[])));
    }

    fn distinct_parents() -> (ArchGenome, ArchGenome) {
        let a = ArchGenome { depth: 1, widths: [16; 5], activation: Activation::Relu, dropout: 0.1, batch_norm: false };
        let b = ArchGenome { depth: 5, widths: [128; 5], activation: Activation::Tanh, dropout: 0.4, batch_norm: true };
        (a, b)
    }

    #[test]
    fn crossover_contract() {
        let (a, b) = distinct_parents();
        let mut r = rng_from(2, &[]);
        assert_eq!(a.crossover(&a, &mut r), a);
        let n = 10_000;
        let mut from_a = [0usize; 9];
        for _ in 0..n {
            let c = a.crossover(&b, &mut r);
            assert!(c.depth == 1 || c.depth == 5);
            let genes = [
                c.depth == a.depth,
                c.widths[0] == a.widths[0],
                c.widths[1] == a.widths[1],
                c.widths[2] == a.widths[2],
                c.widths[3] == a.widths[3],
                c.widths[4] == a.widths[4],
                c.activation == a.activation,
                c.dropout == a.dropout,
                c.batch_norm == a.batch_norm,
            ];
            for (k, &g) in genes.iter().enumerate() {
                from_a[k] += g as usize;
            }
        }
        for c in from_a {
            let f = c as f64 / n as f64;
            assert!((f - 0.5).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn mutation_rates() {
        let mut r = rng_from(3, &[]);
        let (a, _) = distinct_parents();
        assert_eq!(a.mutate(0.0, &mut r), a);
        let n = 10_000;
        let mut changed = [0usize; 5];
        for _ in 0..n {
            let m = a.mutate(0.1, &mut r);
            changed[0] += (m.depth != a.depth) as usize;
            changed[1] += (m.widths[2] != a.widths[2]) as usize;
            changed[2] += (m.activation != a.activation) as usize;
            changed[3] += (m.dropout != a.dropout) as usize;
            changed[4] += (m.batch_norm != a.batch_norm) as usize;
        }
        let expected = [0.1 * 0.8, 0.1 * 0.75, 0.1 * 0.75, 0.1, 0.1 * 0.5];
        for (c, e) in changed.iter().zip(expected) {
            let f = *c as f64 / n as f64;
            assert!((f - e).abs() <= 0.01, "{f} vs {e}");
        }
        // Rate 1: depth is redrawn uniformly.
        let mut depths = [0usize; 5];
        for _ in 0..n {
            depths[a.mutate(1.0, &mut r).depth - 1] += 1;
        }
        assert!(depths.iter().all(|&c| (c as f64 / n as f64 - 0.2).abs() < 0.02));
    }

    #[test]
    fn constant_fitness_keeps_elites() {
        let cfg = SearchConfig { generations: 15, ..SearchConfig::default() };
        let res = evolve(&cfg, |_: &ArchGenome, _| 0.5).unwrap();
        assert_eq!(res.history.len(), 15);
        for w in res.history.windows(2) {
            assert_eq!(w[1].best_fitness, 0.5);
            let prev: Vec<_> = w[0].population[..5].iter().map(|c| &c.genome).collect();
            for g in prev {
                assert!(w[1].population.iter().any(|c| &c.genome == g));
            }
        }
        assert!(res.history.iter().all(|g| g.population.len() == 20));
    }

    #[test]
    fn parameter_minimization_finds_smallest_network() {
        for seed in 0..5 {
            let cfg = SearchConfig { seed, ..SearchConfig::default() };
            let res = evolve(&cfg, |g: &ArchGenome, _| -(g.complexity() as f64)).unwrap();
            let spec = res.best.decode();
            assert_eq!(spec.hidden_layer_widths, vec![16], "seed {seed}: {spec:?}");
            for w in res.history.windows(2) {
                assert!(w[1].best_fitness >= w[0].best_fitness);
            }
        }
    }

    #[test]
    fn nan_fitness_becomes_negative_infinity() {
        let cfg = SearchConfig { generations: 2, ..SearchConfig::default() };
        let res = evolve(&cfg, |g: &ArchGenome, _| if g.batch_norm { f64::NAN } else { 1.0 }).unwrap();
        for c in &res.history[0].population {
            assert_eq!(c.fitness, if c.genome.batch_norm { f64::NEG_INFINITY } else { 1.0 });
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let cfg = SearchConfig { generations: 4, ..SearchConfig::default() };
        let f = |g: &ArchGenome, seed: u64| g.dropout + (seed % 97) as f64 * 1e-3;
        let a = evolve(&cfg, f).unwrap();
        let b = evolve(&cfg, f).unwrap();
        assert_eq!(a, b);
        let memo_off = evolve(&SearchConfig { memoize: false, ..cfg.clone() }, f).unwrap();
        assert!(memo_off.evaluations >= a.evaluations);
    }

    #[test]
    fn history_csv_has_one_row_per_candidate() {
        let cfg = SearchConfig { generations: 3, ..SearchConfig::default() };
        let res = evolve(&cfg, |g: &ArchGenome, _| g.dropout).unwrap();
        let mut buf = Vec::new();
        res.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "generation,candidate_id,depth,widths,activation,dropout,batch_norm,parameters,fitness,trained"
        );
        assert_eq!(lines.count(), 60);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig { elite_count: 20, ..SearchConfig::default() }.validate().is_err());
        assert!(SearchConfig { mutation_rate: 1.5, ..SearchConfig::default() }.validate().is_err());
        assert!(SearchConfig::default().validate().is_ok());
    }

    #[test]
    fn encode_decode_roundtrip() {
        let spec = ArchitectureSpec::reference();
        assert_eq!(ArchGenome::encode(&spec).decode(), spec);
    }

    proptest! {
        #[test]
        fn every_bred_genome_is_valid(seed in any::<u64>(), steps in 1usize..30, rate in 0.0f64..=1.0) {
            let mut r = rng_from(seed, &[]);
            let mut a = ArchGenome::random(&mut r);
            let mut b = ArchGenome::random(&mut r);
            for _ in 0..steps {
                let c = a.crossover(&b, &mut r).mutate(rate, &mut r);
                prop_assert!(c.decode().validate().is_ok());
                b = a;
                a = c;
            }
        }
    }
}
