//! Generational genetic search with elitism. The loop is generic over a
//! [`Genome`]; [`ArchGenome`] searches network architectures and the
//! baseline tuners plug in their own hyperparameter genomes.

mod arch;

use std::collections::HashMap;
use std::fmt::Debug;
use std::io::Write;

use log::{debug, warn};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream, Rng};

pub use arch::{run_nas, ArchGenome, NasOutcome, DROPOUT_MAX};

pub trait Genome: Clone + Debug + PartialEq + Send + Sync {
    /// Every gene uniform over its legal domain.
    fn random(rng: &mut Rng) -> Self;
    /// Gene-wise uniform crossover.
    fn crossover(&self, other: &Self, rng: &mut Rng) -> Self;
    /// Each gene independently resampled with probability `rate`.
    fn mutate(&self, rate: f64, rng: &mut Rng) -> Self;
    /// Size of the decoded model; smaller wins ties in ranking.
    fn complexity(&self) -> usize;
    /// Identity used for memoizing fitness.
    fn key(&self) -> String;
    fn csv_header() -> Vec<&'static str>;
    fn csv_fields(&self) -> Vec<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub population_size: usize,
    pub generations: usize,
    pub elite_count: usize,
    pub mutation_rate: f64,
    pub candidate_epochs: usize,
    pub seed: u64,
    /// Reuse the fitness of a genome already evaluated in this search.
    pub memoize: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            generations: 15,
            elite_count: 5,
            mutation_rate: 0.1,
            candidate_epochs: 30,
            seed: 42,
            memoize: true,
        }
    }
}

impl SearchConfig {
    /// The baseline tuners' budget: 30 members per generation.
    pub fn baseline_tuning(seed: u64) -> Self {
        Self { population_size: 30, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 || self.generations == 0 || self.candidate_epochs == 0 {
            return Err(Error::Config(
                "population_size >= 2, generations >= 1 and candidate_epochs >= 1 required".into(),
            ));
        }
        if self.elite_count == 0 || self.elite_count >= self.population_size {
            return Err(Error::Config(format!(
                "elite_count {} must be in 1..{}",
                self.elite_count, self.population_size
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!("mutation_rate {} outside [0,1]", self.mutation_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate<G> {
    /// Slot index within the generation.
    pub id: usize,
    pub genome: G,
    /// NaN fitness is stored as negative infinity.
    pub fitness: f64,
    /// False for carried-over elites and memoized genomes.
    pub trained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord<G> {
    pub generation: usize,
    pub best_fitness: f64,
    /// Mean over candidates with finite fitness.
    pub mean_fitness: f64,
    /// Population in ranked order.
    pub population: Vec<Candidate<G>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult<G> {
    pub best: G,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord<G>>,
    /// Number of actual fitness-function calls.
    pub evaluations: usize,
}

impl<G: Genome> SearchResult<G> {
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let mut header = vec!["generation", "candidate_id"];
        header.extend(G::csv_header());
        header.extend(["fitness", "trained"]);
        w.write_record(&header)?;
        for g in &self.history {
            for c in &g.population {
                let mut row = vec![g.generation.to_string(), c.id.to_string()];
                row.extend(c.genome.csv_fields());
                row.push(c.fitness.to_string());
                row.push(c.trained.to_string());
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("search history", e))?;
        Ok(())
    }
}

/// Ranks by fitness descending, then complexity ascending, then slot.
fn rank<G: Genome>(pop: &[(G, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| {
        pop[b]
            .1
            .total_cmp(&pop[a].1)
            .then(pop[a].0.complexity().cmp(&pop[b].0.complexity()))
            .then(a.cmp(&b))
    });
    idx
}

/// Runs the generational loop. `fitness` receives the genome and a seed
/// derived from (search seed, generation, slot), so results do not depend
/// on evaluation order.
pub fn evolve<G, F>(config: &SearchConfig, fitness: F) -> Result<SearchResult<G>>
where
    G: Genome,
    F: Fn(&G, u64) -> f64 + Sync,
{
    config.validate()?;
    let mut rng = rng_from(config.seed, &[stream::NAS]);
    let n = config.population_size;
    let mut members: Vec<(G, Option<f64>)> = (0..n).map(|_| (G::random(&mut rng), None)).collect();
    let mut memo: HashMap<String, f64> = HashMap::new();
    let mut history = Vec::with_capacity(config.generations);
    let mut evaluations = 0;

    for generation in 0..config.generations {
        let mut trained = vec![false; n];
        let mut pending = Vec::new();
        for (slot, (g, f)) in members.iter_mut().enumerate() {
            if f.is_none() && config.memoize {
                *f = memo.get(&g.key()).copied();
            }
            if f.is_none() {
                pending.push(slot);
            }
        }
        let scores: Vec<f64> = pending
            .par_iter()
            .map(|&slot| {
                let seed = derive_seed(config.seed, &[generation as u64, slot as u64]);
                fitness(&members[slot].0, seed)
            })
            .collect();
        evaluations += pending.len();
        for (&slot, s) in pending.iter().zip(scores) {
            let s = if s.is_nan() {
                warn!("generation {generation} slot {slot}: fitness is NaN, treated as -inf");
                f64::NEG_INFINITY
            } else {
                s
            };
            members[slot].1 = Some(s);
            trained[slot] = true;
            if config.memoize {
                memo.entry(members[slot].0.key()).or_insert(s);
            }
        }

        let scored: Vec<(G, f64)> = members.iter().map(|(g, f)| (g.clone(), f.unwrap())).collect();
        let order = rank(&scored);
        let finite: Vec<f64> = scored.iter().map(|c| c.1).filter(|f| f.is_finite()).collect();
        let mean_fitness = if finite.is_empty() {
            f64::NEG_INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let record = GenerationRecord {
            generation,
            best_fitness: scored[order[0]].1,
            mean_fitness,
            population: order
                .iter()
                .map(|&i| Candidate { id: i, genome: scored[i].0.clone(), fitness: scored[i].1, trained: trained[i] })
                .collect(),
        };
        debug!("generation {generation}: best {:.5} mean {:.5}", record.best_fitness, record.mean_fitness);
        history.push(record);

        if generation + 1 < config.generations {
            let elites: Vec<(G, Option<f64>)> =
                order[..config.elite_count].iter().map(|&i| (scored[i].0.clone(), Some(scored[i].1))).collect();
            let mut next = elites.clone();
            while next.len() < n {
                let a = &elites[rng.random_range(0..elites.len())].0;
                let b = &elites[rng.random_range(0..elites.len())].0;
                let child = a.crossover(b, &mut rng).mutate(config.mutation_rate, &mut rng);
                next.push((child, None));
            }
            members = next;
        }
    }

    let last = history.last().expect("at least one generation");
    Ok(SearchResult {
        best: last.population[0].genome.clone(),
        best_fitness: last.best_fitness,
        history,
        evaluations,
    })
}
