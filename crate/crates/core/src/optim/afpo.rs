//! Age-Fitness Pareto Optimization.
//!
//! Each generation keeps the non-dominated front on (loss, age), refills the
//! population with mutated copies of the survivors, ages everyone by one and
//! injects one fresh random genome of age 0. The lowest-loss genome is always
//! on the front, so the best loss never increases.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::physics::StiffnessBounds;
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvoConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_sigma: f64,
    pub seed: u64,
    pub bounds: StiffnessBounds,
    /// Single-point crossover between two survivors before mutation.
    pub crossover: bool,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 1000,
            mutation_sigma: 0.1,
            seed: 0,
            bounds: StiffnessBounds::default(),
            crossover: false,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config {
                what: "population must be at least 2",
                value: self.population as f64,
            });
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::Config {
                what: "mutation_sigma must be non-negative",
                value: self.mutation_sigma,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub age: u32,
    /// Non-finite losses are stored as `+inf`.
    pub loss: f64,
}

impl Individual {
    fn dominates(&self, other: &Individual) -> bool {
        self.loss <= other.loss && self.age <= other.age && (self.loss < other.loss || self.age < other.age)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_loss: f64,
    pub mean_loss: f64,
    pub front_size: usize,
    pub min_gene: f64,
    pub max_gene: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvoOutcome {
    pub population: Vec<Individual>,
    /// Non-dominated front of the final population, sorted by loss.
    pub pareto: Vec<Individual>,
    pub best: Individual,
    /// Entry 0 describes the initial population.
    pub history: Vec<GenerationRecord>,
}

/// Runs AFPO on genomes of length `n`. `evaluate` maps a batch of genomes to
/// their losses, in order.
pub fn afpo_evolve(
    n: usize,
    config: &EvoConfig,
    mut evaluate: impl FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
    mut observe: impl FnMut(&GenerationRecord),
) -> Result<EvoOutcome> {
    config.validate()?;
    let bounds = config.bounds;
    let mut init_rng = rng::stream(config.seed, Stream::Init);
    let mut mut_rng = rng::stream(config.seed, Stream::Mutation);
    let noise = Normal::new(0.0, config.mutation_sigma).map_err(|_| Error::Config {
        what: "mutation_sigma must be non-negative",
        value: config.mutation_sigma,
    })?;

    let genomes: Vec<Vec<f64>> = (0..config.population)
        .map(|_| rng::uniform_design(&mut init_rng, n, bounds))
        .collect();
    let mut population = scored(&genomes, vec_of_ages(config.population, 0), &mut evaluate)?;
    let mut history = Vec::with_capacity(config.generations + 1);
    let record = summarize(0, &population, pareto_front(&population).len());
    observe(&record);
    history.push(record);

    for generation in 1..=config.generations {
        let mut survivors = pareto_front(&population);
        let front_size = survivors.len();
        survivors.truncate(config.population - 1);

        let mut children = Vec::new();
        let mut child_ages = Vec::new();
        while survivors.len() + children.len() < config.population - 1 {
            let a = &survivors[mut_rng.random_range(0..survivors.len())];
            let (mut genome, age) = if config.crossover && survivors.len() > 1 && n > 1 {
                let b = &survivors[mut_rng.random_range(0..survivors.len())];
                let cut = mut_rng.random_range(1..n);
                let mut g = a.genome[..cut].to_vec();
                g.extend_from_slice(&b.genome[cut..]);
                (g, a.age.max(b.age))
            } else {
                (a.genome.clone(), a.age)
            };
            for k in &mut genome {
                *k += noise.sample(&mut mut_rng);
            }
            bounds.clamp(&mut genome);
            children.push(genome);
            child_ages.push(age);
        }
        let children = scored(&children, child_ages, &mut evaluate)?;

        population = survivors;
        population.extend(children);
        for ind in &mut population {
            ind.age += 1;
        }
        let fresh = rng::uniform_design(&mut init_rng, n, bounds);
        population.extend(scored(&[fresh], vec_of_ages(1, 0), &mut evaluate)?);

        let record = summarize(generation, &population, front_size);
        observe(&record);
        history.push(record);
    }

    let pareto = pareto_front(&population);
    let best = pareto[0].clone();
    Ok(EvoOutcome {
        population,
        pareto,
        best,
        history,
    })
}

fn vec_of_ages(n: usize, age: u32) -> Vec<u32> {
    alloc::vec![age; n]
}

fn scored(
    genomes: &[Vec<f64>],
    ages: Vec<u32>,
    evaluate: &mut impl FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
) -> Result<Vec<Individual>> {
    if genomes.is_empty() {
        return Ok(Vec::new());
    }
    let losses = evaluate(genomes)?;
    if losses.len() != genomes.len() {
        return Err(Error::LengthMismatch {
            expected: genomes.len(),
            got: losses.len(),
        });
    }
    Ok(genomes
        .iter()
        .zip(losses)
        .zip(ages)
        .map(|((g, loss), age)| Individual {
            genome: g.clone(),
            age,
            loss: if loss.is_finite() { loss } else { f64::INFINITY },
        })
        .collect())
}

/// Members not dominated on (loss, age), sorted by loss, then age, then
/// original position.
pub(crate) fn pareto_front(population: &[Individual]) -> Vec<Individual> {
    let mut front: Vec<(usize, &Individual)> = population
        .iter()
        .enumerate()
        .filter(|(_, p)| !population.iter().any(|q| q.dominates(p)))
        .collect();
    front.sort_by(|(i, a), (j, b)| a.loss.total_cmp(&b.loss).then(a.age.cmp(&b.age)).then(i.cmp(j)));
    front.into_iter().map(|(_, p)| p.clone()).collect()
}

fn summarize(generation: usize, population: &[Individual], front_size: usize) -> GenerationRecord {
    let best_loss = population.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
    let mean_loss = population.iter().map(|p| p.loss).sum::<f64>() / population.len() as f64;
    let genes = population.iter().flat_map(|p| p.genome.iter().copied());
    let (min_gene, max_gene) = genes.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
    GenerationRecord {
        generation,
        best_loss,
        mean_loss,
        front_size,
        min_gene,
        max_gene,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sphere(genomes: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(genomes
            .iter()
            .map(|g| g.iter().map(|k| (k - 3.0) * (k - 3.0)).sum())
            .collect())
    }

    fn config(generations: usize) -> EvoConfig {
        EvoConfig {
            population: 12,
            generations,
            mutation_sigma: 0.3,
            seed: 5,
            ..EvoConfig::default()
        }
    }

    #[test]
    fn elitism_bounds_and_size() {
        let out = afpo_evolve(4, &config(40), sphere, |_| {}).unwrap();
        assert_eq!(out.history.len(), 41);
        assert!(out.history.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
        assert!(out.history.iter().all(|r| r.min_gene >= 1.0 && r.max_gene <= 10.0));
        assert_eq!(out.population.len(), 12);
        assert!(out.history.last().unwrap().best_loss < out.history[0].best_loss);
        assert_eq!(out.best.loss, out.history.last().unwrap().best_loss);
    }

    #[test]
    fn replay_is_bitwise() {
        let a = afpo_evolve(4, &config(15), sphere, |_| {}).unwrap();
        let b = afpo_evolve(4, &config(15), sphere, |_| {}).unwrap();
        assert_eq!(a, b);
        let mut c = config(15);
        c.crossover = true;
        let c1 = afpo_evolve(4, &c, sphere, |_| {}).unwrap();
        let c2 = afpo_evolve(4, &c, sphere, |_| {}).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn zero_generations_keeps_initial_best() {
        let out = afpo_evolve(3, &config(0), sphere, |_| {}).unwrap();
        let init_best = sphere(&out.population.iter().map(|p| p.genome.clone()).collect::<Vec<_>>())
            .unwrap()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.best.loss, init_best);
    }

    #[test]
    fn zero_sigma_only_selects() {
        let mut cfg = config(10);
        cfg.mutation_sigma = 0.0;
        let out = afpo_evolve(3, &cfg, sphere, |_| {}).unwrap();
        assert!(out.history.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
    }

    #[test]
    fn front_and_dominance() {
        let ind = |loss, age| Individual {
            genome: vec![],
            age,
            loss,
        };
        let pop = vec![ind(1.0, 5), ind(2.0, 0), ind(2.0, 6), ind(0.5, 9), ind(1.0, 5)];
        let front = pareto_front(&pop);
        let pairs: Vec<(f64, u32)> = front.iter().map(|p| (p.loss, p.age)).collect();
        assert_eq!(pairs, vec![(0.5, 9), (1.0, 5), (1.0, 5), (2.0, 0)]);
    }

    #[test]
    fn rejects_tiny_population() {
        let mut cfg = config(1);
        cfg.population = 1;
        assert!(afpo_evolve(2, &cfg, sphere, |_| {}).is_err());
    }
}
