//! Comparison allocators: uniform random actions and a genetic algorithm
//! over per-vehicle action schedules.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{run_episode, ActionTuple, Env, EnvConfig, Policy};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng, Stream};
use crate::sps::Rri;

/// Uniform RRI, uniform power in `[0, p_max]`.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, p_max_w: f64) -> ActionTuple {
    let gamma = *Rri::ALL.choose(rng).expect("non-empty");
    ActionTuple { gamma, power_w: rng.random_range(0.0..=p_max_w) }
}

/// [`random_policy`] with one random stream per vehicle, so a vehicle's
/// k-th action is the same in every run sharing the seed.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rngs: Vec<SimRng>,
    p_max_w: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, n_vehicles: usize, p_max_w: f64) -> Self {
        Self { rngs: rng::substreams(seed, Stream::Policy, n_vehicles), p_max_w }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _env: &Env, vehicle: usize) -> Result<ActionTuple> {
        Ok(random_policy(&mut self.rngs[vehicle], self.p_max_w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability.
    pub mutation_prob: f64,
    /// Std of the Gaussian power mutation, as a fraction of `P_max`.
    pub mutation_sigma: f64,
    pub elitism: usize,
    pub tournament: usize,
    /// Decision epochs encoded per vehicle; later epochs reuse the last gene.
    pub genes_per_vehicle: usize,
    pub fitness_horizon_slots: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 60,
            crossover_prob: 0.9,
            mutation_prob: 0.1,
            mutation_sigma: 0.1,
            elitism: 2,
            tournament: 3,
            genes_per_vehicle: 16,
            fitness_horizon_slots: 5000,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::config("ga.population", "must be >= 2"));
        }
        for (name, p) in [("ga.crossover_prob", self.crossover_prob), ("ga.mutation_prob", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        if self.elitism > self.population {
            return Err(Error::config("ga.elitism", "must not exceed the population"));
        }
        if self.tournament == 0 {
            return Err(Error::config("ga.tournament", "must be >= 1"));
        }
        if self.genes_per_vehicle == 0 {
            return Err(Error::config("ga.genes_per_vehicle", "must be >= 1"));
        }
        if !(self.mutation_sigma >= 0.0) {
            return Err(Error::config("ga.mutation_sigma", "must be >= 0"));
        }
        if self.fitness_horizon_slots == 0 {
            return Err(Error::config("ga.fitness_horizon_slots", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    /// Index into [`Rri::ALL`].
    pub gamma: u8,
    pub power_w: f64,
}

/// One action per (vehicle, decision epoch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: Vec<Vec<Gene>>,
}

impl Chromosome {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_vehicles: usize, genes_per_vehicle: usize, p_max_w: f64) -> Self {
        let genes = (0..n_vehicles)
            .map(|_| {
                (0..genes_per_vehicle)
                    .map(|_| Gene { gamma: rng.random_range(0..3), power_w: rng.random_range(0.0..=p_max_w) })
                    .collect()
            })
            .collect();
        Self { genes }
    }

    pub fn in_bounds(&self, p_max_w: f64) -> bool {
        self.genes.iter().flatten().all(|g| g.gamma < 3 && (0.0..=p_max_w).contains(&g.power_w))
    }
}

pub fn ga_policy_apply(chromosome: &Chromosome, vehicle: usize, epoch: usize) -> ActionTuple {
    let row = &chromosome.genes[vehicle];
    let g = row[epoch.min(row.len() - 1)];
    ActionTuple { gamma: Rri::ALL[usize::from(g.gamma)], power_w: g.power_w }
}

/// Plays a chromosome as a lookup table.
#[derive(Debug, Clone)]
pub struct ChromosomePolicy(pub Chromosome);

impl Policy for ChromosomePolicy {
    fn act(&mut self, env: &Env, vehicle: usize) -> Result<ActionTuple> {
        Ok(ga_policy_apply(&self.0, vehicle, env.epoch_index(vehicle)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub best: Chromosome,
    pub best_fitness: f64,
    pub history: Vec<GenerationStats>,
}

/// Maximizes `fitness` over chromosomes of `n_vehicles` rows. Generation 0
/// is random; later generations are elites plus tournament-selected,
/// uniformly crossed and mutated children. Fitness is evaluated in parallel
/// and must be deterministic for the elite to be monotone.
pub fn ga_optimize<F>(cfg: &GaConfig, n_vehicles: usize, p_max_w: f64, seed: u64, fitness: F) -> Result<GaOutcome>
where
    F: Fn(&Chromosome) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let mut rng = rng::stream(seed, Stream::Genetic);
    let mut pop: Vec<Chromosome> =
        (0..cfg.population).map(|_| Chromosome::random(&mut rng, n_vehicles, cfg.genes_per_vehicle, p_max_w)).collect();
    let mut scores = evaluate(&pop, &fitness)?;
    let mut history = Vec::with_capacity(cfg.generations + 1);
    history.push(stats(0, &scores));
    let sigma = Normal::new(0.0, cfg.mutation_sigma * p_max_w).map_err(|e| Error::Invalid(e.to_string()))?;
    for generation in 1..=cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut next: Vec<Chromosome> = order[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_scores: Vec<Option<f64>> = order[..cfg.elitism].iter().map(|&i| Some(scores[i])).collect();
        while next.len() < cfg.population {
            let a = tournament(&scores, cfg.tournament, &mut rng);
            let b = tournament(&scores, cfg.tournament, &mut rng);
            let mut child = if rng.random_bool(cfg.crossover_prob) {
                uniform_crossover(&pop[a], &pop[b], &mut rng)
            } else {
                pop[a].clone()
            };
            mutate(&mut child, cfg.mutation_prob, &sigma, p_max_w, &mut rng);
            next.push(child);
            next_scores.push(None);
        }
        let fresh: Vec<usize> = (0..next.len()).filter(|&i| next_scores[i].is_none()).collect();
        let new_scores = fresh
            .par_iter()
            .map(|&i| checked(fitness(&next[i])))
            .collect::<Result<Vec<f64>>>()?;
        for (i, s) in fresh.into_iter().zip(new_scores) {
            next_scores[i] = Some(s);
        }
        pop = next;
        scores = next_scores.into_iter().map(|s| s.expect("all scored")).collect();
        history.push(stats(generation, &scores));
        log::debug!("ga generation {generation}: best {:.5}", history.last().unwrap().best_fitness);
    }
    let best = (0..pop.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).expect("population >= 2");
    Ok(GaOutcome { best: pop[best].clone(), best_fitness: scores[best], history })
}

/// GA over the simulator: fitness is the negative objective of one episode
/// of `fitness_horizon_slots` at the fixed `eval_seed`.
pub fn ga_optimize_env(env_cfg: &EnvConfig, cfg: &GaConfig, seed: u64, eval_seed: u64) -> Result<GaOutcome> {
    let mut env_cfg = env_cfg.clone();
    env_cfg.scenario.horizon_slots = cfg.fitness_horizon_slots;
    env_cfg.env.record_events = false;
    env_cfg.validate()?;
    let n = env_cfg.scenario.n_vehicles;
    let p_max = env_cfg.p_max_w();
    ga_optimize(cfg, n, p_max, seed, |c| {
        let mut env = Env::new(env_cfg.clone())?;
        let report = run_episode(&mut env, &mut ChromosomePolicy(c.clone()), eval_seed)?;
        Ok(-report.objective)
    })
}

fn checked(v: Result<f64>) -> Result<f64> {
    match v {
        Ok(x) if x.is_finite() => Ok(x),
        Ok(_) => Err(Error::NonFinite("GA fitness")),
        Err(e) => Err(e),
    }
}

fn evaluate<F>(pop: &[Chromosome], fitness: &F) -> Result<Vec<f64>>
where
    F: Fn(&Chromosome) -> Result<f64> + Sync,
{
    pop.par_iter().map(|c| checked(fitness(c))).collect()
}

fn stats(generation: usize, scores: &[f64]) -> GenerationStats {
    GenerationStats {
        generation,
        best_fitness: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_fitness: scores.iter().sum::<f64>() / scores.len() as f64,
    }
}

fn tournament<R: Rng + ?Sized>(scores: &[f64], size: usize, rng: &mut R) -> usize {
    let mut best = rng.random_range(0..scores.len());
    for _ in 1..size {
        let c = rng.random_range(0..scores.len());
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

fn uniform_crossover<R: Rng + ?Sized>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> Chromosome {
    let genes = a
        .genes
        .iter()
        .zip(&b.genes)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&ga, &gb)| if rng.random_bool(0.5) { ga } else { gb }).collect())
        .collect();
    Chromosome { genes }
}

fn mutate<R: Rng + ?Sized>(c: &mut Chromosome, p: f64, sigma: &Normal<f64>, p_max_w: f64, rng: &mut R) {
    if p == 0.0 {
        return;
    }
    for g in c.genes.iter_mut().flatten() {
        if rng.random_bool(p) {
            g.gamma = rng.random_range(0..3);
        }
        if rng.random_bool(p) {
            g.power_w = (g.power_w + sigma.sample(rng)).clamp(0.0, p_max_w);
        }
    }
}
