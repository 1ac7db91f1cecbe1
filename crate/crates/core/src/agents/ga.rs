//! Genetic algorithm: roulette-wheel parent selection, uniform
//! per-component crossover, sparse Gaussian mutation.

use log::debug;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{fitness_normalize, Agent, AgentRng};
use crate::error::{Error, Result};
use crate::policy_space::{CandidateSet, Policy};

const MAX_REDRAWS: usize = 1000;

fn default_mutation_probability() -> f64 {
    0.3
}

fn default_mutation_sd() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSettings {
    /// Per-component probability of adding noise to a child.
    #[serde(default = "default_mutation_probability")]
    pub mutation_probability: f64,
    #[serde(default = "default_mutation_sd")]
    pub mutation_sd: f64,
}

impl Default for GaSettings {
    fn default() -> Self {
        GaSettings {
            mutation_probability: default_mutation_probability(),
            mutation_sd: default_mutation_sd(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub batch_size: usize,
    pub mutation_probability: f64,
    pub mutation_sd: f64,
    /// Children are clamped into `[min_coverage, 1]`.
    pub min_coverage: f64,
}

impl GaConfig {
    pub fn new(batch_size: usize, s: &GaSettings, min_coverage: f64) -> Result<Self> {
        let cfg = GaConfig {
            batch_size,
            mutation_probability: s.mutation_probability,
            mutation_sd: s.mutation_sd,
            min_coverage,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("genetic algorithm needs a batch size of at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return Err(Error::Config(format!(
                "mutation probability must lie in [0, 1], got {}",
                self.mutation_probability
            )));
        }
        if !(self.mutation_sd > 0.0 && self.mutation_sd.is_finite()) {
            return Err(Error::Config(format!("mutation sd must be positive, got {}", self.mutation_sd)));
        }
        if !(self.min_coverage > 0.0 && self.min_coverage < 1.0) {
            return Err(Error::Config(format!("min coverage must lie in (0, 1), got {}", self.min_coverage)));
        }
        Ok(())
    }
}

/// Selection probabilities proportional to fitness. Uniform when every
/// fitness is equal or the total is zero.
pub fn roulette_probabilities(fitness: &[f64]) -> Vec<f64> {
    let n = fitness.len();
    let total: f64 = fitness.iter().sum();
    let all_equal = fitness.windows(2).all(|w| w[0] == w[1]);
    if all_equal || !(total > 0.0) {
        return vec![1.0 / n as f64; n];
    }
    fitness.iter().map(|f| f / total).collect()
}

/// Spins the wheel once.
pub fn roulette_select<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probabilities.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left the cumulative sum just under 1
    last_positive
}

fn mutate<R: Rng + ?Sized>(x: f64, force: bool, cfg: &GaConfig, noise: &Normal<f64>, rng: &mut R) -> f64 {
    let hit = rng.random::<f64>() < cfg.mutation_probability;
    if hit || force {
        (x + noise.sample(rng)).clamp(cfg.min_coverage, 1.0)
    } else {
        x
    }
}

/// Breeds the next generation from the previous batch's rewards.
///
/// Each child takes each component from one of two roulette-selected
/// parents at random, then mutates. A child that duplicates an earlier
/// child of the same generation is redrawn with forced mutation.
pub fn ga_next<R: Rng + ?Sized>(prev_batch: &[(Policy, f64)], cfg: &GaConfig, rng: &mut R) -> Result<Vec<Policy>> {
    cfg.validate()?;
    if prev_batch.len() < 2 {
        return Err(Error::Domain(format!(
            "genetic step needs at least 2 evaluated parents, got {}",
            prev_batch.len()
        )));
    }
    let rewards: Vec<f64> = prev_batch.iter().map(|(_, r)| *r).collect();
    let probs = roulette_probabilities(&fitness_normalize(&rewards));
    let noise = Normal::new(0.0, cfg.mutation_sd).expect("validated sd");

    let mut children: Vec<Policy> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let mut redraws = 0;
        let child = loop {
            let a = prev_batch[roulette_select(&probs, rng)].0;
            let b = prev_batch[roulette_select(&probs, rng)].0;
            let itn = if rng.random::<bool>() { a.itn() } else { b.itn() };
            let irs = if rng.random::<bool>() { a.irs() } else { b.irs() };
            let force = redraws > 0;
            let child = Policy::new(
                mutate(itn, force, cfg, &noise, rng),
                mutate(irs, force, cfg, &noise, rng),
            )?;
            if !children.contains(&child) {
                break child;
            }
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(Error::Domain("could not breed a distinct child".into()));
            }
        };
        children.push(child);
    }
    Ok(children)
}

pub struct GaAgent {
    cfg: GaConfig,
    candidates: CandidateSet,
    parents: Vec<(Policy, f64)>,
}

impl GaAgent {
    pub fn new(cfg: GaConfig, candidates: CandidateSet) -> Result<Self> {
        cfg.validate()?;
        if cfg.batch_size > candidates.len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds {} candidates",
                cfg.batch_size,
                candidates.len()
            )));
        }
        Ok(GaAgent {
            cfg,
            candidates,
            parents: Vec::new(),
        })
    }
}

impl Agent for GaAgent {
    fn name(&self) -> &'static str {
        "genetic"
    }

    fn propose(&mut self, rng: &mut AgentRng) -> Result<Vec<Policy>> {
        if self.parents.len() < 2 {
            debug!("GA: random generation ({} usable parents)", self.parents.len());
            return self.candidates.sample_random(self.cfg.batch_size, rng);
        }
        ga_next(&self.parents, &self.cfg, rng)
    }

    fn observe(&mut self, results: &[(Policy, f64)]) -> Result<()> {
        self.parents = results.to_vec();
        Ok(())
    }
}
