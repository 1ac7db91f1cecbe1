//! Batch policy gradient over a tabular softmax: one logit per candidate.
//!
//! Note the ε convention: with probability ε a pick is *greedy* (largest
//! logit among the remaining candidates), otherwise uniform random. ε = 1
//! is pure exploitation.

use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fitness_normalize, Agent, AgentRng};
use crate::error::{Error, Result};
use crate::policy_space::{CandidateSet, Policy};

fn default_epsilon() -> f64 {
    0.5
}

fn default_learning_rate() -> f64 {
    0.05
}

fn default_epochs() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgSettings {
    /// Probability of a greedy pick.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

impl Default for PgSettings {
    fn default() -> Self {
        PgSettings {
            epsilon: default_epsilon(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgConfig {
    pub batch_size: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl PgConfig {
    pub fn new(batch_size: usize, s: &PgSettings) -> Result<Self> {
        let cfg = PgConfig {
            batch_size,
            epsilon: s.epsilon,
            learning_rate: s.learning_rate,
            epochs: s.epochs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("policy gradient batch size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn log_normalizer(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|w| (w - max).exp()).sum::<f64>().ln()
}

/// `L(w) = −Σ_j g_j log softmax(w)[idx_j]` over `(candidate index, g)`
/// pairs.
pub fn pg_loss(logits: &[f64], targets: &[(usize, f64)]) -> f64 {
    let lse = log_normalizer(logits);
    -targets.iter().map(|(i, g)| g * (logits[*i] - lse)).sum::<f64>()
}

/// `∂L/∂w_k = G·p_k − Σ_{j: idx_j = k} g_j` with `G = Σ_j g_j`.
pub fn pg_gradient(logits: &[f64], targets: &[(usize, f64)]) -> Vec<f64> {
    let total: f64 = targets.iter().map(|(_, g)| g).sum();
    let mut grad: Vec<f64> = softmax(logits).into_iter().map(|p| total * p).collect();
    for (i, g) in targets {
        grad[*i] -= g;
    }
    grad
}

/// Trains `logits` on one batch of `(candidate index, reward)`. Rewards are
/// min-max normalised within the batch first. On a non-finite gradient the
/// logits are left untouched.
pub fn pg_train(logits: &mut [f64], batch: &[(usize, f64)], cfg: &PgConfig) -> Result<()> {
    if let Some((i, _)) = batch.iter().find(|(i, _)| *i >= logits.len()) {
        return Err(Error::Domain(format!("candidate index {i} out of range {}", logits.len())));
    }
    if batch.is_empty() {
        return Ok(());
    }
    let rewards: Vec<f64> = batch.iter().map(|(_, r)| *r).collect();
    let targets: Vec<(usize, f64)> = batch
        .iter()
        .map(|(i, _)| *i)
        .zip(fitness_normalize(&rewards))
        .collect();

    let mut w = logits.to_vec();
    for epoch in 0..cfg.epochs {
        let grad = pg_gradient(&w, &targets);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite policy gradient at epoch {epoch}")));
        }
        for (wk, gk) in w.iter_mut().zip(&grad) {
            *wk -= cfg.learning_rate * gk;
        }
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite logits after training".into()));
    }
    logits.copy_from_slice(&w);
    Ok(())
}

/// Proposes `B` distinct available candidates by sequential ε-greedy draws
/// without replacement.
pub fn pg_propose<R: Rng + ?Sized>(
    logits: &[f64],
    candidates: &CandidateSet,
    cfg: &PgConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if logits.len() != candidates.len() {
        return Err(Error::Domain(format!(
            "{} logits for {} candidates",
            logits.len(),
            candidates.len()
        )));
    }
    let mut working = candidates.available_indices();
    if working.len() < cfg.batch_size {
        return Err(Error::Domain(format!(
            "batch size {} exceeds {} available candidates",
            cfg.batch_size,
            working.len()
        )));
    }
    let mut picks = Vec::with_capacity(cfg.batch_size);
    for j in 0..cfg.batch_size {
        let greedy = rng.random::<f64>() < cfg.epsilon;
        let slot = if greedy {
            // working stays in candidate order, so the first maximum wins ties
            let mut best = 0;
            for (s, &i) in working.iter().enumerate() {
                if logits[i] > logits[working[best]] {
                    best = s;
                }
            }
            best
        } else {
            rng.random_range(0..working.len())
        };
        let chosen = working.remove(slot);
        debug!(
            "PG pick {j}: {} candidate={chosen} logit={:.6}",
            if greedy { "greedy" } else { "random" },
            logits[chosen]
        );
        picks.push(chosen);
    }
    Ok(picks)
}

pub struct PgAgent {
    cfg: PgConfig,
    candidates: CandidateSet,
    logits: Vec<f64>,
    trained: bool,
}

impl PgAgent {
    pub fn new(cfg: PgConfig, candidates: CandidateSet) -> Result<Self> {
        cfg.validate()?;
        if cfg.batch_size > candidates.len() {
            return Err(Error::Config(format!(
                "batch size {} exceeds {} candidates",
                cfg.batch_size,
                candidates.len()
            )));
        }
        let logits = vec![0.0; candidates.len()];
        Ok(PgAgent {
            cfg,
            candidates,
            logits,
            trained: false,
        })
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    /// The candidate a fully greedy (ε = 1) pick would choose.
    pub fn top_candidate(&self) -> Policy {
        let mut best = 0;
        for (i, w) in self.logits.iter().enumerate() {
            if *w > self.logits[best] {
                best = i;
            }
        }
        self.candidates.point(best)
    }
}

impl Agent for PgAgent {
    fn name(&self) -> &'static str {
        "policy_gradient"
    }

    fn propose(&mut self, rng: &mut AgentRng) -> Result<Vec<Policy>> {
        let picks = if self.trained {
            pg_propose(&self.logits, &self.candidates, &self.cfg, rng)?
        } else {
            debug!("PG: random initialisation batch");
            self.candidates.sample_random_indices(self.cfg.batch_size, rng)?
        };
        Ok(picks.into_iter().map(|i| self.candidates.point(i)).collect())
    }

    fn observe(&mut self, results: &[(Policy, f64)]) -> Result<()> {
        let batch = results
            .iter()
            .map(|(p, r)| {
                self.candidates
                    .index_of(p)
                    .map(|i| (i, *r))
                    .ok_or_else(|| Error::Domain(format!("policy {p} is not a candidate")))
            })
            .collect::<Result<Vec<_>>>()?;
        pg_train(&mut self.logits, &batch, &self.cfg)?;
        self.trained |= !batch.is_empty();
        Ok(())
    }
}
