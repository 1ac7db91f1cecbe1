//! Batch exploration agents.
//!
//! Every agent proposes `B` distinct policies per iteration and then
//! observes the rewards of that batch. All three start from a uniform
//! random draw of the candidate grid.

use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch_runner::RunRecord;
use crate::error::{Error, Result};
use crate::gp::GpParams;
use crate::policy_space::{CandidateSet, Policy};

mod experiment;
mod ga;
mod pg;
mod ulcb;

pub use experiment::{run_experiment, top_policies, ExperimentOutcome, ExperimentSettings, NearestRun, TopPolicy};
pub use ga::{ga_next, roulette_probabilities, roulette_select, GaAgent, GaConfig, GaSettings};
pub use pg::{pg_gradient, pg_loss, pg_propose, pg_train, softmax, PgAgent, PgConfig, PgSettings};
pub use ulcb::{ulcb_propose, ulcb_select, UlcbAgent, UlcbConfig, UlcbSettings};

pub type AgentRng = ChaCha8Rng;

/// Maps rewards onto `[0, 1]` so the best reward gets fitness 1 and the
/// worst 0. A constant input maps to 0.5 everywhere.
pub fn fitness_normalize(rewards: &[f64]) -> Vec<f64> {
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0.5; rewards.len()];
    }
    rewards.iter().map(|r| (r - lo) / range).collect()
}

pub trait Agent {
    fn name(&self) -> &'static str;

    /// Proposes the policies of the next batch. They are pairwise distinct.
    fn propose(&mut self, rng: &mut AgentRng) -> Result<Vec<Policy>>;

    /// Feeds back the successfully evaluated results of the last batch.
    fn observe(&mut self, results: &[(Policy, f64)]) -> Result<()>;
}

/// Agent kind and its tuning, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    GpUlcb(UlcbSettings),
    Genetic(GaSettings),
    PolicyGradient(PgSettings),
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::GpUlcb(_) => "gp_ulcb",
            AgentSpec::Genetic(_) => "genetic",
            AgentSpec::PolicyGradient(_) => "policy_gradient",
        }
    }

    pub fn build(&self, batch_size: usize, gp: &GpParams, candidates: CandidateSet) -> Result<Box<dyn Agent>> {
        Ok(match self {
            AgentSpec::GpUlcb(s) => Box::new(UlcbAgent::new(UlcbConfig::new(batch_size, s, *gp)?, candidates)?),
            AgentSpec::Genetic(s) => {
                let lower = candidates
                    .points()
                    .iter()
                    .map(|p| p.itn().min(p.irs()))
                    .fold(1.0, f64::min);
                Box::new(GaAgent::new(GaConfig::new(batch_size, s, lower)?, candidates)?)
            }
            AgentSpec::PolicyGradient(s) => Box::new(PgAgent::new(PgConfig::new(batch_size, s)?, candidates)?),
        })
    }
}

/// Append-only log of evaluated runs.
#[derive(Debug, Clone, Default)]
pub struct History {
    records: Vec<RunRecord>,
    keys: HashSet<(usize, usize)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: RunRecord) -> Result<()> {
        if !self.keys.insert((record.batch, record.proposal)) {
            return Err(Error::Domain(format!(
                "duplicate record for batch {} proposal {}",
                record.batch, record.proposal
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = RunRecord>) -> Result<()> {
        records.into_iter().try_for_each(|r| self.push(r))
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// (policy, reward) of every successful record, in record order.
    pub fn observations(&self) -> Vec<(Policy, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.reward.map(|v| (r.policy, v)))
            .collect()
    }

    /// Running maximum of reward over successful records.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.records
            .iter()
            .filter_map(|r| r.reward)
            .map(|v| {
                best = best.max(v);
                best
            })
            .collect()
    }
}

impl TryFrom<Vec<RunRecord>> for History {
    type Error = Error;

    fn try_from(records: Vec<RunRecord>) -> Result<Self> {
        let mut h = History::new();
        h.extend(records)?;
        Ok(h)
    }
}
